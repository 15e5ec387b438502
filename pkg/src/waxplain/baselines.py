"""Comparison attributions: MeanShift, Occlusion, Coupling, Uniform, Logistic, cluster shift."""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from sklearn.cluster import KMeans

from . import ot
from .dataset import as_matrix, check_same_dim
from .errors import DegenerateClusterError, DimensionMismatchError, NotConvergedError


def mean_shift(source, target):
    """Squared difference of per-feature means."""
    x, y = as_matrix(source), as_matrix(target)
    check_same_dim(x, y)
    return (x.mean(axis=0) - y.mean(axis=0)) ** 2


def occlusion(source, target, spec=None):
    """Drop in W_p when each feature is removed and the problem re-solved.

    Removing the only feature leaves a zero-dimensional problem, whose
    distance is taken as 0.
    """
    spec = spec or ot.WassersteinSpec()
    x, y = as_matrix(source), as_matrix(target)
    check_same_dim(x, y)
    full, _, _ = ot.wasserstein(x, y, spec)
    out = np.empty(x.shape[1])
    for i in range(x.shape[1]):
        reduced, _, _ = ot.wasserstein(np.delete(x, i, axis=1), np.delete(y, i, axis=1), spec)
        out[i] = full - reduced
    return out


def coupling_baseline(source, target, coupling):
    """Euclidean length of each coupled displacement, split by squared share.

    ``R_i = sum_kl gamma_kl ||d_kl|| * d_kli^2 / ||d_kl||^2`` with
    ``d_kl = x_k - y_l``.
    """
    x, y = as_matrix(source), as_matrix(target)
    check_same_dim(x, y)
    if (x.shape[0], y.shape[0]) != (coupling.n, coupling.m):
        raise DimensionMismatchError("data sizes do not match the coupling")
    diff = x[coupling.rows] - y[coupling.cols]
    norm = np.linalg.norm(diff, axis=1)
    moving = norm > 0
    weight = coupling.mass[moving] / norm[moving]
    return weight @ diff[moving] ** 2


def uniform_baseline(d):
    if d < 1:
        raise ValueError("d must be >= 1")
    return np.ones(d)


@dataclass(frozen=True)
class LogisticConfig:
    l2: float = 1e-2
    learning_rate: float = 1.0
    max_epochs: int = 10_000
    tol: float = 1e-8
    seed: int = 0


@dataclass
class LogisticModel:
    w: np.ndarray
    b: float
    config: LogisticConfig
    losses: list = field(default_factory=list)
    converged: bool = False


def _logistic_loss(X, labels, w, b, l2):
    margin = X @ w + b
    # log(1 + exp(-m)) for label 1, log(1 + exp(m)) for label 0
    nll = np.mean(np.logaddexp(0.0, np.where(labels == 1, -margin, margin)))
    return nll + 0.5 * l2 * float(w @ w)


def train_logistic(source, target, config=None):
    """L2-regularized logistic regression, source labelled 0 and target 1.

    Full-batch gradient descent from ``w = 0`` with Armijo backtracking; the
    step grows again after every accepted epoch. Stops when the gradient norm
    falls below ``config.tol``.
    """
    config = config or LogisticConfig()
    x, y = as_matrix(source), as_matrix(target)
    check_same_dim(x, y)
    X = np.vstack([x, y])
    labels = np.concatenate([np.zeros(len(x)), np.ones(len(y))])
    w, b = np.zeros(X.shape[1]), 0.0
    loss = _logistic_loss(X, labels, w, b, config.l2)
    losses = [loss]
    step = config.learning_rate

    for _ in range(config.max_epochs):
        residual = expit(X @ w + b) - labels
        grad_w = X.T @ residual / len(labels) + config.l2 * w
        grad_b = float(np.mean(residual))
        sq_norm = float(grad_w @ grad_w) + grad_b**2
        if np.sqrt(sq_norm) <= config.tol:
            return LogisticModel(w, b, config, losses, True)
        while True:
            new_w, new_b = w - step * grad_w, b - step * grad_b
            new_loss = _logistic_loss(X, labels, new_w, new_b, config.l2)
            if new_loss <= loss - 0.5 * step * sq_norm or step < 1e-16:
                break
            step /= 2
        if new_loss > loss:
            break
        w, b, loss = new_w, new_b, new_loss
        losses.append(loss)
        step *= 2

    model = LogisticModel(w, b, config, losses, False)
    raise NotConvergedError(
        "logistic regression did not reach the gradient tolerance",
        result=model,
        diagnostics={"epochs": len(losses) - 1, "loss": loss},
    )


def logistic_baseline(source, target, mode="sensitivity", config=None):
    """Relevance from a source-vs-target linear classifier.

    ``mode="sensitivity"`` gives ``w_i**2``; ``mode="gradient_x_input"`` gives
    ``w_i * (E[x] - E[y])_i``.
    """
    if mode not in ("sensitivity", "gradient_x_input"):
        raise ValueError(f"unknown logistic mode {mode!r}")
    model = train_logistic(source, target, config)
    if mode == "sensitivity":
        return model.w**2
    return model.w * (as_matrix(source).mean(axis=0) - as_matrix(target).mean(axis=0))


@dataclass(frozen=True)
class ClusterShiftResult:
    assignments: np.ndarray
    prototypes_source: np.ndarray
    prototypes_target: np.ndarray
    deltas: np.ndarray
    feature_relevances: np.ndarray
    instance_relevances: np.ndarray

    @property
    def total_feature_relevances(self):
        return self.feature_relevances.sum(axis=0)


def barycentric_projection(target, coupling):
    """Coupling-weighted mean target of every source point."""
    y = as_matrix(target)
    plan = coupling.mass
    weights = np.bincount(coupling.rows, weights=plan, minlength=coupling.n)
    moved = np.zeros((coupling.n, y.shape[1]))
    np.add.at(moved, coupling.rows, plan[:, None] * y[coupling.cols])
    return moved / weights[:, None]


def cluster_shift_baseline(source, target, coupling, k, seed=0):
    """k-means on ``[x_k, yhat_k]`` rows, then per-cluster mean displacement."""
    x = as_matrix(source)
    moved = barycentric_projection(target, coupling)
    check_same_dim(x, moved)
    n, d = x.shape
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")

    joint = np.hstack([x, moved])
    km = KMeans(n_clusters=k, init="k-means++", n_init=1, max_iter=300, tol=1e-9, random_state=seed)
    labels = km.fit_predict(joint)
    counts = np.bincount(labels, minlength=k)
    if np.any(counts == 0):
        raise DegenerateClusterError(
            f"{int(np.sum(counts == 0))} empty clusters; data has fewer distinct rows than k={k}"
        )
    proto = np.zeros((k, 2 * d))
    np.add.at(proto, labels, joint)
    proto /= counts[:, None]
    proto_x, proto_y = proto[:, :d], proto[:, d:]
    deltas = proto_y - proto_x
    feature_rel = counts[:, None] * deltas**2
    instance_rel = (labels[None, :] == np.arange(k)[:, None]) * np.sum(deltas**2, axis=1)[:, None]
    return ClusterShiftResult(labels, proto_x, proto_y, deltas, feature_rel, instance_rel)
