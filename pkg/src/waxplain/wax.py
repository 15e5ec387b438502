"""WaX: relevance propagation through the two-layer form of W_p.

The distance is written as pairwise Minkowski distances ``z_kl`` (first
layer) pooled by the frozen coupling (second layer). Relevance flows back
first to coupled pairs, then to input features:

    R_kl = gamma_kl z_kl^alpha / sum(gamma z^alpha) * W_p
    R_i  = sum_kl |x_ki - y_li|^beta / sum_i |x_ki - y_li|^beta * R_kl

With ``alpha = p`` and ``beta = q`` these coincide with gradient x input
taken with the coupling held constant; ``gradient_check_pairs`` and
``gradient_check_features`` verify that numerically.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import ot
from .dataset import as_matrix, check_same_dim
from .errors import DimensionMismatchError

# cap on pair-chunk x feature elements materialized at once
_CHUNK_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class WaxHyperparams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be finite and > 0, got {self.alpha}")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be finite and > 0, got {self.beta}")


def default_hyperparams(p, q):
    """alpha = p, beta = min(p + 2, q)."""
    p, q = ot.parse_exponent(p), ot.parse_exponent(q)
    if not (math.isfinite(p) and p >= 1):
        raise ValueError(f"p must be finite and >= 1, got {p}")
    return WaxHyperparams(alpha=p, beta=min(p + 2.0, q))


@dataclass(frozen=True)
class Attribution:
    """Explanation of one W_p at pair and feature granularity.

    ``pair_relevances[j]`` belongs to the pair
    ``(coupling.rows[j], coupling.cols[j])``; only the coupling's stored
    entries are represented.
    """

    distance: float
    coupling: ot.Coupling
    pair_relevances: np.ndarray
    feature_relevances: np.ndarray
    hyperparams: WaxHyperparams = None

    def dense_pair_relevances(self):
        out = np.zeros((self.coupling.n, self.coupling.m))
        np.add.at(out, (self.coupling.rows, self.coupling.cols), self.pair_relevances)
        return out

    def conservation_residuals(self):
        return {
            "pairs": float(np.sum(self.pair_relevances) - self.distance),
            "features": float(np.sum(self.feature_relevances) - self.distance),
        }

    def top_pairs(self, count):
        order = np.argsort(-self.pair_relevances, kind="stable")[:count]
        return [
            [int(self.coupling.rows[j]), int(self.coupling.cols[j]), float(self.pair_relevances[j])]
            for j in order
        ]

    def to_json(self):
        keep = self.coupling.mass != 0
        c = self.coupling
        return {
            "distance": float(self.distance),
            "feature_relevances": [float(r) for r in self.feature_relevances],
            "pair_relevances": [
                [int(k), int(l), float(r)]
                for k, l, r in zip(c.rows[keep], c.cols[keep], self.pair_relevances[keep])
            ],
        }


def _pair_z(coupling, z):
    z = np.asarray(z, dtype=float)
    if z.shape != (coupling.n, coupling.m):
        raise DimensionMismatchError(
            f"coupling is {coupling.n}x{coupling.m} but distances are {z.shape}"
        )
    return z[coupling.rows, coupling.cols]


def attribute_pairs(coupling, z, p, alpha):
    """First propagation step.

    Returns
    -------
    distance : float
        W_p evaluated from the same coupling and distances.
    relevances : ndarray
        One value per stored coupling entry.
    """
    zk = _pair_z(coupling, z)
    distance = float(np.sum(coupling.mass * zk**p)) ** (1.0 / p)
    weights = coupling.mass * zk**alpha
    total = float(np.sum(weights))
    if distance == 0.0 or total == 0.0:
        return distance, np.zeros_like(weights)
    return distance, weights / total * distance


def _feature_shares(diff, beta):
    """Row-normalized ``|diff|**beta``; all-zero rows give zero shares."""
    mag = np.abs(diff)
    peak = mag.max(axis=1, keepdims=True)
    # scale by the row maximum so large beta neither underflows nor overflows
    ratio = np.divide(mag, peak, out=np.zeros_like(mag), where=peak > 0)
    powered = ratio**beta
    norm = powered.sum(axis=1, keepdims=True)
    return np.divide(powered, norm, out=np.zeros_like(powered), where=norm > 0)


def attribute_features(coupling, pair_relevances, source, target, beta):
    """Second propagation step: split each pair's relevance across features.

    Pairs are processed in fixed-size chunks, so only a chunk x d block of
    differences is ever held in memory.
    """
    if not (math.isfinite(beta) and beta > 0):
        raise ValueError(f"beta must be finite and > 0, got {beta}")
    x, y = as_matrix(source), as_matrix(target)
    check_same_dim(x, y)
    if (x.shape[0], y.shape[0]) != (coupling.n, coupling.m):
        raise DimensionMismatchError("data sizes do not match the coupling")
    pair_relevances = np.asarray(pair_relevances, dtype=float)
    if pair_relevances.shape != coupling.mass.shape:
        raise DimensionMismatchError("one relevance per coupling entry expected")

    live = np.flatnonzero(pair_relevances)
    d = x.shape[1]
    out = np.zeros(d)
    step = max(1, _CHUNK_ELEMENTS // max(d, 1))
    for start in range(0, live.size, step):
        idx = live[start:start + step]
        diff = x[coupling.rows[idx]] - y[coupling.cols[idx]]
        out += pair_relevances[idx] @ _feature_shares(diff, beta)
    return out


def explain(source, target, spec=None, hyperparams=None):
    """Solve the coupling for ``spec`` and propagate W_p to pairs and features."""
    spec = spec or ot.WassersteinSpec()
    hp = hyperparams or default_hyperparams(spec.p, spec.q)
    x, y = as_matrix(source), as_matrix(target)
    check_same_dim(x, y)
    z = ot.pair_distances(x, y, spec.q)
    coupling = ot.solve(z, spec)
    distance, pair_rel = attribute_pairs(coupling, z, spec.p, hp.alpha)
    feature_rel = attribute_features(coupling, pair_rel, x, y, hp.beta)
    return Attribution(distance, coupling, pair_rel, feature_rel, hp)


def _relative_error(estimate, reference):
    estimate, reference = np.asarray(estimate), np.asarray(reference)
    scale = max(float(np.max(np.abs(reference))), np.finfo(float).tiny)
    return float(np.max(np.abs(estimate - reference)) / scale)


def gradient_check_pairs(coupling, z, p, alpha=None):
    """Largest relative gap between pair relevances and frozen-coupling GI.

    Gradient x input ``(dW/dz_kl) z_kl`` is taken both analytically and by
    central differences (step ``1e-5 * z_kl``); the worse of the two
    discrepancies is returned.
    """
    alpha = p if alpha is None else alpha
    zk = _pair_z(coupling, z)
    gamma = coupling.mass
    distance, relevance = attribute_pairs(coupling, z, p, alpha)

    analytic = distance ** (1.0 - p) * gamma * zk**p

    def w_of(values):
        return float(np.sum(gamma * values**p)) ** (1.0 / p)

    numeric = np.zeros_like(zk)
    for j in np.flatnonzero(zk > 0):
        h = 1e-5 * zk[j]
        up, down = zk.copy(), zk.copy()
        up[j] += h
        down[j] -= h
        numeric[j] = (w_of(up) - w_of(down)) / (2 * h) * zk[j]

    return max(_relative_error(relevance, analytic), _relative_error(relevance, numeric))


def _frozen_distance(x, y, rows, cols, gamma, p, q):
    diff = x[rows] - y[cols]
    if math.isinf(q):
        zk = np.max(np.abs(diff), axis=1)
    else:
        zk = np.sum(np.abs(diff) ** q, axis=1) ** (1.0 / q)
    return float(np.sum(gamma * zk**p)) ** (1.0 / p)


def gradient_check_features(source, target, coupling, p, q, alpha=None, beta=None):
    """Largest relative gap between feature relevances and frozen-coupling GI.

    The reference is ``sum_k dW/dx_ki x_ki + sum_l dW/dy_li y_li`` by central
    differences of W_p over every data entry, with step ``1e-5`` times the
    largest absolute data value.
    """
    q = ot.parse_exponent(q)
    if math.isinf(q):
        raise ValueError("feature gradient check needs finite q")
    alpha = p if alpha is None else alpha
    beta = q if beta is None else beta
    x, y = as_matrix(source).copy(), as_matrix(target).copy()
    check_same_dim(x, y)
    z = ot.pair_distances(x, y, q)
    _, pair_rel = attribute_pairs(coupling, z, p, alpha)
    relevance = attribute_features(coupling, pair_rel, x, y, beta)

    keep = coupling.mass > 0
    rows, cols, gamma = coupling.rows[keep], coupling.cols[keep], coupling.mass[keep]
    h = 1e-5 * max(float(np.max(np.abs(x))), float(np.max(np.abs(y))), 1e-300)

    def distance():
        return _frozen_distance(x, y, rows, cols, gamma, p, q)

    numeric = np.zeros(x.shape[1])
    for data in (x, y):
        for idx in np.ndindex(*data.shape):
            original = data[idx]
            data[idx] = original + h
            up = distance()
            data[idx] = original - h
            down = distance()
            data[idx] = original
            numeric[idx[1]] += (up - down) / (2 * h) * original
    return _relative_error(relevance, numeric)
