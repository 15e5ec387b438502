"""Explanation quality: symmetric relevance gain and ground-truth cosine scores."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import baselines, ot, wax
from .dataset import as_matrix, check_same_dim, ground_truth_relevance, time_series_pairing
from .errors import ZeroVectorError

METHODS = (
    "wax",
    "meanshift",
    "occlusion",
    "coupling",
    "uniform",
    "logistic-sens",
    "logistic-gi",
    "cluster",
)


@dataclass(frozen=True)
class FeatureRanking:
    order: tuple
    source_method: str = ""

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        if sorted(order) != list(range(len(order))):
            raise ValueError(f"{order} is not a permutation of 0..{len(order) - 1}")
        object.__setattr__(self, "order", order)


@dataclass(frozen=True)
class SrgReport:
    srg: float
    retain_curve: np.ndarray
    exclude_curve: np.ndarray


@dataclass
class EvalReport:
    metric: str
    per_method: dict
    curves: dict = field(default_factory=dict)
    relevances: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "metric": self.metric,
            "per_method": self.per_method,
            "curves": self.curves,
            "relevances": self.relevances,
        }

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", self.metric])
        for name, value in self.per_method.items():
            writer.writerow([name, "" if value is None else repr(float(value))])
        return buf.getvalue()


def rank_features(relevances, source_method=""):
    """Most relevant first; ties keep ascending feature index."""
    rel = np.asarray(relevances, dtype=float)
    if not np.all(np.isfinite(rel)):
        raise ValueError("relevances must be finite")
    return FeatureRanking(tuple(np.argsort(-rel, kind="stable")), source_method)


def _subset_distance(x, y, columns, spec):
    if not columns:
        return 0.0
    columns = sorted(columns)
    distance, _, _ = ot.wasserstein(x[:, columns], y[:, columns], spec)
    return distance


def srg(source, target, ranking, spec=None):
    """Average gap between keeping and removing the top-pi ranked features.

    Every point re-solves the transport problem on its feature subset.
    """
    spec = spec or ot.WassersteinSpec()
    x, y = as_matrix(source), as_matrix(target)
    check_same_dim(x, y)
    d = x.shape[1]
    order = list(ranking.order)
    if len(order) != d:
        raise ValueError(f"ranking covers {len(order)} features, data has {d}")

    full = _subset_distance(x, y, order, spec)
    retain, exclude = np.zeros(d + 1), np.zeros(d + 1)
    retain[d] = exclude[0] = full
    for pi in range(1, d):
        retain[pi] = _subset_distance(x, y, order[:pi], spec)
        exclude[pi] = _subset_distance(x, y, order[pi:], spec)
    return SrgReport(float(np.mean(retain - exclude)), retain, exclude)


def cosine_similarity(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVectorError("cosine similarity of a zero vector is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def method_relevances(method, source, target, spec=None, seed=0, clusters=3, logistic_config=None):
    """Feature relevances of ``method`` for one source/target pair of datasets."""
    spec = spec or ot.WassersteinSpec()
    x, y = as_matrix(source), as_matrix(target)
    check_same_dim(x, y)
    if method == "wax":
        return wax.explain(x, y, spec).feature_relevances
    if method == "meanshift":
        return baselines.mean_shift(x, y)
    if method == "occlusion":
        return baselines.occlusion(x, y, spec)
    if method == "coupling":
        _, coupling, _ = ot.wasserstein(x, y, spec)
        return baselines.coupling_baseline(x, y, coupling)
    if method == "uniform":
        return baselines.uniform_baseline(x.shape[1])
    if method == "logistic-sens":
        return baselines.logistic_baseline(x, y, "sensitivity", logistic_config)
    if method == "logistic-gi":
        return baselines.logistic_baseline(x, y, "gradient_x_input", logistic_config)
    if method == "cluster":
        _, coupling, _ = ot.wasserstein(x, y, spec)
        k = min(clusters, x.shape[0])
        return baselines.cluster_shift_baseline(x, y, coupling, k, seed).total_feature_relevances
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def srg_benchmark(source, target, methods, spec=None, seed=0, clusters=3):
    spec = spec or ot.WassersteinSpec()
    report = EvalReport("srg", {})
    for method in methods:
        rel = method_relevances(method, source, target, spec, seed, clusters)
        result = srg(source, target, rank_features(rel, method), spec)
        report.per_method[method] = result.srg
        report.curves[method] = {
            "retain": result.retain_curve.tolist(),
            "exclude": result.exclude_curve.tolist(),
        }
        report.relevances[method] = [float(r) for r in rel]
    return report


def characterization_benchmark(series, t, delta_t, period, methods, spec=None, seed=0, clusters=3):
    """Cosine similarity of each method to the true per-feature transport.

    Methods only see the two unpaired sample sets; the target rows are
    shuffled before they are handed over.
    """
    spec = spec or ot.WassersteinSpec()
    pairs = time_series_pairing(series, t, delta_t, period)
    truth = ground_truth_relevance(pairs)
    rng = np.random.default_rng(seed)
    source = pairs.source.values
    target = pairs.target.values[rng.permutation(len(pairs.target))]

    report = EvalReport("cosine", {}, relevances={"ground_truth": [float(r) for r in truth]})
    for method in methods:
        rel = method_relevances(method, source, target, spec, seed, clusters)
        try:
            score = cosine_similarity(rel, truth)
        except ZeroVectorError:
            score = None
        report.per_method[method] = score
        report.relevances[method] = [float(r) for r in rel]
    return report
