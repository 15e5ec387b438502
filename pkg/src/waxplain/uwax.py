"""U-WaX: attributing W_2 to learned orthogonal subspaces.

An orthogonal ``d x d`` matrix is split column-wise into concept blocks
``U_1 .. U_C`` and a complement. Because the blocks partition an orthobasis,

    S_c^2 = sum_kl gamma_kl ||U_c^T (x_k - y_l)||^2,    W_2^2 = sum_c S_c^2

holds exactly (complement included), which is what makes the three-level
attribution conserve W_2. Only ``p = q = 2`` is supported.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ot
from .dataset import as_matrix, check_same_dim
from .errors import DimensionMismatchError, NotConvergedError, NotOrthogonalError, NumericalFailureError

ORTHO_TOL = 1e-6
_CHUNK_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthobasis whose first ``sum(block_sizes)`` columns form concept blocks."""

    U: np.ndarray
    block_sizes: tuple

    def __post_init__(self):
        U = np.array(self.U, dtype=float)
        if U.ndim != 2 or U.shape[0] != U.shape[1]:
            raise DimensionMismatchError(f"basis must be square, got {U.shape}")
        sizes = tuple(int(s) for s in self.block_sizes)
        if not sizes or min(sizes) < 1 or sum(sizes) > U.shape[0]:
            raise ValueError(f"block sizes {sizes} do not fit d={U.shape[0]}")
        deviation = np.linalg.norm(U.T @ U - np.eye(U.shape[0]))
        if deviation > ORTHO_TOL:
            raise NotOrthogonalError(f"||U^T U - I||_F = {deviation:.3e}")
        U.setflags(write=False)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "block_sizes", sizes)

    @property
    def d(self):
        return self.U.shape[0]

    @property
    def n_concepts(self):
        return len(self.block_sizes)

    def blocks(self, with_complement=True):
        """Column blocks ``U_c``; the complement (possibly 0 columns) comes last."""
        edges = np.cumsum((0,) + self.block_sizes)
        out = [self.U[:, a:b] for a, b in zip(edges[:-1], edges[1:])]
        if with_complement:
            out.append(self.U[:, edges[-1]:])
        return out

    def to_json(self):
        return {"block_sizes": list(self.block_sizes), "U": self.U.tolist()}


@dataclass(frozen=True)
class SubspaceForward:
    """Activations of the three-layer form of W_2.

    ``z[c, j]`` is the block-``c`` distance of coupling entry ``j``; the last
    row of ``z`` and last entry of ``scores`` belong to the complement.
    """

    z: np.ndarray
    scores: np.ndarray
    distance: float


@dataclass(frozen=True)
class SubspaceAttribution:
    distance: float
    coupling: ot.Coupling
    basis: SubspaceBasis
    concept_relevances: np.ndarray
    pair_relevances: np.ndarray
    feature_relevances: np.ndarray

    def concept_order(self):
        """Concept indices (complement excluded) by descending relevance."""
        concepts = self.concept_relevances[:-1]
        return [int(c) for c in np.argsort(-concepts, kind="stable")]

    def top_pairs(self, concept, count):
        rel = self.pair_relevances[concept]
        order = np.argsort(-rel, kind="stable")[:count]
        return [
            [int(self.coupling.rows[j]), int(self.coupling.cols[j]), float(rel[j])] for j in order
        ]

    def conservation_residuals(self):
        return {
            "concepts": float(np.sum(self.concept_relevances) - self.distance),
            "pairs": float(np.max(np.abs(self.pair_relevances.sum(axis=1) - self.concept_relevances))),
            "features": float(
                np.max(np.abs(self.feature_relevances.sum(axis=1) - self.concept_relevances))
            ),
        }

    def to_json(self, top_pairs=None):
        keep = self.coupling.mass != 0
        c = self.coupling
        out = {
            "distance": float(self.distance),
            "concept_relevances": [float(r) for r in self.concept_relevances],
            "concept_order": self.concept_order(),
            "feature_relevances": [float(r) for r in self.feature_relevances.sum(axis=0)],
            "feature_relevances_per_concept": self.feature_relevances.tolist(),
            "pair_relevances": [
                [int(k), int(l), float(r)]
                for k, l, r in zip(c.rows[keep], c.cols[keep], self.pair_relevances.sum(axis=0)[keep])
            ],
        }
        if top_pairs is not None:
            out["top_pairs_per_concept"] = [
                self.top_pairs(concept, top_pairs) for concept in range(len(self.concept_relevances))
            ]
        else:
            out["pair_relevances_per_concept"] = [
                [float(r) for r in row[keep]] for row in self.pair_relevances
            ]
        return out


@dataclass(frozen=True)
class SubspaceOptConfig:
    dims: tuple = (1,)
    r: float = 2.0
    step_size: float = 0.5
    max_iters: int = 5000
    seed: int = 0
    objective_tol: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(k) for k in self.dims))
        if not self.dims or min(self.dims) < 1:
            raise ValueError("dims must list at least one positive block size")
        if not self.r >= 2:
            raise ValueError(f"r must be >= 2, got {self.r}")
        if not self.step_size > 0 or not self.objective_tol > 0 or self.max_iters < 1:
            raise ValueError("step_size, objective_tol and max_iters must be positive")

    @property
    def n_concepts(self):
        return len(self.dims)


@dataclass
class SubspaceFit:
    basis: SubspaceBasis
    objective: float
    trajectory: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _coupled_differences(source, target, coupling, basis=None):
    x, y = as_matrix(source), as_matrix(target)
    check_same_dim(x, y)
    if (x.shape[0], y.shape[0]) != (coupling.n, coupling.m):
        raise DimensionMismatchError("data sizes do not match the coupling")
    if basis is not None and basis.d != x.shape[1]:
        raise DimensionMismatchError(f"basis is for d={basis.d}, data has d={x.shape[1]}")
    return x[coupling.rows] - y[coupling.cols]


def solve_w2(source, target):
    """Exact coupling for p = q = 2."""
    z = ot.pair_distances(source, target, 2.0)
    return ot.solve_exact(z, 2.0)


def forward_subspace(source, target, coupling, basis):
    diff = _coupled_differences(source, target, coupling, basis)
    z = np.stack([np.linalg.norm(diff @ block, axis=1) for block in basis.blocks()])
    scores = np.sqrt(z**2 @ coupling.mass)
    return SubspaceForward(z, scores, float(np.sqrt(np.sum(scores**2))))


def attribute_subspaces(forward, source, target, coupling, basis):
    """Propagate W_2 to concepts, then coupled pairs, then input features.

    Within block ``c`` a pair's relevance is split over features in
    proportion to ``(x_ki - y_li) * (P_c (x_k - y_l))_i`` where ``P_c`` is the
    block projector; those terms sum to ``z^c_kl**2`` and may be signed.
    """
    diff = _coupled_differences(source, target, coupling, basis)
    gamma = coupling.mass
    energy = forward.scores**2
    total = float(np.sum(energy))
    n_blocks = energy.size
    concept_rel = energy / total * forward.distance if total > 0 else np.zeros(n_blocks)

    pair_rel = np.zeros_like(forward.z)
    feature_rel = np.zeros((n_blocks, diff.shape[1]))
    step = max(1, _CHUNK_ELEMENTS // max(diff.shape[1], 1))
    for c, block in enumerate(basis.blocks()):
        if energy[c] == 0:
            continue
        zc2 = forward.z[c] ** 2
        pair_rel[c] = gamma * zc2 / float(np.sum(gamma * zc2)) * concept_rel[c]
        live = np.flatnonzero(zc2 > 0)
        for start in range(0, live.size, step):
            idx = live[start:start + step]
            d = diff[idx]
            contrib = d * ((d @ block) @ block.T)
            feature_rel[c] += (pair_rel[c, idx] / zc2[idx]) @ contrib
    return SubspaceAttribution(
        forward.distance, coupling, basis, concept_rel, pair_rel, feature_rel
    )


def explain_subspaces(source, target, basis, coupling=None):
    coupling = coupling or solve_w2(source, target)
    forward = forward_subspace(source, target, coupling, basis)
    return attribute_subspaces(forward, source, target, coupling, basis)


def _tailedness(diff, gamma, blocks, r):
    out = np.empty(len(blocks))
    for c, block in enumerate(blocks):
        zc = np.linalg.norm(diff @ block, axis=1)
        out[c] = float(np.sum(gamma * zc**r)) ** (1.0 / r)
    return out


def tailedness(source, target, coupling, basis, r):
    """Per-concept ``(sum_kl gamma_kl (z^c_kl)^r)^(1/r)``, complement excluded."""
    if not r >= 2:
        raise ValueError(f"r must be >= 2, got {r}")
    diff = _coupled_differences(source, target, coupling, basis)
    return _tailedness(diff, coupling.mass, basis.blocks(with_complement=False), r)


def _polar(matrix):
    left, _, right = np.linalg.svd(matrix)
    return left @ right


def _split(U, dims):
    edges = np.cumsum((0,) + tuple(dims))
    return [U[:, a:b] for a, b in zip(edges[:-1], edges[1:])]


def _objective_and_gradient(U, diff, gamma, dims, r):
    value = 0.0
    grad = np.zeros_like(U)
    col = 0
    for block in _split(U, dims):
        proj = diff @ block
        zc = np.linalg.norm(proj, axis=1)
        q = float(np.sum(gamma * zc**r)) ** (1.0 / r)
        value += q
        if q > 0:
            # zero-distance pairs get a zero (sub)gradient
            weight = np.zeros_like(zc)
            nz = zc > 0
            weight[nz] = gamma[nz] * zc[nz] ** (r - 2)
            grad[:, col:col + block.shape[1]] = q ** (1 - r) * (diff.T @ (weight[:, None] * proj))
        col += block.shape[1]
    return value, grad


def _objective(U, diff, gamma, dims, r):
    return float(np.sum(_tailedness(diff, gamma, _split(U, dims), r)))


def learn_subspaces(source, target, coupling, config=None):
    """Maximize the summed tailedness of the concept blocks over orthobases.

    Each iteration takes a gradient step on U, maps the result back to the
    nearest orthogonal matrix (polar factor), and accepts it only on a
    sufficient increase, halving the step otherwise. Accepted steps grow
    the step size again.

    Raises NotConvergedError carrying the best SubspaceFit when
    ``max_iters`` is reached while still improving.
    """
    config = config or SubspaceOptConfig()
    diff = _coupled_differences(source, target, coupling)
    d = diff.shape[1]
    if sum(config.dims) > d:
        raise ValueError(f"dims {config.dims} exceed d={d}")
    gamma = coupling.mass
    dims, r = config.dims, config.r

    rng = np.random.default_rng(config.seed)
    U = _polar(rng.standard_normal((d, d)))
    value = _objective(U, diff, gamma, dims, r)
    trajectory = [value]
    step = config.step_size
    converged = False
    iterations = 0

    for iterations in range(1, config.max_iters + 1):
        _, grad = _objective_and_gradient(U, diff, gamma, dims, r)
        gnorm = np.linalg.norm(grad)
        # component of the gradient tangent to the orthogonal group at U
        skew = U.T @ grad
        tangent = U @ (skew - skew.T) / 2
        slope = np.linalg.norm(tangent) ** 2 / gnorm if gnorm > 0 else 0.0
        if slope <= 1e-15 * max(abs(value), 1e-300):
            converged = True
            break
        direction = grad / gnorm
        accepted = False
        while step > 1e-14:
            candidate = _polar(U + step * direction)
            cand_value = _objective(candidate, diff, gamma, dims, r)
            if cand_value - value >= 1e-4 * step * slope:
                accepted = True
                break
            step /= 2
        if not accepted:
            converged = True
            break
        gain = (cand_value - value) / max(abs(value), 1e-300)
        U, value = candidate, cand_value
        trajectory.append(value)
        step = min(step * 2, 1.0)
        if gain < config.objective_tol:
            converged = True
            break

    # the polar factor of an orthogonal matrix is itself; this only trims drift
    U = _polar(U)
    fit = SubspaceFit(
        SubspaceBasis(U, dims), _objective(U, diff, gamma, dims, r), trajectory, iterations, converged
    )
    if not converged:
        raise NotConvergedError(
            f"subspace optimization still improving after {config.max_iters} iterations",
            result=fit,
            diagnostics={"iterations": iterations, "objective": fit.objective},
        )
    return fit


def coupled_second_moment(source, target, coupling):
    """``sum_kl gamma_kl (x_k - y_l)(x_k - y_l)^T``."""
    diff = _coupled_differences(source, target, coupling)
    return diff.T @ (coupling.mass[:, None] * diff)


def principal_subspace_eigen(source, target, coupling, k=1):
    """Closed-form optimum for one concept at ``r = 2``.

    Columns are eigenvectors of the coupled second-moment matrix in
    descending eigenvalue order, each signed so its largest-magnitude entry
    is positive. A zero moment matrix yields the identity.
    """
    moment = coupled_second_moment(source, target, coupling)
    d = moment.shape[0]
    if not 1 <= k <= d:
        raise ValueError(f"k must lie in [1, {d}], got {k}")
    if not np.any(moment):
        return SubspaceBasis(np.eye(d), (k,))
    try:
        values, vectors = np.linalg.eigh(moment)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(str(exc)) from exc
    order = np.argsort(-values, kind="stable")
    vectors = vectors[:, order]
    pivot = np.argmax(np.abs(vectors), axis=0)
    vectors = vectors * np.sign(vectors[pivot, np.arange(d)])
    return SubspaceBasis(vectors, (k,))
