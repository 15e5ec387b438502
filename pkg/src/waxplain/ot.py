"""Pairwise Minkowski costs, optimal and entropic couplings, and W_p.

The cost matrix always holds distances ``z``; the exponent ``p`` is applied
where the coupling is solved or the distance evaluated, so one matrix can
serve several ``p``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .dataset import as_matrix, check_same_dim
from .errors import (
    DimensionMismatchError,
    InfeasibleProblemError,
    NotConvergedError,
    NumericalFailureError,
)

MODES = ("exact", "sinkhorn", "uniform")
GAP_TOL = 1e-9


def parse_exponent(value):
    """Accept floats and the strings ``inf``/``infinity``."""
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity", "∞"):
        return math.inf
    return float(value)


@dataclass(frozen=True)
class WassersteinSpec:
    """Which W_p to compute and how the coupling is obtained.

    ``mode`` is ``"exact"``, ``"sinkhorn"`` (requires ``epsilon``) or
    ``"uniform"`` (the maximum-entropy limit, every entry ``1/(N M)``).
    """

    p: float = 1.0
    q: float = 2.0
    mode: str = "exact"
    epsilon: float = None
    tol: float = 1e-8
    max_iter: int = 10_000

    def __post_init__(self):
        p, q = parse_exponent(self.p), parse_exponent(self.q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        if not (math.isfinite(p) and p >= 1):
            raise ValueError(f"p must be finite and >= 1, got {p}")
        if not q >= 1:
            raise ValueError(f"q must be >= 1 or inf, got {q}")
        if self.mode not in MODES:
            raise ValueError(f"unknown coupling mode {self.mode!r}; choose from {MODES}")
        if self.mode == "sinkhorn":
            if self.epsilon is None or not self.epsilon > 0:
                raise ValueError("sinkhorn mode needs epsilon > 0")
        elif self.epsilon is not None:
            raise ValueError(f"epsilon only applies to sinkhorn mode, not {self.mode!r}")

    def as_dict(self):
        return {
            "p": self.p,
            "q": "inf" if math.isinf(self.q) else self.q,
            "mode": self.mode,
            "epsilon": self.epsilon,
        }


@dataclass(frozen=True)
class Coupling:
    """Transport plan between N source and M target points.

    Stored as parallel ``rows``, ``cols``, ``mass`` arrays sorted by
    ``(row, col)``. ``is_dense`` marks plans that enumerate all N*M entries
    (Sinkhorn, uniform); exact plans only list their support.
    """

    n: int
    m: int
    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    is_dense: bool = False

    @classmethod
    def from_dense(cls, matrix):
        matrix = np.asarray(matrix, dtype=float)
        n, m = matrix.shape
        rows, cols = np.divmod(np.arange(n * m), m)
        return cls(n, m, rows, cols, matrix.ravel().copy(), True)

    @property
    def support_size(self):
        return int(np.count_nonzero(self.mass))

    def dense(self):
        out = np.zeros((self.n, self.m))
        np.add.at(out, (self.rows, self.cols), self.mass)
        return out

    def row_sums(self):
        return np.bincount(self.rows, weights=self.mass, minlength=self.n)

    def col_sums(self):
        return np.bincount(self.cols, weights=self.mass, minlength=self.m)

    def marginal_violation(self):
        return max(
            np.max(np.abs(self.row_sums() - 1.0 / self.n)),
            np.max(np.abs(self.col_sums() - 1.0 / self.m)),
        )

    def transpose(self):
        order = np.lexsort((self.rows, self.cols))
        return Coupling(
            self.m, self.n, self.cols[order], self.rows[order], self.mass[order], self.is_dense
        )

    def to_json(self):
        keep = self.mass != 0
        return {
            "n": self.n,
            "m": self.m,
            "entries": [
                [int(k), int(l), float(g)]
                for k, l, g in zip(self.rows[keep], self.cols[keep], self.mass[keep])
            ],
        }


def pair_distances(source, target, q=2.0):
    """N x M matrix of Minkowski distances ``||x_k - y_l||_q``."""
    x, y = as_matrix(source), as_matrix(target)
    check_same_dim(x, y)
    q = parse_exponent(q)
    if not q >= 1:
        raise ValueError(f"q must be >= 1 or inf, got {q}")
    if x.shape[1] == 0:
        return np.zeros((x.shape[0], y.shape[0]))
    if math.isinf(q):
        return cdist(x, y, "chebyshev")
    if q == 1:
        return cdist(x, y, "cityblock")
    if q == 2:
        return cdist(x, y, "euclidean")
    return cdist(x, y, "minkowski", p=q)


def _check_cost(z, p):
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or min(z.shape) < 1:
        raise DimensionMismatchError(f"cost matrix must be a non-empty 2-D array, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("cost matrix contains NaN or Inf")
    if not (math.isfinite(p) and p >= 1):
        raise ValueError(f"p must be finite and >= 1, got {p}")
    return z


def _assignment_potentials(cost, perm):
    """Dual potentials certifying an assignment, via Bellman-Ford.

    With ``u_i = c[i, perm[i]] - v[perm[i]]`` dual feasibility becomes the
    difference constraints ``v_j <= v[perm[i]] + c[i, j] - c[i, perm[i]]``.
    They are solvable exactly when no negative cycle exists, i.e. when
    ``perm`` is optimal.
    """
    n = cost.shape[0]
    reduced = cost - cost[np.arange(n), perm][:, None]
    # rounding on tied costs can fake tiny negative cycles; ignore sub-ulp moves
    slack = 1e-14 * max(float(np.max(np.abs(cost))), 1e-300)
    v = np.zeros(n)
    for _ in range(n + 1):
        candidate = (v[perm][:, None] + reduced).min(axis=0)
        improve = candidate < v - slack
        if not improve.any():
            break
        v = np.where(improve, candidate, v)
    else:
        raise NumericalFailureError("assignment potentials did not settle; plan is not optimal")
    u = cost[np.arange(n), perm] - v[perm]
    return u, v


def _certify(cost, primal, u, v, a, b):
    violation = max(float(np.max(u[:, None] + v[None, :] - cost)), 0.0)
    dual = float(a @ u + b @ v) - violation
    scale = max(abs(primal), np.finfo(float).eps * float(np.max(np.abs(cost))), 1e-300)
    gap = (primal - dual) / scale
    if gap > GAP_TOL:
        raise NumericalFailureError(f"relative duality gap {gap:.3e} exceeds {GAP_TOL:g}")
    return gap


def solve_exact(z, p=1.0, return_gap=False):
    """Optimal coupling for uniform marginals under cost ``z**p``.

    Square problems are solved as an assignment and returned as a sparse
    permutation with mass ``1/N`` per pair; rectangular ones as a
    transportation LP. Either way optimality is certified by dual potentials
    to a relative duality gap of ``1e-9``.
    """
    z = _check_cost(z, p)
    n, m = z.shape
    cost = z**p
    a, b = np.full(n, 1.0 / n), np.full(m, 1.0 / m)

    if n == m:
        rows, cols = linear_sum_assignment(cost)
        u, v = _assignment_potentials(cost, cols)
        # potentials are per-unit; the marginals carry the 1/N scaling
        gap = _certify(cost, float(cost[rows, cols].sum()) / n, u, v, a, b)
        coupling = Coupling(n, m, rows, cols, np.full(n, 1.0 / n))
        return (coupling, gap) if return_gap else coupling

    coupling, u, v = _solve_transport_lp(cost, a, b)
    primal = float(np.sum(coupling.mass * cost[coupling.rows, coupling.cols]))
    gap = _certify(cost, primal, u, v, a, b)
    return (coupling, gap) if return_gap else coupling


def _solve_transport_lp(cost, a, b):
    n, m = cost.shape
    # equality rows: N row-marginals then M column-marginals over x = vec(gamma)
    eye_n, eye_m = sparse.identity(n, format="csr"), sparse.identity(m, format="csr")
    a_eq = sparse.vstack(
        [sparse.kron(eye_n, np.ones((1, m))), sparse.kron(np.ones((1, n)), eye_m)], format="csr"
    )
    scale = float(np.max(cost)) or 1.0
    res = linprog(
        (cost / scale).ravel(),
        A_eq=a_eq,
        b_eq=np.concatenate([a, b]),
        bounds=(0, None),
        method="highs-ds",
    )
    if res.status == 2:
        raise InfeasibleProblemError(res.message)
    if res.status != 0:
        raise NumericalFailureError(f"transport LP failed: {res.message}")
    duals = res.eqlin.marginals * scale
    plan = np.clip(res.x.reshape(n, m), 0.0, None)
    plan[plan < 1e-15] = 0.0
    rows, cols = np.nonzero(plan)
    coupling = Coupling(n, m, rows, cols, plan[rows, cols])
    if coupling.marginal_violation() > 1e-9:
        raise NumericalFailureError("transport LP returned a plan off its marginals")
    return coupling, duals[:n], duals[n:]


def solve_sinkhorn(z, p=1.0, epsilon=1.0, tol=1e-8, max_iter=10_000):
    """Entropic coupling by log-domain Sinkhorn iterations.

    Stops once the largest absolute marginal error is at most ``tol``.
    Raises NotConvergedError (carrying the last plan) after ``max_iter``
    sweeps otherwise.
    """
    z = _check_cost(z, p)
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    if not tol > 0:
        raise ValueError("tol must be > 0")
    n, m = z.shape
    log_kernel = -(z**p) / epsilon
    log_a, log_b = -math.log(n), -math.log(m)
    f, g = np.zeros(n), np.zeros(m)  # scaled potentials: potential / epsilon

    violation = math.inf
    for it in range(1, max_iter + 1):
        f = log_a - logsumexp(log_kernel + g[None, :], axis=1)
        g = log_b - logsumexp(log_kernel + f[:, None], axis=0)
        log_plan = log_kernel + f[:, None] + g[None, :]
        plan = np.exp(log_plan)
        violation = max(
            np.max(np.abs(plan.sum(axis=1) - 1.0 / n)),
            np.max(np.abs(plan.sum(axis=0) - 1.0 / m)),
        )
        if violation <= tol:
            return Coupling.from_dense(plan)

    raise NotConvergedError(
        f"Sinkhorn marginal violation {violation:.3e} > {tol:g} after {max_iter} iterations",
        result=Coupling.from_dense(plan),
        diagnostics={"iterations": max_iter, "marginal_violation": float(violation)},
    )


def uniform_coupling(n, m):
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    return Coupling.from_dense(np.full((n, m), 1.0 / (n * m)))


def solve(z, spec):
    """Coupling for the mode named in ``spec``."""
    z = np.asarray(z, dtype=float)
    if spec.mode == "exact":
        return solve_exact(z, spec.p)
    if spec.mode == "sinkhorn":
        return solve_sinkhorn(z, spec.p, spec.epsilon, spec.tol, spec.max_iter)
    return uniform_coupling(*z.shape)


def _check_coupling_shape(coupling, z):
    if z.shape != (coupling.n, coupling.m):
        raise DimensionMismatchError(
            f"coupling is {coupling.n}x{coupling.m} but cost matrix is {z.shape}"
        )


def transport_cost(coupling, z, p):
    """``sum_kl gamma_kl * z_kl**p`` over the coupling's stored entries."""
    z = np.asarray(z, dtype=float)
    _check_coupling_shape(coupling, z)
    return float(np.sum(coupling.mass * z[coupling.rows, coupling.cols] ** p))


def wasserstein_distance(coupling, z, p):
    return transport_cost(coupling, z, p) ** (1.0 / p)


def wasserstein(source, target, spec):
    """Solve and evaluate W_p in one call; zero features give distance 0.

    Returns
    -------
    (distance, coupling, z)
    """
    x, y = as_matrix(source), as_matrix(target)
    check_same_dim(x, y)
    z = pair_distances(x, y, spec.q)
    coupling = solve(z, spec)
    return wasserstein_distance(coupling, z, spec.p), coupling, z
