"""Entropic optimal transport between two fragment sets.

Two equivalent Sinkhorn forms are provided: alternating Bregman (KL)
projections that rescale the plan itself, and Sinkhorn-Knopp matrix
scaling that updates the two dual scaling vectors. Both run either in the
linear domain or, for small regularization, on log-potentials.

The exact (unregularized) problem is available for small instances through
:func:`exact_emd_oracle`, which is used to validate the solvers.
"""

import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import xlogy

from .exceptions import DimensionMismatch, InvalidInput, NumericalUnderflow, UnsupportedSize
from .validation import check_cost, check_matrix, check_positive, check_weights, uniform_weights

#: below this regularization ``log_domain="auto"`` switches to log-sum-exp updates
AUTO_LOG_THRESHOLD = 0.01


class LogDomain(str, Enum):
    AUTO = "auto"
    ON = "on"
    OFF = "off"


@dataclass(frozen=True)
class SolverConfig:
    """Sinkhorn settings.

    Defaults reproduce the matching setup used for retrieval: entropic
    weight 0.02, at most 3 row+column sweeps, relative plan change 1e-6.

    ``anneal`` starts from a large regularization and halves it towards
    ``lam`` (warm-started epsilon scaling). It only changes the path, not
    the fixed point, and needs log-domain iterations.

    ``round_to_feasible`` moves the final plan onto the exact transport
    polytope (a correction of the size of the marginal error), so its
    cost can never undercut the exact optimum.
    """

    lam: float = 0.02
    max_iterations: int = 3
    convergence_tol: float = 1e-6
    log_domain: LogDomain = LogDomain.AUTO
    anneal: bool = False
    round_to_feasible: bool = False

    def __post_init__(self):
        check_positive(self.lam, "lambda")
        check_positive(self.convergence_tol, "convergence tolerance")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise InvalidInput(f"max_iterations must be a positive integer, got {self.max_iterations!r}")
        mode = self.log_domain
        object.__setattr__(self, "log_domain",
                           mode if isinstance(mode, LogDomain) else LogDomain(str(mode).lower()))
        if self.anneal and self.log_domain is LogDomain.OFF:
            raise InvalidInput("annealing requires log-domain iterations")

    @property
    def uses_log_domain(self):
        if self.log_domain is LogDomain.AUTO:
            return self.anneal or self.lam < AUTO_LOG_THRESHOLD
        return self.log_domain is LogDomain.ON


@dataclass(frozen=True, eq=False)
class TransportPlan:
    values: np.ndarray
    converged: bool = True
    iterations_used: int = 0

    @property
    def shape(self):
        return self.values.shape

    @property
    def row_sums(self):
        return self.values.sum(axis=1)

    @property
    def col_sums(self):
        return self.values.sum(axis=0)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _plan_values(plan):
    if isinstance(plan, TransportPlan):
        return plan.values
    return check_matrix(plan, name="plan")


def _unit_rows(fragments):
    return fragments.unit if hasattr(fragments, "unit") else check_matrix(fragments, "fragments")


def similarity_matrix(a, b):
    """Pairwise cosine similarities ``V T^T`` of two unit fragment sets."""
    va, vb = _unit_rows(a), _unit_rows(b)
    if va.shape[1] != vb.shape[1]:
        raise DimensionMismatch(f"fragment dimensions differ: {va.shape[1]} vs {vb.shape[1]}")
    return va @ vb.T


def build_cost_matrix(a, b):
    """Cosine cost ``1 - v_i . t_j``, clamped to ``[0, 2]`` against rounding."""
    return np.clip(1.0 - similarity_matrix(a, b), 0.0, 2.0)


def gibbs_kernel(cost, lam):
    return np.exp(-np.asarray(cost, dtype=np.float64) / lam)


def _prepare(cost, alpha, beta, cfg):
    C = check_cost(cost)
    K, L = C.shape
    a = uniform_weights(K) if alpha is None else check_weights(alpha, K, "alpha")
    b = uniform_weights(L) if beta is None else check_weights(beta, L, "beta")
    return C, a, b, cfg or SolverConfig()


def _lse(x, axis):
    peak = x.max(axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    return np.squeeze(peak + np.log(np.exp(x - peak).sum(axis=axis, keepdims=True)), axis=axis)


def _relative_change(new, old):
    denom = np.linalg.norm(old)
    if denom == 0.0:
        return np.inf
    return np.linalg.norm(new - old) / denom


def _relative_change_log(new_log, old_log):
    # shift by a common constant; the ratio is scale invariant
    shift = max(new_log.max(), old_log.max())
    return _relative_change(np.exp(new_log - shift), np.exp(old_log - shift))


def _row_deviation(plan, alpha):
    return np.abs(plan.sum(axis=1) - alpha).max()


def _check_kernel(xi):
    if np.any(xi.sum(axis=1) == 0.0) or np.any(xi.sum(axis=0) == 0.0):
        raise NumericalUnderflow(
            "Gibbs kernel has an all-zero row or column; use log_domain='on'")


def _check_scaling(values, what):
    if not np.all(np.isfinite(values)) or np.any(values == 0.0):
        raise NumericalUnderflow(f"{what} underflowed during Sinkhorn iterations")


class _Schedule:
    """Regularization schedule: constant, or halving towards the target."""

    STAGE_TOL = 1e-4

    def __init__(self, cost, cfg):
        self.target = cfg.lam
        spread = float(cost.max() - cost.min())
        self.current = max(cfg.lam, spread) if cfg.anneal else cfg.lam

    @property
    def annealing(self):
        return self.current > self.target

    def advance(self, row_deviation):
        """Return the rescale factor ``old/new`` (1.0 when staying put)."""
        if not self.annealing or row_deviation >= self.STAGE_TOL:
            return 1.0
        old, self.current = self.current, max(self.target, 0.5 * self.current)
        return old / self.current


def round_to_polytope(plan, alpha, beta):
    """Nearby plan with marginals exactly ``alpha`` and ``beta``.

    Scales down overfull rows, then overfull columns, and spreads the
    remaining deficit as a rank-one update. The result differs from
    ``plan`` by at most twice its total marginal error (l1).
    """
    P = plan * np.minimum(alpha / plan.sum(axis=1), 1.0)[:, None]
    P = P * np.minimum(beta / P.sum(axis=0), 1.0)[None, :]
    err_r = np.maximum(alpha - P.sum(axis=1), 0.0)
    err_c = np.maximum(beta - P.sum(axis=0), 0.0)
    total = err_r.sum()
    if total > 0:
        P = P + np.outer(err_r, err_c) / total
    return P


def _finish(plan, a, b, cfg, converged, t):
    if cfg.round_to_feasible:
        plan = round_to_polytope(plan, a, b)
    return TransportPlan(plan, converged=converged, iterations_used=t)


def _converged(change, deviation, tol):
    # plan change alone stalls at small lambda; also demand row feasibility
    return change < tol and deviation < tol


def sinkhorn_bregman(cost, alpha=None, beta=None, cfg=None):
    """Alternating row/column KL projections starting from the Gibbs kernel.

    Each sweep rescales the rows to ``alpha`` and then the columns to
    ``beta``. The loop stops once the relative Frobenius change of the plan
    over one sweep drops below ``cfg.convergence_tol`` (with row sums within
    the same tolerance of ``alpha``) or after ``cfg.max_iterations`` sweeps.
    Since the column projection comes last, column sums are exact up to
    rounding.
    """
    C, a, b, cfg = _prepare(cost, alpha, beta, cfg)
    tol = cfg.convergence_tol
    converged = False
    t = 0
    if cfg.uses_log_domain:
        schedule = _Schedule(C, cfg)
        log_a, log_b = np.log(a), np.log(b)
        log_plan = -C / schedule.current
        for t in range(1, cfg.max_iterations + 1):
            prev = log_plan
            log_plan = log_plan + (log_a - _lse(log_plan, 1))[:, None]
            log_plan = log_plan + (log_b - _lse(log_plan, 0))[None, :]
            deviation = _row_deviation(np.exp(log_plan), a)
            if schedule.annealing:
                log_plan = log_plan * schedule.advance(deviation)
                continue
            if _converged(_relative_change_log(log_plan, prev), deviation, tol):
                converged = True
                break
        plan = np.exp(log_plan)
    else:
        plan = gibbs_kernel(C, cfg.lam)
        _check_kernel(plan)
        for t in range(1, cfg.max_iterations + 1):
            prev = plan
            row_sums = plan.sum(axis=1)
            _check_scaling(row_sums, "row sums")
            plan = plan * (a / row_sums)[:, None]
            col_sums = plan.sum(axis=0)
            _check_scaling(col_sums, "column sums")
            plan = plan * (b / col_sums)[None, :]
            if _converged(_relative_change(plan, prev), _row_deviation(plan, a), tol):
                converged = True
                break
    return _finish(plan, a, b, cfg, converged, t)


def sinkhorn_matrix_scaling(cost, alpha=None, beta=None, cfg=None):
    """Sinkhorn-Knopp scaling ``diag(mu) xi diag(theta)``.

    ``theta`` starts at ones; each sweep sets ``mu = alpha / (xi theta)``
    then ``theta = beta / (xi^T mu)``. Same stopping rule as
    :func:`sinkhorn_bregman`, to which it is algebraically identical.
    """
    C, a, b, cfg = _prepare(cost, alpha, beta, cfg)
    K, L = C.shape
    tol = cfg.convergence_tol
    converged = False
    t = 0
    if cfg.uses_log_domain:
        schedule = _Schedule(C, cfg)
        log_a, log_b = np.log(a), np.log(b)
        log_mu, log_theta = np.zeros(K), np.zeros(L)
        log_xi = -C / schedule.current
        log_plan = log_xi
        for t in range(1, cfg.max_iterations + 1):
            prev = log_plan
            log_mu = log_a - _lse(log_xi + log_theta[None, :], 1)
            log_theta = log_b - _lse(log_xi + log_mu[:, None], 0)
            log_plan = log_mu[:, None] + log_xi + log_theta[None, :]
            deviation = _row_deviation(np.exp(log_plan), a)
            if schedule.annealing:
                ratio = schedule.advance(deviation)
                log_mu, log_theta = log_mu * ratio, log_theta * ratio
                log_xi = -C / schedule.current
                log_plan = log_mu[:, None] + log_xi + log_theta[None, :]
                continue
            if _converged(_relative_change_log(log_plan, prev), deviation, tol):
                converged = True
                break
        plan = np.exp(log_plan)
    else:
        xi = gibbs_kernel(C, cfg.lam)
        _check_kernel(xi)
        theta = np.ones(L)
        plan = xi
        for t in range(1, cfg.max_iterations + 1):
            prev = plan
            denom = xi @ theta
            _check_scaling(denom, "row scaling")
            mu = a / denom
            denom = xi.T @ mu
            _check_scaling(denom, "column scaling")
            theta = b / denom
            plan = mu[:, None] * xi * theta[None, :]
            if _converged(_relative_change(plan, prev), _row_deviation(plan, a), tol):
                converged = True
                break
    return _finish(plan, a, b, cfg, converged, t)


def transport_cost(plan, cost):
    """Frobenius inner product ``<plan, cost>``."""
    P = _plan_values(plan)
    C = check_cost(cost)
    if P.shape != C.shape:
        raise DimensionMismatch(f"plan shape {P.shape} does not match cost shape {C.shape}")
    return float(np.sum(P * C))


def plan_entropy(plan):
    """``-sum w (log w - 1)``; zero entries contribute nothing."""
    P = _plan_values(plan)
    return float(-np.sum(xlogy(P, P) - P))


def sinkhorn_similarity(a, b, cfg=None, strategy=None, return_plan=False):
    """Sinkhorn similarity ``<plan, V T^T>`` between two fragment sets.

    Margins come from ``strategy`` (uniform by default). Because the plan
    carries unit mass this equals ``1 - transport_cost(plan, cost)``.
    """
    from .fragments import compute_margins

    sims = similarity_matrix(a, b)
    cost = np.clip(1.0 - sims, 0.0, 2.0)
    alpha = compute_margins(a, b.global_embedding, strategy)
    beta = compute_margins(b, a.global_embedding, strategy)
    plan = sinkhorn_bregman(cost, alpha, beta, cfg)
    value = float(np.sum(plan.values * sims))
    return (value, plan) if return_plan else value


# --- exact oracle -----------------------------------------------------------

MAX_ORACLE_CELLS = 36
_UNIFORM_TOL = 1e-12


def _is_uniform(w):
    return np.all(np.abs(w - 1.0 / w.size) <= _UNIFORM_TOL)


def _oracle_permutations(C):
    n = C.shape[0]
    rows = np.arange(n)
    best, best_perm = np.inf, None
    for perm in itertools.permutations(range(n)):
        value = C[rows, perm].sum()
        if value < best:
            best, best_perm = value, perm
    plan = np.zeros_like(C)
    plan[rows, best_perm] = 1.0 / n
    return plan


def _oracle_2x2(C, a, b):
    # single free variable t = plan[0, 0]; the objective is linear in t
    lo, hi = max(0.0, a[0] + b[0] - 1.0), min(a[0], b[0])
    candidates = []
    for t in (lo, hi):
        plan = np.array([[t, a[0] - t], [b[0] - t, a[1] - b[0] + t]])
        plan = np.maximum(plan, 0.0)
        candidates.append((float(np.sum(plan * C)), plan))
    return min(candidates, key=lambda c: c[0])[1]


def _tree_solution(edges, a, b):
    """Flow on a spanning tree of the bipartite row/column graph, or None."""
    K = a.size
    residual = np.concatenate([a, b])
    remaining = list(edges)
    values = {}
    while remaining:
        degree = np.zeros(residual.size, dtype=int)
        for i, j in remaining:
            degree[i] += 1
            degree[K + j] += 1
        for idx, (i, j) in enumerate(remaining):
            if degree[i] == 1:
                leaf, other = i, K + j
            elif degree[K + j] == 1:
                leaf, other = K + j, i
            else:
                continue
            flow = residual[leaf]
            values[(i, j)] = flow
            residual[leaf] -= flow
            residual[other] -= flow
            del remaining[idx]
            break
    if min(values.values()) < -1e-12:
        return None
    return values


def _is_spanning_tree(edges, K, L):
    parent = list(range(K + L))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        ri, rj = find(i), find(K + j)
        if ri == rj:
            return False
        parent[ri] = rj
    return True


def _oracle_bases(C, a, b):
    K, L = C.shape
    cells = [(i, j) for i in range(K) for j in range(L)]
    best, best_plan = np.inf, None
    for edges in itertools.combinations(cells, K + L - 1):
        if not _is_spanning_tree(edges, K, L):
            continue
        values = _tree_solution(edges, a, b)
        if values is None:
            continue
        plan = np.zeros_like(C)
        for (i, j), v in values.items():
            plan[i, j] = max(v, 0.0)
        value = float(np.sum(plan * C))
        if value < best - 1e-15:
            best, best_plan = value, plan
    return best_plan


def _oracle_linprog(C, a, b):
    from scipy.optimize import linprog

    K, L = C.shape
    A_eq = np.vstack([np.kron(np.eye(K), np.ones(L)), np.kron(np.ones(K), np.eye(L))])
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]),
                  bounds=(0, None), method="highs")
    if not res.success:
        raise UnsupportedSize(f"linear program failed: {res.message}")
    return np.maximum(res.x.reshape(K, L), 0.0)


def exact_emd_oracle(cost, alpha=None, beta=None):
    """Exact optimal transport for small instances.

    Returns ``(plan, distance)``. Uniform square problems enumerate
    permutations (an optimal vertex of the Birkhoff polytope exists);
    2x2 problems use the closed form over the single free variable;
    general problems up to 3x3 enumerate every spanning-tree basis of the
    transportation polytope. Other instances with at most 36 cells are
    handed to a linear-programming solver.
    """
    C = check_cost(cost)
    K, L = C.shape
    if K * L > MAX_ORACLE_CELLS:
        raise UnsupportedSize(f"{K}x{L} instance is too large for the exact oracle")
    a = uniform_weights(K) if alpha is None else check_weights(alpha, K, "alpha")
    b = uniform_weights(L) if beta is None else check_weights(beta, L, "beta")

    if K == 1 or L == 1:
        plan = np.outer(a, b)
    elif K == L and _is_uniform(a) and _is_uniform(b):
        plan = _oracle_permutations(C)
    elif K == 2 and L == 2:
        plan = _oracle_2x2(C, a, b)
    elif K <= 3 and L <= 3:
        plan = _oracle_bases(C, a, b)
    else:
        plan = _oracle_linprog(C, a, b)
    return TransportPlan(plan, converged=True, iterations_used=0), float(np.sum(plan * C))
