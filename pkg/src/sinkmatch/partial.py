"""Partial matching through global-embedding dustbins.

Each side's global embedding is appended as an extra "dustbin" fragment
(row 0 for the first set, column 0 for the second). Costs involving a
dustbin are scaled by ``tau`` so that fragments without a good
cross-modal partner can park their mass there cheaply. Only the local
block of the solved plan contributes to the similarity.
"""

from dataclasses import dataclass

import numpy as np

from .fragments import compute_margins
from .ot import SolverConfig, TransportPlan, similarity_matrix, sinkhorn_bregman
from .validation import check_positive, check_weights

DEFAULT_TAU = 0.1


@dataclass(frozen=True, eq=False)
class PartialProblem:
    extended_cost: np.ndarray
    extended_alpha: np.ndarray
    extended_beta: np.ndarray
    dustbin_scale: float
    local_similarity: np.ndarray

    @property
    def local_cost(self):
        return self.extended_cost[1:, 1:]


def _extend_weights(weights, n, name):
    if weights is None:
        return np.full(n + 1, 1.0 / (n + 1))
    w = check_weights(weights, n, name)
    # the dustbin counts as one extra fragment; locals share the rest
    return np.concatenate([[1.0 / (n + 1)], w * (n / (n + 1))])


def extend_problem(a, b, tau=DEFAULT_TAU, alpha=None, beta=None):
    """Build the ``(K+1) x (L+1)`` dustbin-extended problem for ``a`` vs ``b``.

    Layout is ``[[C_g, C_gv], [C_gt, C]]``: ``C_g`` pairs the two dustbins,
    ``C_gv`` the first set's dustbin with the second set's fragments and
    ``C_gt`` the second set's dustbin with the first set's fragments. The
    three dustbin blocks are multiplied by ``tau``; the local block is the
    plain cosine cost. ``alpha``/``beta`` optionally give local margins,
    which are rescaled to leave ``1/(K+1)`` (``1/(L+1)``) for the dustbin.
    """
    check_positive(tau, "tau")
    sims = similarity_matrix(a, b)
    K, L = sims.shape
    g_a, g_b = a.global_embedding, b.global_embedding

    cost = np.empty((K + 1, L + 1))
    cost[0, 0] = tau * (1.0 - g_a @ g_b)
    cost[0, 1:] = tau * (1.0 - b.unit @ g_a)
    cost[1:, 0] = tau * (1.0 - a.unit @ g_b)
    cost[1:, 1:] = 1.0 - sims
    cost[0, :] = np.clip(cost[0, :], 0.0, 2.0 * tau)
    cost[1:, 0] = np.clip(cost[1:, 0], 0.0, 2.0 * tau)
    cost[1:, 1:] = np.clip(cost[1:, 1:], 0.0, 2.0)

    return PartialProblem(
        extended_cost=cost,
        extended_alpha=_extend_weights(alpha, K, "alpha"),
        extended_beta=_extend_weights(beta, L, "beta"),
        dustbin_scale=float(tau),
        local_similarity=sims,
    )


def solve_partial(problem, cfg=None):
    return sinkhorn_bregman(problem.extended_cost, problem.extended_alpha,
                            problem.extended_beta, cfg or SolverConfig())


def local_block(plan):
    values = plan.values if isinstance(plan, TransportPlan) else np.asarray(plan)
    return values[1:, 1:]


def partial_similarity(a, b, cfg=None, tau=DEFAULT_TAU, strategy=None, return_plan=False):
    """Similarity from the local block of the dustbin-extended plan.

    Mass sent to or from a dustbin is discarded, not renormalized, so pairs
    with many unmatched fragments score lower.
    """
    alpha = beta = None
    if strategy is not None:
        alpha = compute_margins(a, b.global_embedding, strategy)
        beta = compute_margins(b, a.global_embedding, strategy)
    problem = extend_problem(a, b, tau, alpha, beta)
    plan = solve_partial(problem, cfg)
    value = float(np.sum(local_block(plan) * problem.local_similarity))
    return (value, plan) if return_plan else value
