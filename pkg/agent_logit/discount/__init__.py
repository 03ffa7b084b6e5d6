from agent_logit.discount.instance import DiscountInstance, precompute_discount_shares
from agent_logit.discount.solvers import (
    DiscountSolution,
    budget_summary,
    region_summary,
    solve_bp,
    solve_bp_exact,
    solve_bp_heuristic,
)

__all__ = [
    "DiscountInstance",
    "precompute_discount_shares",
    "DiscountSolution",
    "budget_summary",
    "region_summary",
    "solve_bp",
    "solve_bp_exact",
    "solve_bp_heuristic",
]
