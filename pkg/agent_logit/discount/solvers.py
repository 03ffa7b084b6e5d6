from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd

from agent_logit.discount.instance import DiscountInstance
from agent_logit.errors import OptimizationError
from agent_logit.io.logging_utils import logger
from agent_logit.metrics.timers import Timer


EXACT_REGION_LIMIT = 64
_BUDGET_SLACK = 1e-9


@dataclass
class DiscountSolution:
    selected_regions: List[str]
    region_mask: np.ndarray
    objective_ridership: float
    base_ridership: float
    revenue_loss: float
    revenue_before: float
    revenue_after: float
    optimal: bool
    upper_bound: float
    budget: float
    max_regions: int

    @property
    def ridership_gain(self) -> float:
        return self.objective_ridership - self.base_ridership

    @property
    def revenue_change(self) -> float:
        return self.revenue_after - self.revenue_before

    @property
    def gap(self) -> float:
        return 0.0 if self.optimal else max(self.upper_bound - self.objective_ridership, 0.0)

    def to_dict(self) -> dict:
        return {
            "selected_regions": list(self.selected_regions),
            "objective_ridership": self.objective_ridership,
            "base_ridership": self.base_ridership,
            "ridership_gain": self.ridership_gain,
            "revenue_loss": self.revenue_loss,
            "revenue_before": self.revenue_before,
            "revenue_after": self.revenue_after,
            "revenue_change": self.revenue_change,
            "optimal": self.optimal,
            "gap": self.gap,
            "budget": None if math.isinf(self.budget) else self.budget,
            "max_regions": self.max_regions,
        }


def _within_budget(cost: float, budget: float) -> bool:
    return cost <= budget + _BUDGET_SLACK * max(1.0, abs(budget)) if math.isfinite(budget) else True


def agent_indicators(inst: DiscountInstance, region_mask: np.ndarray) -> np.ndarray:
    """x_t = y_{region(t)}."""
    return np.asarray(region_mask, dtype=bool)[inst.agent_region]


def make_solution(inst: DiscountInstance, region_mask: np.ndarray, optimal: bool, upper_bound: float) -> DiscountSolution:
    """Evaluate a region selection from scratch at agent level."""
    y = np.asarray(region_mask, dtype=bool)
    x = agent_indicators(inst, y)
    share = np.where(x, inst.share_with, inst.share_without)
    fare_paid = np.where(x, inst.fare * (1.0 - inst.discount_rate), inst.fare)
    return DiscountSolution(
        selected_regions=[r for r, sel in zip(inst.regions, y) if sel],
        region_mask=y.copy(),
        objective_ridership=float(np.sum(share * inst.demand)),
        base_ridership=inst.base_ridership,
        revenue_loss=float(np.sum(inst.agent_loss[x])),
        revenue_before=inst.base_revenue,
        revenue_after=float(np.sum(share * inst.demand * fare_paid)),
        optimal=optimal,
        upper_bound=upper_bound,
        budget=inst.budget,
        max_regions=inst.max_regions,
    )


def _candidates(inst: DiscountInstance) -> List[int]:
    """Regions worth selecting (positive gain), best gain-per-cost first; ties by index."""
    gain, cost = inst.region_gain, inst.region_cost
    useful = [i for i in range(inst.n_regions) if gain[i] > 0.0]
    return sorted(useful, key=lambda i: (-(gain[i] / cost[i]) if cost[i] > 0 else -math.inf, i))


def _upper_bound(gain: np.ndarray, cost: np.ndarray, order: Sequence[int], slots: int, budget: float) -> float:
    """
    min of two relaxations over `order`: the best `slots` gains ignoring the
    budget, and the fractional knapsack ignoring the cardinality limit.
    """
    if slots <= 0 or not order:
        return 0.0
    by_gain = sorted((gain[i] for i in order), reverse=True)
    card = float(sum(by_gain[:slots]))

    frac, room = 0.0, max(budget, 0.0)
    for i in order:
        if cost[i] <= room:
            frac += gain[i]
            room -= cost[i]
        else:
            frac += gain[i] * room / cost[i]
            break
    return min(card, frac)


def solve_bp_exact(inst: DiscountInstance, region_limit: int = EXACT_REGION_LIMIT) -> DiscountSolution:
    """
    Depth-first branch and bound over region indicators.

    Regions with non-positive gain are never selected (their cost is
    non-negative). Remaining regions are branched in ratio order, include
    before exclude, pruning with `_upper_bound` on the undecided suffix.
    """
    if inst.n_regions > region_limit:
        raise OptimizationError(
            f"{inst.n_regions} regions exceed the exact solver limit of {region_limit}; use the heuristic"
        )
    gain, cost = inst.region_gain, inst.region_cost
    order = _candidates(inst)
    n = len(order)

    best_value = 0.0
    best_set: List[int] = []
    chosen: List[int] = []
    nodes = 0

    def dfs(level: int, value: float, spent: float) -> None:
        nonlocal best_value, best_set, nodes
        nodes += 1
        if value > best_value:
            best_value, best_set = value, list(chosen)
        if level == n or len(chosen) >= inst.max_regions:
            return
        room = inst.budget - spent
        bound = _upper_bound(gain, cost, order[level:], inst.max_regions - len(chosen), room)
        if value + bound * (1.0 + 1e-12) + 1e-12 <= best_value:
            return
        i = order[level]
        if _within_budget(spent + cost[i], inst.budget):
            chosen.append(i)
            dfs(level + 1, value + gain[i], spent + cost[i])
            chosen.pop()
        dfs(level + 1, value, spent)

    with Timer() as timer:
        dfs(0, 0.0, 0.0)

    mask = np.zeros(inst.n_regions, dtype=bool)
    mask[best_set] = True
    sol = make_solution(inst, mask, optimal=True, upper_bound=math.nan)
    sol.upper_bound = sol.objective_ridership
    logger.info(
        f"Exact BP: {len(best_set)} regions, gain {sol.ridership_gain:.4f}, "
        f"{nodes} nodes ({timer.elapsed:.2f} s)"
    )
    return sol


def solve_bp_heuristic(inst: DiscountInstance) -> DiscountSolution:
    """
    Greedy by gain per unit of revenue loss, then single swaps (one selected
    region out, one unselected in) and additions until nothing improves.
    """
    gain, cost = inst.region_gain, inst.region_cost
    order = _candidates(inst)

    selected: List[int] = []
    spent = 0.0
    for i in order:
        if len(selected) >= inst.max_regions:
            break
        if _within_budget(spent + cost[i], inst.budget):
            selected.append(i)
            spent += cost[i]

    improved = True
    while improved:
        improved = False
        outside = [i for i in order if i not in selected]
        if len(selected) < inst.max_regions:
            for j in outside:
                if _within_budget(spent + cost[j], inst.budget):
                    selected.append(j)
                    spent += cost[j]
                    improved = True
                    break
            if improved:
                continue
        for i in list(selected):
            for j in outside:
                if gain[j] > gain[i] and _within_budget(spent - cost[i] + cost[j], inst.budget):
                    selected[selected.index(i)] = j
                    spent += cost[j] - cost[i]
                    improved = True
                    break
            if improved:
                break

    mask = np.zeros(inst.n_regions, dtype=bool)
    mask[selected] = True
    bound = inst.base_ridership + _upper_bound(gain, cost, order, inst.max_regions, inst.budget)
    sol = make_solution(inst, mask, optimal=False, upper_bound=bound)
    logger.info(f"Heuristic BP: {len(selected)} regions, gain {sol.ridership_gain:.4f}, gap {sol.gap:.4f}")
    return sol


def solve_bp(inst: DiscountInstance, region_limit: int = EXACT_REGION_LIMIT) -> DiscountSolution:
    """Exact when the instance is small enough, heuristic otherwise."""
    if inst.n_regions <= region_limit:
        return solve_bp_exact(inst, region_limit)
    logger.warning(f"{inst.n_regions} regions exceed {region_limit}; using the heuristic solver")
    return solve_bp_heuristic(inst)


def region_summary(inst: DiscountInstance, solution: DiscountSolution) -> pd.DataFrame:
    """Per-region ridership and revenue before and after the selection."""
    x = agent_indicators(inst, solution.region_mask)
    share_after = np.where(x, inst.share_with, inst.share_without)
    fare_after = np.where(x, inst.fare * (1.0 - inst.discount_rate), inst.fare)
    frame = pd.DataFrame({
        "region": inst.agent_region,
        "demand": inst.demand,
        "ridership_before": inst.share_without * inst.demand,
        "ridership_after": share_after * inst.demand,
        "revenue_before": inst.share_without * inst.demand * inst.fare,
        "revenue_after": share_after * inst.demand * fare_after,
    })
    out = frame.groupby("region", sort=True).sum()
    out = out.reindex(range(inst.n_regions), fill_value=0.0)
    out.insert(0, "region_id", list(inst.regions))
    out.insert(1, "n_agents", inst.region_sizes)
    out["revenue_loss"] = inst.region_cost
    out["selected"] = solution.region_mask
    return out.reset_index(drop=True)


def budget_summary(
    inst: DiscountInstance,
    budgets: Sequence[float],
    solver: Optional[Callable[[DiscountInstance], DiscountSolution]] = None,
) -> tuple[pd.DataFrame, List[DiscountSolution]]:
    """
    One solve per budget; rows hold total ridership and revenue after the
    discount and their change against no discount.
    """
    solver = solver or solve_bp
    rows, solutions = [], []
    for budget in budgets:
        sol = solver(inst.with_limits(budget=budget))
        solutions.append(sol)
        rows.append({
            "budget": budget,
            "max_regions": inst.max_regions,
            "n_selected": len(sol.selected_regions),
            "total_ridership": sol.objective_ridership,
            "total_revenue": sol.revenue_after,
            "ridership_change": sol.ridership_gain,
            "revenue_change": sol.revenue_change,
            "revenue_loss": sol.revenue_loss,
            "optimal": sol.optimal,
            "gap": sol.gap,
            "selected_regions": ";".join(sol.selected_regions),
        })
    return pd.DataFrame(rows), solutions
