import itertools
import math

import numpy as np
import pytest

from agent_logit.analysis import predict_shares
from agent_logit.discount import (
    DiscountInstance,
    budget_summary,
    precompute_discount_shares,
    region_summary,
    solve_bp,
    solve_bp_exact,
    solve_bp_heuristic,
)
from agent_logit.errors import OptimizationError, SpecError
from agent_logit.estimation import AgentParameters, EstimationResult
from agent_logit.qp import QPStatus


def _random_instance(rng, n_regions, agents_per_region=4, budget=None, max_regions=None) -> DiscountInstance:
    n = n_regions * agents_per_region
    without = rng.uniform(0.05, 0.5, size=n)
    with_ = np.clip(without + rng.uniform(-0.05, 0.2, size=n), 0.0, 1.0)
    fare = rng.uniform(1.0, 5.0, size=n)
    inst = DiscountInstance(
        regions=tuple(f"r{i:02d}" for i in range(n_regions)),
        agent_ids=tuple(f"a{t:04d}" for t in range(n)),
        agent_region=rng.permutation(np.arange(n) % n_regions),
        demand=rng.uniform(50.0, 150.0, size=n),
        fare=fare,
        share_with=with_,
        share_without=without,
        max_regions=0,
        budget=0.0,
    )
    total = float(inst.region_cost.sum())
    return inst.with_limits(
        budget=rng.uniform(0.1, 0.8) * total if budget is None else budget,
        max_regions=int(rng.integers(1, n_regions + 1)) if max_regions is None else max_regions,
    )


def _brute_force_gain(inst: DiscountInstance) -> float:
    gain, cost = inst.region_gain, inst.region_cost
    slack = 1e-9 * max(1.0, abs(inst.budget)) if math.isfinite(inst.budget) else math.inf
    best = 0.0
    for mask in itertools.product((False, True), repeat=inst.n_regions):
        chosen = np.flatnonzero(mask)
        if len(chosen) > inst.max_regions or cost[chosen].sum() > inst.budget + slack:
            continue
        best = max(best, float(gain[chosen].sum()))
    return best


def test_exact_solver_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(100):
        inst = _random_instance(rng, int(rng.integers(1, 11)))
        sol = solve_bp_exact(inst)

        assert sol.optimal
        assert sol.ridership_gain == pytest.approx(_brute_force_gain(inst), abs=1e-7)
        assert len(sol.selected_regions) <= inst.max_regions
        assert sol.revenue_loss <= inst.budget * (1 + 1e-9) + 1e-9


def test_heuristic_never_beats_exact_and_bounds_it():
    rng = np.random.default_rng(1)
    for _ in range(50):
        inst = _random_instance(rng, int(rng.integers(2, 11)))
        exact = solve_bp_exact(inst)
        heuristic = solve_bp_heuristic(inst)

        assert not heuristic.optimal
        assert heuristic.objective_ridership <= exact.objective_ridership + 1e-7
        assert heuristic.upper_bound >= exact.objective_ridership - 1e-7
        assert heuristic.gap >= 0.0
        assert heuristic.revenue_loss <= inst.budget * (1 + 1e-9) + 1e-9


def test_zero_budget_and_zero_regions_select_nothing():
    rng = np.random.default_rng(2)
    inst = _random_instance(rng, 6)

    for limited in (inst.with_limits(budget=0.0), inst.with_limits(max_regions=0)):
        sol = solve_bp_exact(limited)
        assert sol.selected_regions == []
        assert sol.objective_ridership == pytest.approx(inst.base_ridership)
        assert sol.revenue_loss == 0.0
        assert sol.revenue_after == pytest.approx(sol.revenue_before)


def test_unlimited_budget_selects_every_gaining_region():
    rng = np.random.default_rng(3)
    inst = _random_instance(rng, 8, budget=math.inf, max_regions=8)
    sol = solve_bp_exact(inst)

    gaining = [r for r, g in zip(inst.regions, inst.region_gain) if g > 0.0]
    assert sol.selected_regions == gaining
    assert sol.to_dict()["budget"] is None


def test_objective_grows_with_budget_and_region_count():
    rng = np.random.default_rng(4)
    inst = _random_instance(rng, 9, max_regions=3)
    total = float(inst.region_cost.sum())

    by_budget = [solve_bp_exact(inst.with_limits(budget=f * total)).objective_ridership for f in (0.1, 0.3, 0.6, 1.0)]
    by_count = [solve_bp_exact(inst.with_limits(budget=total, max_regions=o)).objective_ridership for o in range(5)]
    assert by_budget == sorted(by_budget)
    assert by_count == sorted(by_count)


def test_solution_accounting_by_hand():
    inst = DiscountInstance(
        regions=("east", "west"),
        agent_ids=("a", "b", "c"),
        agent_region=np.array([0, 0, 1]),
        demand=np.array([100.0, 50.0, 80.0]),
        fare=np.array([2.0, 4.0, 3.0]),
        share_with=np.array([0.5, 0.4, 0.3]),
        share_without=np.array([0.3, 0.2, 0.25]),
        max_regions=1,
        budget=10.0,
    )
    # loss per agent = 0.5 * fare
    np.testing.assert_allclose(inst.region_cost, [3.0, 1.5])
    np.testing.assert_allclose(inst.region_gain, [30.0, 4.0])

    sol = solve_bp_exact(inst)
    assert sol.selected_regions == ["east"]
    assert sol.objective_ridership == pytest.approx(50.0 + 20.0 + 20.0)
    assert sol.ridership_gain == pytest.approx(30.0)
    assert sol.revenue_loss == pytest.approx(3.0)
    assert sol.revenue_before == pytest.approx(60.0 + 40.0 + 60.0)
    assert sol.revenue_after == pytest.approx(50.0 * 1.0 + 20.0 * 2.0 + 60.0)

    regions = region_summary(inst, sol)
    assert regions["region_id"].tolist() == ["east", "west"]
    assert regions["selected"].tolist() == [True, False]
    assert regions["ridership_after"].sum() == pytest.approx(sol.objective_ridership)


def test_demand_weighted_loss():
    inst = DiscountInstance(
        regions=("r",),
        agent_ids=("a",),
        agent_region=np.array([0]),
        demand=np.array([100.0]),
        fare=np.array([2.0]),
        share_with=np.array([0.5]),
        share_without=np.array([0.3]),
        max_regions=1,
        budget=math.inf,
        demand_weighted_loss=True,
    )
    np.testing.assert_allclose(inst.region_cost, [0.5 * 2.0 * 100.0 * 0.3])


def test_budget_summary_has_one_row_per_budget():
    rng = np.random.default_rng(5)
    inst = _random_instance(rng, 7, max_regions=3)
    total = float(inst.region_cost.sum())
    frame, solutions = budget_summary(inst, [0.0, 0.5 * total, total])

    assert len(solutions) == 3
    assert frame["n_selected"].iloc[0] == 0
    assert frame["total_ridership"].is_monotonic_increasing
    assert (frame["ridership_change"] >= -1e-9).all()
    assert (frame["revenue_loss"] <= frame["budget"] * (1 + 1e-9) + 1e-9).all()


def test_region_limit():
    rng = np.random.default_rng(6)
    inst = _random_instance(rng, 5)

    with pytest.raises(OptimizationError, match="exceed"):
        solve_bp_exact(inst, region_limit=3)
    assert not solve_bp(inst, region_limit=3).optimal
    assert solve_bp(inst).optimal


def test_instance_validation():
    with pytest.raises(SpecError):
        DiscountInstance(
            regions=("r",),
            agent_ids=("a",),
            agent_region=np.array([1]),
            demand=np.array([1.0]),
            fare=np.array([1.0]),
            share_with=np.array([0.5]),
            share_without=np.array([0.4]),
            max_regions=1,
            budget=1.0,
        )
    rng = np.random.default_rng(7)
    with pytest.raises(SpecError):
        _random_instance(rng, 2, budget=-1.0)


@pytest.mark.slow
def test_exact_solver_handles_sixty_regions():
    rng = np.random.default_rng(8)
    inst = _random_instance(rng, 62, agents_per_region=3, max_regions=10)
    exact = solve_bp_exact(inst)
    heuristic = solve_bp_heuristic(inst)

    assert len(exact.selected_regions) <= 10
    assert heuristic.objective_ridership <= exact.objective_ridership + 1e-7


# ============================================================
# precomputed shares
# ============================================================

def test_discount_raises_transit_shares(taxi_dataset, taxi_spec):
    theta = np.array([-0.05, -0.2, 0.1])
    result = EstimationResult(
        parameter_names=list(taxi_spec.parameter_names),
        priors=theta[None, :],
        agent_params={
            a: AgentParameters(agent_id=a, theta=theta, cluster=0, status=QPStatus.OPTIMAL, tol_used=0.5)
            for a in taxi_dataset.agent_ids
        },
        trace=[],
        converged=True,
        iterations_run=1,
    )
    inst = precompute_discount_shares(result, taxi_dataset, "transit", "cost", discount_rate=0.5)

    assert inst.regions == ("r0", "r1", "r2")
    assert np.all(inst.share_with > inst.share_without)
    obs = taxi_dataset.get("agent2")
    cheaper = obs.with_scaled_attribute(1, 1, 0.5)
    assert inst.share_with[1] == pytest.approx(predict_shares(theta, cheaper, taxi_spec)[1], abs=1e-12)
    assert inst.share_without[1] == pytest.approx(predict_shares(theta, obs, taxi_spec)[1], abs=1e-12)
    np.testing.assert_allclose(inst.fare, [3.0] * 6 + [10.0, 3.0])

    with pytest.raises(SpecError, match="not in the model spec"):
        precompute_discount_shares(result, taxi_dataset, "bike", "cost")
