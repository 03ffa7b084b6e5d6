import itertools
import math

import numpy as np
import pytest

from agent_logit.model.spec import ModelSpec
from agent_logit.qp import QPStatus, QPSubproblem, build_agent_qp, build_qp, relax_design, solve_projection_qp
from agent_logit.qp import solver

FEAS = 1e-9


def _random_problem(rng, dim=5, max_rows=6) -> QPSubproblem:
    """Rows around a known feasible point, so the polyhedron is never empty."""
    rows = int(rng.integers(1, max_rows + 1))
    A = rng.normal(size=(rows, dim))
    x0 = rng.normal(size=dim)
    half = rng.uniform(0.05, 1.0, size=rows)
    center = A @ x0
    return QPSubproblem(
        prior=rng.normal(scale=3.0, size=dim),
        A=A,
        lower=center - half,
        upper=center + half,
        lb=np.full(dim, -math.inf),
        ub=np.full(dim, math.inf),
        tol_used=float(half.max()),
    )


def _all_rows(p: QPSubproblem):
    """Pair rows followed by the finite box bounds, as (rows, lower, upper)."""
    K = p.prior.size
    boxed = [k for k in range(K) if math.isfinite(p.lb[k]) or math.isfinite(p.ub[k])]
    rows = np.vstack([p.A, np.eye(K)[boxed]]) if boxed else p.A
    lower = np.concatenate([p.lower, p.lb[boxed]])
    upper = np.concatenate([p.upper, p.ub[boxed]])
    return rows, lower, upper


def _brute_force(p: QPSubproblem):
    """Try every none/lower/upper active pattern; keep the best feasible projection."""
    rows, lower, upper = _all_rows(p)
    best_x, best_obj = None, math.inf
    for pattern in itertools.product((0, 1, 2), repeat=rows.shape[0]):
        active = [r for r, s in enumerate(pattern) if s]
        c = np.array([lower[r] if pattern[r] == 1 else upper[r] for r in active])
        if not np.all(np.isfinite(c)):
            continue
        if active:
            N = rows[active]
            x = p.prior - np.linalg.pinv(N) @ (N @ p.prior - c)
        else:
            x = p.prior.copy()
        Ax = rows @ x
        if np.all(Ax >= lower - FEAS) and np.all(Ax <= upper + FEAS):
            obj = float(np.sum((x - p.prior) ** 2))
            if obj < best_obj:
                best_x, best_obj = x, obj
    return best_x, best_obj


def _check_against_oracle(n_instances: int, seed: int):
    rng = np.random.default_rng(seed)
    for _ in range(n_instances):
        p = _random_problem(rng)
        sol = solve_projection_qp(p)
        x_ref, obj_ref = _brute_force(p)

        assert sol.status == QPStatus.OPTIMAL
        assert sol.objective == pytest.approx(obj_ref, rel=1e-7, abs=1e-9)
        np.testing.assert_allclose(sol.theta, x_ref, atol=1e-6)
        assert sol.kkt_residual <= 1e-6


def test_projection_matches_enumeration():
    _check_against_oracle(100, seed=0)


@pytest.mark.slow
def test_projection_matches_enumeration_many():
    _check_against_oracle(1000, seed=1)


def _bounded_spec(lb, ub) -> ModelSpec:
    alternatives = ("a0", "a1", "a2")
    names = ("b0", "b1", "b2")
    return ModelSpec(
        parameter_names=names,
        bounds=tuple(zip(lb, ub)),
        alternatives=alternatives,
        design_map={a: {n: f"c{k}" for k, n in enumerate(names)} for a in alternatives},
        attribute_columns=("c0", "c1", "c2"),
        reference_alternative="a0",
    )


def test_pair_rows_with_bounds_match_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(60):
        truth = rng.normal(size=3)
        design = rng.normal(size=(3, 3))
        v = design @ truth
        shares = np.exp(v) / np.exp(v).sum()
        # bounds around the true taste keep the polyhedron non-empty
        lb = (truth[0] - rng.uniform(0.05, 1.0), truth[1] - rng.uniform(0.05, 1.0), -math.inf)
        ub = (truth[0] + rng.uniform(0.05, 1.0), math.inf, math.inf)
        spec = _bounded_spec(lb, ub)
        p = build_qp(design, shares, spec, rng.normal(scale=3.0, size=3), tol=float(rng.uniform(0.05, 0.5)))
        assert p.pair_index == ((0, 1), (0, 2), (1, 2))

        sol = solve_projection_qp(p)
        x_ref, obj_ref = _brute_force(p)

        assert sol.status == QPStatus.OPTIMAL
        assert sol.objective == pytest.approx(obj_ref, rel=1e-7, abs=1e-9)
        np.testing.assert_allclose(sol.theta, x_ref, atol=1e-6)
        assert np.all(sol.theta >= spec.lower_bounds - FEAS)
        assert np.all(sol.theta <= spec.upper_bounds + FEAS)


def test_projection_is_idempotent_and_non_expansive():
    rng = np.random.default_rng(2)
    for _ in range(50):
        p = _random_problem(rng)
        x = solve_projection_qp(p).theta
        again = solve_projection_qp(p.with_prior(x)).theta
        np.testing.assert_allclose(again, x, atol=1e-9)

        other = rng.normal(scale=3.0, size=x.size)
        y = solve_projection_qp(p.with_prior(other)).theta
        assert np.linalg.norm(x - y) <= np.linalg.norm(p.prior - other) + 1e-9


def test_box_only_problem_clips_the_prior():
    p = QPSubproblem(
        prior=np.array([2.0, -3.0, 0.5]),
        A=np.zeros((0, 3)),
        lower=np.zeros(0),
        upper=np.zeros(0),
        lb=np.array([0.0, -1.0, -math.inf]),
        ub=np.array([1.0, 1.0, math.inf]),
        tol_used=0.5,
    )
    sol = solve_projection_qp(p)

    np.testing.assert_allclose(sol.theta, [1.0, -1.0, 0.5])
    assert sol.degenerate
    assert sol.status == QPStatus.OPTIMAL
    assert sol.objective == pytest.approx(5.0)


def test_rows_conflicting_with_bounds_are_infeasible():
    p = QPSubproblem(
        prior=np.zeros(1),
        A=np.array([[1.0]]),
        lower=np.array([2.0]),
        upper=np.array([3.0]),
        lb=np.array([-1.0]),
        ub=np.array([1.0]),
        tol_used=0.5,
    )
    sol = solve_projection_qp(p)

    assert sol.status == QPStatus.INFEASIBLE
    assert not sol.feasible
    np.testing.assert_array_equal(sol.theta, p.prior)


# ============================================================
# agent QPs
# ============================================================

def _time_only_spec() -> ModelSpec:
    alternatives = ("a0", "a1", "a2")
    return ModelSpec(
        parameter_names=("b_time",),
        bounds=((-math.inf, math.inf),),
        alternatives=alternatives,
        design_map={a: {"b_time": "time"} for a in alternatives},
        attribute_columns=("time",),
        reference_alternative="a0",
    )


def _three_way():
    """Times (0, 1, 3); observed shares from utilities (4, 2, 0)."""
    design = np.array([[0.0], [1.0], [3.0]])
    v = np.array([4.0, 2.0, 0.0])
    shares = np.exp(v) / np.exp(v).sum()
    return design, shares


def test_tolerance_relaxation_doubles_until_feasible():
    spec = _time_only_spec()
    design, shares = _three_way()

    strict = relax_design(design, shares, spec, np.zeros(1), tol=0.5, max_doublings=0)
    assert strict.status == QPStatus.INFEASIBLE

    relaxed = relax_design(design, shares, spec, np.zeros(1), tol=0.5, max_doublings=1)
    assert relaxed.status == QPStatus.RELAXED
    assert relaxed.tol_used == 1.0
    assert relaxed.theta[0] == pytest.approx(-1.0, abs=1e-9)

    from_below = relax_design(design, shares, spec, np.array([-3.0]), tol=1.0, max_doublings=0)
    assert from_below.status == QPStatus.OPTIMAL
    assert from_below.theta[0] == pytest.approx(-1.5, abs=1e-9)


def test_agent_qp_has_one_row_per_positive_pair(taxi_dataset, taxi_spec):
    obs = taxi_dataset.get("agent1")
    p = build_agent_qp(obs, taxi_spec, np.zeros(3), tol=0.1)

    assert p.pair_index == ((0, 1),)
    np.testing.assert_allclose(p.A[0], [10 - 30, 10 - 3, -1.0])
    assert p.targets[0] == pytest.approx(math.log(0.8 / 0.2))

    sol = solve_projection_qp(p)
    value = float(p.A[0] @ sol.theta)
    assert p.lower[0] - FEAS <= value <= p.upper[0] + FEAS
    # prior outside the band: the projection lands on its nearest face
    assert value == pytest.approx(p.lower[0], abs=1e-9)


def test_zero_shares_drop_their_pairs():
    spec = _time_only_spec()
    design, _ = _three_way()
    p = build_qp(design, np.array([0.6, 0.4, 0.0]), spec, np.zeros(1), tol=0.5)
    assert p.pair_index == ((0, 1),)

    lone = build_qp(design, np.array([1.0, 0.0, 0.0]), spec, np.array([7.0]), tol=0.5)
    assert lone.degenerate
    assert solve_projection_qp(lone).theta[0] == 7.0


def test_invalid_tolerance_is_rejected():
    spec = _time_only_spec()
    design, shares = _three_way()
    with pytest.raises(ValueError):
        build_qp(design, shares, spec, np.zeros(1), tol=0.0)


def test_mirrored_agents_project_to_negated_parameters(taxi_dataset, taxi_spec):
    # agents 4-6 repeat the attributes of agents 1-3 with the shares swapped
    prior = np.array([0.01, -0.02, 0.3])
    for a, b in (("agent1", "agent4"), ("agent2", "agent5"), ("agent3", "agent6")):
        p = build_agent_qp(taxi_dataset.get(a), taxi_spec, prior, tol=0.5)
        q = build_agent_qp(taxi_dataset.get(b), taxi_spec, -prior, tol=0.5)
        np.testing.assert_allclose(solve_projection_qp(q).theta, -solve_projection_qp(p).theta, atol=1e-9)

    # |ln(0.6 / 0.4)| < 0.5: both agents accept the zero prior as it is
    for a in ("agent3", "agent6"):
        p = build_agent_qp(taxi_dataset.get(a), taxi_spec, np.zeros(3), tol=0.5)
        np.testing.assert_array_equal(solve_projection_qp(p).theta, np.zeros(3))


# ============================================================
# certification
# ============================================================

def test_failed_certification_is_reported_not_raised(monkeypatch):
    monkeypatch.setattr(solver, "_certify", lambda p, C, b, x: (1.0, np.zeros(b.size)))
    spec = _time_only_spec()
    design, shares = _three_way()

    sol = relax_design(design, shares, spec, np.zeros(1), tol=0.5, max_doublings=2)

    assert sol.status == QPStatus.INFEASIBLE
    assert sol.tol_used == 2.0
    assert sol.kkt_residual == 1.0
    np.testing.assert_array_equal(sol.theta, np.zeros(1))


def test_residual_near_tolerance_is_kept(monkeypatch):
    monkeypatch.setattr(solver, "_certify", lambda p, C, b, x: (5e-6, np.zeros(b.size)))
    p = _random_problem(np.random.default_rng(5))

    sol = solve_projection_qp(p)

    assert sol.status == QPStatus.OPTIMAL
    assert sol.kkt_residual == 5e-6


def test_solver_status_reaches_the_solution(monkeypatch):
    monkeypatch.setattr(solver, "_solve_cvxpy", lambda p: (None, "solver_error", 7))
    p = _random_problem(np.random.default_rng(6))
    p = p.with_prior(p.prior + 100.0)

    sol = solve_projection_qp(p)

    assert sol.status == QPStatus.INFEASIBLE
    assert sol.iterations == 7
    np.testing.assert_array_equal(sol.theta, p.prior)
