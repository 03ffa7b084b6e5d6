import math
from dataclasses import replace

import numpy as np
import pytest

from agent_logit.benchmarks import BenchmarkFit, BenchmarkPredictor, benchmark_share_matrix, estimate_benchmark
from agent_logit.config import EstimatorConfig
from agent_logit.errors import DatasetValidationError, IdentificationError, SpecError
from agent_logit.estimation import estimate_glam
from agent_logit.experiments.runner import evaluate_in_sample
from agent_logit.experiments.synthetic import simulate_endogenous_markets, simulate_taste_markets
from agent_logit.analysis import accuracy_metrics
from agent_logit.regression import build_differentiation_instruments, control_function_stage1

GROUPS = {"g": [["alt1", "alt2"], ["alt3"]]}


@pytest.fixture
def one_taste_markets():
    ds, _ = simulate_taste_markets([[-1.0, -0.5]], agents_per_taste=60, seed=2)
    return ds


def test_mnl_recovers_a_single_taste(one_taste_markets):
    fit = estimate_benchmark(one_taste_markets, "MNL")

    np.testing.assert_allclose(fit.coefficients, [-1.0, -0.5], atol=1e-10)
    assert fit.rho == {}
    np.testing.assert_allclose(
        BenchmarkPredictor(fit).predict(one_taste_markets), one_taste_markets.shares_matrix, atol=1e-10
    )


def test_ipdl_on_logit_shares_has_no_nesting(one_taste_markets):
    iv = build_differentiation_instruments(one_taste_markets, GROUPS, ["time", "cost"])
    fit = estimate_benchmark(one_taste_markets, "IPDL", groups=GROUPS, instruments=iv)

    assert abs(fit.rho["g"]) < 0.02
    np.testing.assert_allclose(fit.coefficients, [-1.0, -0.5], atol=1e-6)


def test_zero_nesting_predicts_like_mnl(one_taste_markets):
    mnl = estimate_benchmark(one_taste_markets, "MNL")
    flat = BenchmarkFit(
        model_kind="IPDL",
        parameter_names=mnl.parameter_names,
        coefficients=mnl.coefficients,
        rho={"g": 0.0},
        reference_alternative=mnl.reference_alternative,
        groups=GROUPS,
    )
    np.testing.assert_allclose(
        benchmark_share_matrix(flat, one_taste_markets), benchmark_share_matrix(mnl, one_taste_markets), atol=1e-12
    )


def test_grouped_shares_solve_their_fixed_point(one_taste_markets):
    mnl = estimate_benchmark(one_taste_markets, "MNL")
    nested = BenchmarkFit(
        model_kind="NL",
        parameter_names=mnl.parameter_names,
        coefficients=mnl.coefficients,
        rho={"g": 0.3},
        reference_alternative="alt0",
        groups=GROUPS,
    )
    S = benchmark_share_matrix(nested, one_taste_markets)
    np.testing.assert_allclose(S.sum(axis=1), 1.0, atol=1e-12)

    X = one_taste_markets.design_tensor
    delta = (X - X[:, :1, :]) @ mnl.coefficients
    nest = S[:, 1] + S[:, 2]
    for t in range(len(one_taste_markets)):
        s = S[t]
        assert math.log(s[1] / s[0]) == pytest.approx(delta[t, 1] + 0.3 * math.log(s[1] / nest[t]), abs=1e-8)
        assert math.log(s[2] / s[0]) == pytest.approx(delta[t, 2] + 0.3 * math.log(s[2] / nest[t]), abs=1e-8)
        assert math.log(s[3] / s[0]) == pytest.approx(delta[t, 3], abs=1e-8)


def test_group_requirements(one_taste_markets):
    iv = build_differentiation_instruments(one_taste_markets, GROUPS, ["time"])
    two_dims = {"g": GROUPS["g"], "h": [["alt1", "alt3"]]}

    with pytest.raises(SpecError, match="exactly one"):
        estimate_benchmark(one_taste_markets, "NL", groups=two_dims, instruments=iv)
    with pytest.raises(SpecError, match="at least one"):
        estimate_benchmark(one_taste_markets, "IPDL", groups={}, instruments=iv)
    with pytest.raises(IdentificationError):
        estimate_benchmark(one_taste_markets, "NL", groups=GROUPS)
    with pytest.raises(SpecError, match="unknown benchmark"):
        estimate_benchmark(one_taste_markets, "probit")


def test_reference_alternative_is_removed_from_groups(one_taste_markets):
    groups = {"g": [["alt0", "alt1"], ["alt2", "alt3"]]}
    iv = build_differentiation_instruments(one_taste_markets, groups, ["time", "cost"])
    fit = estimate_benchmark(one_taste_markets, "NL", groups=groups, instruments=iv)

    assert fit.groups == {"g": [["alt1"], ["alt2", "alt3"]]}


def test_zero_reference_share_is_rejected(taxi_dataset):
    obs = taxi_dataset.observations
    zeroed = [replace(obs[0], shares=np.array([0.0, 1.0]))] + list(obs[1:])
    with pytest.raises(DatasetValidationError, match="reference alternative has zero share"):
        estimate_benchmark(taxi_dataset.with_observations(zeroed), "MNL")


def test_fit_survives_serialisation(one_taste_markets):
    iv = build_differentiation_instruments(one_taste_markets, GROUPS, ["time", "cost"])
    fit = estimate_benchmark(one_taste_markets, "IPDL", groups=GROUPS, instruments=iv)
    loaded = BenchmarkFit.from_dict(fit.to_dict())

    np.testing.assert_array_equal(
        benchmark_share_matrix(loaded, one_taste_markets), benchmark_share_matrix(fit, one_taste_markets)
    )


def test_agent_level_model_beats_mnl_on_mixed_tastes(two_taste_markets):
    ds, _, _ = two_taste_markets
    glam = estimate_glam(ds, EstimatorConfig(M=2, tol=0.1, seed=0, max_iterations=30))
    mnl = estimate_benchmark(ds, "MNL")

    glam_oa = evaluate_in_sample(glam, ds).overall_accuracy
    mnl_oa = accuracy_metrics(BenchmarkPredictor(mnl).predict(ds), ds.shares_matrix, 2).overall_accuracy
    assert glam_oa > mnl_oa
    assert glam_oa > 0.95


def test_benchmarks_leave_out_the_control_parameter():
    em = simulate_endogenous_markets(500, seed=4)
    ds = control_function_stage1(em.dataset, instruments=em.instruments).dataset
    fit = estimate_benchmark(ds, "MNL", instruments=em.instruments)

    assert ds.spec.control_parameter is not None
    assert ds.spec.control_parameter not in fit.parameter_names
    assert fit.parameter_names == [n for n in ds.spec.parameter_names if n != ds.spec.control_parameter]
