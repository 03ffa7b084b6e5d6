import numpy as np
import pytest

from agent_logit.benchmarks.models import estimate_benchmark
from agent_logit.errors import IdentificationError, RankDeficiencyError, SpecError
from agent_logit.experiments.synthetic import simulate_endogenous_markets
from agent_logit.model.spec import CONTROL_COLUMN
from agent_logit.regression import (
    InstrumentSet,
    build_differentiation_instruments,
    control_function_stage1,
    ols_fit,
    tsls_fit,
)


def test_ols_matches_lstsq():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 2))
    y = 1.0 + 2.0 * X[:, 0] - 3.0 * X[:, 1] + rng.normal(scale=0.1, size=200)

    fit = ols_fit(y, X, intercept=True, column_names=["a", "b"])
    expected = np.linalg.lstsq(np.column_stack([np.ones(200), X]), y, rcond=None)[0]

    np.testing.assert_allclose(fit.coefficients, expected, rtol=1e-10, atol=1e-12)
    assert fit.column_names == ["intercept", "a", "b"]
    assert fit.coefficient("b") == pytest.approx(-3.0, abs=0.05)
    assert 0.99 < fit.r_squared <= 1.0
    assert np.all(fit.standard_errors > 0.0)


def test_rank_deficient_design_names_a_dependent_column():
    rng = np.random.default_rng(1)
    x1, x2 = rng.normal(size=(2, 50))
    X = np.column_stack([x1, x2, x1 + x2])

    with pytest.raises(RankDeficiencyError) as err:
        ols_fit(rng.normal(size=50), X, column_names=["x1", "x2", "x3"])
    assert len(err.value.columns) == 1
    assert err.value.columns[0] in {"x1", "x2", "x3"}
    assert err.value.exit_code == 3


def test_tsls_is_exact_without_noise():
    rng = np.random.default_rng(2)
    n = 100
    x = rng.normal(size=n)
    z = rng.normal(size=n)
    p = 0.5 + z + 0.3 * x
    y = 2.0 + 1.5 * x - 0.7 * p

    fit = tsls_fit(y, x, p, z, exog_names=["x"], endog_names=["p"], instrument_names=["z"])

    np.testing.assert_allclose(fit.coefficients, [2.0, 1.5, -0.7], atol=1e-10)
    np.testing.assert_allclose(fit.residuals, 0.0, atol=1e-10)
    assert fit.used_instruments == ["z"]


def test_tsls_with_regressors_as_instruments_is_ols():
    rng = np.random.default_rng(6)
    n = 300
    x, p = rng.normal(size=(2, n))
    y = 1.0 + 0.5 * x - 2.0 * p + rng.normal(scale=0.3, size=n)

    iv = tsls_fit(y, x, p, p, exog_names=["x"], endog_names=["p"], instrument_names=["p_iv"])
    ols = ols_fit(y, np.column_stack([x, p]), intercept=True, column_names=["x", "p"])

    assert iv.column_names == ols.column_names
    np.testing.assert_allclose(iv.coefficients, ols.coefficients, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(iv.standard_errors, ols.standard_errors, rtol=1e-6)
    np.testing.assert_allclose(iv.residuals, ols.residuals, atol=1e-8)


def test_tsls_recovers_an_endogenous_coefficient():
    rng = np.random.default_rng(8)
    n = 2000
    x, z, u = rng.normal(size=(3, n))
    p = 1.0 + z + 0.3 * x + 0.8 * u + rng.normal(scale=0.5, size=n)
    y = 2.0 + 1.5 * x - 0.7 * p + u

    fit = tsls_fit(y, x, p, z, exog_names=["x"], endog_names=["p"], instrument_names=["z"])
    se = fit.standard_errors[fit.column_names.index("p")]
    naive = ols_fit(y, np.column_stack([x, p]), intercept=True, column_names=["x", "p"])

    assert abs(fit.coefficient("p") + 0.7) <= 3.0 * se
    assert abs(naive.coefficient("p") + 0.7) > 10.0 * se


def test_tsls_identification_errors():
    rng = np.random.default_rng(3)
    n = 40
    x, p = rng.normal(size=(2, n))
    y = x + p

    with pytest.raises(IdentificationError, match="under-identified"):
        tsls_fit(y, x, np.column_stack([p, p ** 2]), rng.normal(size=n))
    with pytest.raises(RankDeficiencyError, match="zero-variance"):
        tsls_fit(y, x, p, np.ones(n), instrument_names=["flat"])


# ============================================================
# instruments and control function
# ============================================================

def test_differentiation_instruments_are_leave_one_out_means(two_taste_markets):
    ds, _, _ = two_taste_markets
    groups = {"g": [["alt1", "alt2", "alt3"], ["alt0"]]}
    iv = build_differentiation_instruments(ds, groups, ["cost"])

    c = ds.column_index("cost")
    A = ds.attribute_tensor[:, :, c]
    assert iv.names == ["iv_g_cost"]
    np.testing.assert_allclose(iv.values[:, 1, 0], (A[:, 2] + A[:, 3]) / 2)
    np.testing.assert_allclose(iv.values[:, 3, 0], (A[:, 1] + A[:, 2]) / 2)
    # singleton group
    np.testing.assert_array_equal(iv.values[:, 0, 0], 0.0)


def test_instrument_groups_are_checked(two_taste_markets):
    ds, _, _ = two_taste_markets
    with pytest.raises(SpecError, match="unknown alternative"):
        build_differentiation_instruments(ds, {"g": [["alt1", "bike"]]}, ["cost"])
    with pytest.raises(SpecError, match="twice"):
        build_differentiation_instruments(ds, {"g": [["alt1", "alt2"], ["alt2", "alt3"]]}, ["cost"])


def test_stage1_attaches_orthogonal_residuals():
    em = simulate_endogenous_markets(500, seed=4)
    stage = control_function_stage1(em.dataset, instruments=em.instruments)

    ds = stage.dataset
    c = ds.column_index(CONTROL_COLUMN)
    residuals = ds.attribute_tensor[:, :, c]
    np.testing.assert_array_equal(residuals[:, 0], 0.0)
    for j in (1, 2, 3):
        assert abs(np.mean(residuals[:, j])) < 1e-10
        assert abs(np.mean(residuals[:, j] * em.w[:, j])) < 1e-10
    assert set(stage.fits) == {"alt1", "alt2", "alt3"}
    assert stage.fits["alt1"].used_instruments == ["w"]


def test_stage1_without_varying_instruments_fails():
    em = simulate_endogenous_markets(50, seed=5)
    flat = InstrumentSet(values=np.ones_like(em.instruments.values), names=["one"])
    with pytest.raises(IdentificationError):
        control_function_stage1(em.dataset, instruments=flat)


def _inside_rows(ds):
    """Inverted shares and (x, price, control residual) per inside alternative."""
    cols = [ds.column_index(c) for c in ("x", "price", CONTROL_COLUMN)]
    S = ds.shares_matrix
    A = ds.attribute_tensor
    y = np.log(S[:, 1:] / S[:, :1]).ravel()
    X = np.stack([A[:, 1:, c].ravel() for c in cols], axis=1)
    return y, X


def test_price_endogeneity_is_corrected():
    em = simulate_endogenous_markets(5000, seed=11)
    ds = control_function_stage1(em.dataset, instruments=em.instruments).dataset
    y, X = _inside_rows(ds)

    naive = ols_fit(y, X[:, :2], column_names=["x", "price"]).coefficient("price")
    controlled = ols_fit(y, X, column_names=["x", "price", "control"]).coefficient("price")
    iv = estimate_benchmark(ds, "MNL", instruments=em.instruments).named_coefficients()["b_price"]

    assert em.price_error_correlation > 0.5
    assert abs(naive - em.beta_price) > 0.25 * abs(em.beta_price)
    assert controlled == pytest.approx(em.beta_price, rel=0.10)
    assert iv == pytest.approx(em.beta_price, rel=0.10)
