from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import statsmodels.api as sm
from scipy import linalg
from statsmodels.sandbox.regression.gmm import IV2SLS

from agent_logit.errors import IdentificationError, RankDeficiencyError


INTERCEPT = "intercept"


@dataclass
class LinearModelFit:
    """
    Result of an OLS or 2SLS regression.
    Residuals are structural (y - X b with the original regressors).
    """

    coefficients: np.ndarray
    standard_errors: np.ndarray
    residuals: np.ndarray
    r_squared: float
    n_obs: int
    column_names: List[str]
    used_instruments: List[str] = field(default_factory=list)

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.column_names.index(name)])

    def to_dict(self) -> dict:
        return {
            "columns": list(self.column_names),
            "coefficients": [float(c) for c in self.coefficients],
            "standard_errors": [float(s) for s in self.standard_errors],
            "r_squared": float(self.r_squared),
            "n_obs": int(self.n_obs),
            "used_instruments": list(self.used_instruments),
        }


def _names(prefix: str, n: int, names: Optional[Sequence[str]]) -> List[str]:
    if names is None:
        return [f"{prefix}{i}" for i in range(n)]
    if len(names) != n:
        raise ValueError(f"expected {n} column names, got {len(names)}")
    return list(names)


def _as_matrix(X, n: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.size == 0:
        return np.zeros((n, 0))
    return X


def _check_rank(X: np.ndarray, names: Sequence[str]) -> None:
    """
    Column-pivoted QR rank test. statsmodels falls back to a pseudo-inverse
    on collinear designs, so dependent columns are reported here by name.

    :raises RankDeficiencyError: naming the columns that depend on the others
    """
    n, p = X.shape
    if n <= p:
        raise RankDeficiencyError(f"need more observations ({n}) than columns ({p})", columns=tuple(names))

    _, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, p) * np.finfo(np.float64).eps * (diag[0] if p else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < p:
        raise RankDeficiencyError("rank-deficient design", columns=tuple(names[i] for i in piv[rank:]))


def ols_fit(
    y,
    X,
    intercept: bool = False,
    column_names: Optional[Sequence[str]] = None,
) -> LinearModelFit:
    """
    Ordinary least squares with classical standard errors.

    :param y: response, length n
    :param X: design (n, p)
    :param intercept: prepend a column of ones named "intercept"
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.shape[0]
    X = _as_matrix(X, n)
    names = _names("x", X.shape[1], column_names)
    if intercept:
        X = np.column_stack([np.ones(n), X])
        names = [INTERCEPT] + names

    _check_rank(X, names)
    res = sm.OLS(y, X).fit()

    return LinearModelFit(
        coefficients=np.asarray(res.params, dtype=np.float64),
        standard_errors=np.asarray(res.bse, dtype=np.float64),
        residuals=np.asarray(res.resid, dtype=np.float64),
        r_squared=float(res.rsquared),
        n_obs=n,
        column_names=names,
    )


def tsls_fit(
    y,
    X_exog,
    X_endog,
    instruments,
    intercept: bool = True,
    exog_names: Optional[Sequence[str]] = None,
    endog_names: Optional[Sequence[str]] = None,
    instrument_names: Optional[Sequence[str]] = None,
) -> LinearModelFit:
    """
    Two-stage least squares on [intercept, exog, endog] with
    [intercept, exog, instruments] as the instrument matrix.
    Standard errors use the structural residuals.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.shape[0]
    X_exog = _as_matrix(X_exog, n)
    X_endog = _as_matrix(X_endog, n)
    Z_excl = _as_matrix(instruments, n)

    exog = _names("exog", X_exog.shape[1], exog_names)
    endog = _names("endog", X_endog.shape[1], endog_names)
    inst = _names("iv", Z_excl.shape[1], instrument_names)

    if Z_excl.shape[1] < X_endog.shape[1]:
        raise IdentificationError(
            f"under-identified: {Z_excl.shape[1]} instruments for {X_endog.shape[1]} endogenous columns"
        )
    flat = tuple(inst[i] for i in range(Z_excl.shape[1]) if np.ptp(Z_excl[:, i]) == 0.0)
    if flat:
        raise RankDeficiencyError("zero-variance instrument", columns=flat)

    head = [np.ones(n)] if intercept else []
    lead = [INTERCEPT] if intercept else []
    Z = np.column_stack(head + [X_exog, Z_excl])
    _check_rank(Z, lead + exog + inst)

    names = lead + exog + endog
    X = np.column_stack(head + [X_exog, X_endog])

    # first stage fitted values must span every regressor
    X_hat = Z @ np.linalg.lstsq(Z, X, rcond=None)[0]
    try:
        _check_rank(X_hat, names)
    except RankDeficiencyError as exc:
        raise RankDeficiencyError("weak first stage: instruments do not move the endogenous columns", columns=exc.columns) from exc

    res = IV2SLS(y, X, instrument=Z).fit()

    return LinearModelFit(
        coefficients=np.asarray(res.params, dtype=np.float64),
        standard_errors=np.asarray(res.bse, dtype=np.float64),
        residuals=np.asarray(res.resid, dtype=np.float64),
        r_squared=float(res.rsquared),
        n_obs=n,
        column_names=names,
        used_instruments=inst,
    )
