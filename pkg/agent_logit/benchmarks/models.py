from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Mapping, Optional, Sequence

import numpy as np

from agent_logit.analysis.shares import softmax_rows
from agent_logit.errors import ConvergenceError, DatasetValidationError, IdentificationError, SpecError
from agent_logit.io.logging_utils import logger
from agent_logit.model.market import Dataset, MarketObservation
from agent_logit.model.spec import ModelSpec
from agent_logit.regression.instruments import GroupSpec, InstrumentSet
from agent_logit.regression.least_squares import LinearModelFit, ols_fit, tsls_fit


ModelKind = Literal["MNL", "NL", "IPDL"]
MODEL_KINDS = ("MNL", "NL", "IPDL")

DAMPING = 0.5
FIXED_POINT_TOL = 1e-10
FIXED_POINT_MAX_ITER = 10_000


@dataclass
class BenchmarkFit:
    """
    Market-level logit benchmark fitted on inverted shares
    ln(s_j / s_0) = delta_j + sum_d rho_d ln(s_j / S_d(j)).
    """

    model_kind: str
    parameter_names: List[str]
    coefficients: np.ndarray
    rho: Dict[str, float]
    reference_alternative: str
    groups: Dict[str, List[List[str]]]
    fit: Optional[LinearModelFit] = None
    n_excluded: int = 0

    def with_rho(self, rho: Mapping[str, float]) -> "BenchmarkFit":
        return BenchmarkFit(
            model_kind=self.model_kind,
            parameter_names=list(self.parameter_names),
            coefficients=self.coefficients.copy(),
            rho={d: float(rho.get(d, 0.0)) for d in self.rho},
            reference_alternative=self.reference_alternative,
            groups=self.groups,
            fit=self.fit,
            n_excluded=self.n_excluded,
        )

    def named_coefficients(self) -> Dict[str, float]:
        out = {n: float(c) for n, c in zip(self.parameter_names, self.coefficients)}
        out.update({f"rho_{d}": r for d, r in self.rho.items()})
        return out

    def to_dict(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "parameter_names": list(self.parameter_names),
            "coefficients": [float(c) for c in self.coefficients],
            "rho": dict(self.rho),
            "reference_alternative": self.reference_alternative,
            "groups": {d: [list(g) for g in gs] for d, gs in self.groups.items()},
            "n_excluded": self.n_excluded,
            "fit": None if self.fit is None else self.fit.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkFit":
        return cls(
            model_kind=data["model_kind"],
            parameter_names=list(data["parameter_names"]),
            coefficients=np.array(data["coefficients"], dtype=np.float64),
            rho={d: float(r) for d, r in data["rho"].items()},
            reference_alternative=data["reference_alternative"],
            groups={d: [list(g) for g in gs] for d, gs in data["groups"].items()},
            n_excluded=int(data.get("n_excluded", 0)),
        )


def _benchmark_parameters(spec: ModelSpec) -> List[int]:
    """Spec parameters used by benchmarks: all but the control parameter."""
    return [k for k, p in enumerate(spec.parameter_names) if p != spec.control_parameter]


def _clean_groups(spec: ModelSpec, groups: GroupSpec) -> Dict[str, List[List[str]]]:
    ref = spec.reference_alternative
    cleaned: Dict[str, List[List[str]]] = {}
    for dim, subsets in groups.items():
        out = []
        for subset in subsets:
            unknown = [a for a in subset if a not in spec.alternatives]
            if unknown:
                raise SpecError(f"group dimension '{dim}' references unknown alternative '{unknown[0]}'")
            if ref in subset:
                logger.warning(f"Reference alternative '{ref}' removed from group {list(subset)} of '{dim}'")
            kept = [a for a in subset if a != ref]
            if kept:
                out.append(kept)
        cleaned[dim] = out
    return cleaned


def _group_members(spec: ModelSpec, groups: Dict[str, List[List[str]]]) -> Dict[str, List[List[int]]]:
    """dimension -> for each alternative index, the indices of its group (itself if ungrouped)."""
    members: Dict[str, List[List[int]]] = {}
    for dim, subsets in groups.items():
        table = [[j] for j in range(spec.J)]
        for subset in subsets:
            idx = [spec.alternative_index(a) for a in subset]
            for j in idx:
                table[j] = idx
        members[dim] = table
    return members


def estimate_benchmark(
    ds: Dataset,
    kind: str,
    groups: Optional[GroupSpec] = None,
    instruments: Optional[InstrumentSet] = None,
) -> BenchmarkFit:
    """
    Fit MNL, NL or IPDL by regression on inverted shares.

    One row per agent and inside alternative with a positive share;
    regressors are design differences against the reference alternative
    (ASCs fall out of the constant columns). NL/IPDL add one within-group
    log-share term per dimension, instrumented by `instruments`. MNL is
    estimated by 2SLS only when the model spec declares an endogenous column.
    """
    if kind not in MODEL_KINDS:
        raise SpecError(f"unknown benchmark '{kind}', expected one of {', '.join(MODEL_KINDS)}")
    spec = ds.spec
    groups = _clean_groups(spec, groups or {}) if kind != "MNL" else {}
    if kind == "NL" and len(groups) != 1:
        raise SpecError(f"NL needs exactly one grouping dimension, got {len(groups)}")
    if kind == "IPDL" and not groups:
        raise SpecError("IPDL needs at least one grouping dimension")

    j0 = spec.alternative_index(spec.reference_alternative)
    shares = ds.shares_matrix
    bad = np.flatnonzero(shares[:, j0] <= 0.0)
    if bad.size:
        raise DatasetValidationError(
            "reference alternative has zero share", agent_id=ds.agent_ids[bad[0]], column="share"
        )

    params = _benchmark_parameters(spec)
    names = [spec.parameter_names[k] for k in params]
    members = _group_members(spec, groups)
    designs = ds.design_tensor

    y, X, G, Z = [], [], [], []
    excluded = 0
    for t in range(len(ds)):
        for j in range(spec.J):
            if j == j0:
                continue
            if shares[t, j] <= 0.0:
                excluded += 1
                continue
            y.append(math.log(shares[t, j] / shares[t, j0]))
            X.append(designs[t, j, params] - designs[t, j0, params])
            G.append([math.log(shares[t, j] / shares[t, members[d][j]].sum()) for d in groups])
            if instruments is not None:
                Z.append(instruments.values[t, j])
    if excluded:
        logger.info(f"{kind}: excluded {excluded} zero-share rows")
    if not y:
        raise DatasetValidationError("no rows with positive inside shares")

    y = np.array(y)
    X = np.array(X).reshape(len(y), len(params))
    G = np.array(G).reshape(len(y), len(groups))

    endog_cols: List[int] = []
    if spec.endogenous_column is not None:
        endog_cols = [
            i for i, k in enumerate(params)
            if any(spec.design_map[a].get(spec.parameter_names[k]) == spec.endogenous_column for a in spec.alternatives)
        ]
    exog_cols = [i for i in range(len(params)) if i not in endog_cols]
    X_endog = np.column_stack([X[:, endog_cols], G]) if (endog_cols or G.shape[1]) else np.zeros((len(y), 0))
    endog_names = [names[i] for i in endog_cols] + [f"rho_{d}" for d in groups]

    if X_endog.shape[1] == 0:
        fit = ols_fit(y, X, intercept=False, column_names=names)
    else:
        if instruments is None:
            raise IdentificationError(f"{kind} has endogenous regressors but no instruments were given")
        Z = np.array(Z).reshape(len(y), instruments.n_instruments)
        keep = [l for l in range(Z.shape[1]) if np.ptp(Z[:, l]) > 0.0]
        if len(keep) < Z.shape[1]:
            logger.warning(f"{kind}: dropped {Z.shape[1] - len(keep)} constant instrument column(s)")
        fit = tsls_fit(
            y,
            X[:, exog_cols],
            X_endog,
            Z[:, keep],
            intercept=False,
            exog_names=[names[i] for i in exog_cols],
            endog_names=endog_names,
            instrument_names=[instruments.names[l] for l in keep],
        )

    coef = {n: fit.coefficient(n) for n in fit.column_names}
    result = BenchmarkFit(
        model_kind=kind,
        parameter_names=names,
        coefficients=np.array([coef[n] for n in names]),
        rho={d: coef[f"rho_{d}"] for d in groups},
        reference_alternative=spec.reference_alternative,
        groups=groups,
        fit=fit,
        n_excluded=excluded,
    )
    logger.info(f"{kind} fitted on {fit.n_obs} rows: " + ", ".join(f"{k}={v:.4g}" for k, v in result.named_coefficients().items()))
    return result


def _deltas(fit: BenchmarkFit, spec: ModelSpec, designs: np.ndarray) -> np.ndarray:
    """delta[t, j] = beta @ (X_tj - X_t0); zero for the reference alternative."""
    params = _benchmark_parameters(spec)
    if [spec.parameter_names[k] for k in params] != fit.parameter_names:
        raise SpecError("benchmark fit does not match the model spec parameters")
    j0 = spec.alternative_index(fit.reference_alternative)
    D = designs[..., params]
    return (D - D[..., j0:j0 + 1, :]) @ fit.coefficients


def _solve_grouped(delta: np.ndarray, rho: np.ndarray, members: List[List[List[int]]], j0: int) -> np.ndarray:
    """Damped log-space fixed point of s = softmax(delta + sum_d rho_d ln(s / S_d))."""
    J = delta.shape[0]
    s = softmax_rows(delta)[0]
    inside = [j for j in range(J) if j != j0]
    residual = math.inf
    for _ in range(FIXED_POINT_MAX_ITER):
        log_s = np.log(s)
        group_term = np.zeros(J)
        for d, table in enumerate(members):
            for j in inside:
                group_term[j] += rho[d] * (log_s[j] - math.log(s[table[j]].sum()))
        v = delta + group_term
        residual = float(np.max(np.abs((log_s[inside] - log_s[j0]) - v[inside]))) if inside else 0.0
        if residual < FIXED_POINT_TOL:
            return s
        target = softmax_rows(v)[0]
        mixed = DAMPING * np.log(target) + (1.0 - DAMPING) * log_s
        s = softmax_rows(mixed)[0]
    raise ConvergenceError("grouped-logit share fixed point did not converge", residual=residual)


def benchmark_share_matrix(fit: BenchmarkFit, ds: Dataset) -> np.ndarray:
    """(T, J) predicted shares for every agent of `ds`."""
    spec = ds.spec
    delta = _deltas(fit, spec, ds.design_tensor)
    rho = np.array([fit.rho[d] for d in fit.groups]) if fit.rho else np.zeros(0)
    if fit.model_kind == "MNL" or not np.any(rho != 0.0):
        return softmax_rows(delta)

    table = _group_members(spec, fit.groups)
    members = [table[d] for d in fit.groups]
    j0 = spec.alternative_index(fit.reference_alternative)
    return np.stack([_solve_grouped(delta[t], rho, members, j0) for t in range(len(ds))])


def benchmark_predict_shares(
    fit: BenchmarkFit,
    obs: MarketObservation,
    spec: ModelSpec,
    attribute_columns: Optional[Sequence[str]] = None,
) -> np.ndarray:
    columns = spec.attribute_columns if attribute_columns is None else attribute_columns
    design = spec.design_rows(obs.attributes, columns)
    delta = _deltas(fit, spec, design[None, :, :])
    rho = np.array([fit.rho[d] for d in fit.groups]) if fit.rho else np.zeros(0)
    if fit.model_kind == "MNL" or not np.any(rho != 0.0):
        return softmax_rows(delta)[0]
    table = _group_members(spec, fit.groups)
    return _solve_grouped(delta[0], rho, [table[d] for d in fit.groups], spec.alternative_index(fit.reference_alternative))


class BenchmarkPredictor:
    def __init__(self, fit: BenchmarkFit):
        self.fit = fit

    def predict(self, ds: Dataset) -> np.ndarray:
        return benchmark_share_matrix(self.fit, ds)
