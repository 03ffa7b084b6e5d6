from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from agent_logit.analysis.shares import SharePredictor
from agent_logit.errors import EstimationError
from agent_logit.io.logging_utils import logger
from agent_logit.model.market import Dataset


# |delta share| at or below this counts as no change
_ZERO_CHANGE = 1e-14


def _perturbed(ds: Dataset, j: int, c: int, factor: float) -> Dataset:
    return ds.with_observations([obs.with_scaled_attribute(j, c, factor) for obs in ds.observations])


@dataclass
class ElasticityColumn:
    """Arc elasticities of every alternative's share w.r.t. one price."""

    target_alternative: str
    values: np.ndarray
    n_used: np.ndarray
    n_zero_price: int


@dataclass
class ElasticityReport:
    alternatives: List[str]
    priced: List[str]
    # cross[r, j]: % change of share j per 1% change of the price of priced[r]
    cross: np.ndarray
    perturbation: float
    n_zero_price: List[int] = field(default_factory=list)

    @property
    def direct(self) -> np.ndarray:
        return np.array([self.cross[r, self.alternatives.index(a)] for r, a in enumerate(self.priced)])

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.cross, index=self.priced, columns=self.alternatives)
        df.index.name = "price_of"
        return df.reset_index()


@dataclass
class DiversionMatrix:
    alternatives: List[str]
    # matrix[r, j] = D_{j* j} with j* the r-th alternative; NaN rows have no time column
    matrix: np.ndarray
    n_used: np.ndarray
    perturbation: float

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.matrix, index=self.alternatives, columns=self.alternatives)
        df.index.name = "time_of"
        return df.reset_index()


def price_elasticity(
    model: SharePredictor,
    ds: Dataset,
    target_column: str,
    target_alternative: str,
    perturbation: float = 0.01,
) -> ElasticityColumn:
    """
    mean_t [(d s_jt / s_jt) / (d p / p)] after raising the price of
    `target_alternative` by `perturbation`. Agents with zero price, and
    per alternative agents with zero predicted share, are left out.
    """
    if not perturbation > 0:
        raise ValueError(f"perturbation must be > 0, got {perturbation}")
    js = ds.spec.alternative_index(target_alternative)
    c = ds.column_index(target_column)

    priced = np.flatnonzero(ds.attribute_tensor[:, js, c] != 0.0)
    n_zero = len(ds) - priced.size
    if priced.size == 0:
        raise EstimationError(f"every agent has zero '{target_column}' for '{target_alternative}'")
    if n_zero:
        logger.info(f"Elasticity of '{target_alternative}' price: {n_zero} zero-price agents excluded")

    sub = ds.subset(priced) if n_zero else ds
    base = model.predict(sub)
    moved = model.predict(_perturbed(sub, js, c, 1.0 + perturbation))

    J = ds.spec.J
    values = np.zeros(J)
    n_used = np.zeros(J, dtype=np.int64)
    for j in range(J):
        ok = base[:, j] > 0.0
        n_used[j] = int(ok.sum())
        if n_used[j]:
            values[j] = float(np.mean((moved[ok, j] - base[ok, j]) / base[ok, j] / perturbation))
        else:
            values[j] = np.nan
    return ElasticityColumn(target_alternative=target_alternative, values=values, n_used=n_used, n_zero_price=n_zero)


def elasticity_report(
    model: SharePredictor,
    ds: Dataset,
    target_column: str,
    alternatives: Sequence[str],
    perturbation: float = 0.01,
) -> ElasticityReport:
    """Direct and cross price elasticities for each priced alternative."""
    columns = [price_elasticity(model, ds, target_column, a, perturbation) for a in alternatives]
    return ElasticityReport(
        alternatives=list(ds.spec.alternatives),
        priced=list(alternatives),
        cross=np.array([col.values for col in columns]).reshape(len(columns), ds.spec.J),
        perturbation=perturbation,
        n_zero_price=[col.n_zero_price for col in columns],
    )


def diversion_ratios(
    model: SharePredictor,
    ds: Dataset,
    time_columns: Mapping[str, str],
    perturbation: float = 0.01,
) -> DiversionMatrix:
    """
    D[j*, j] = mean_t(-d s_jt / d s_j*t) after raising the time of j*.
    The outflow d s_j* is taken as -sum_{j != j*} d s_j, so each row's
    off-diagonal entries sum to one; the diagonal is -1.
    """
    if not perturbation > 0:
        raise ValueError(f"perturbation must be > 0, got {perturbation}")
    spec = ds.spec
    J = spec.J
    D = np.full((J, J), np.nan)
    n_used = np.zeros(J, dtype=np.int64)
    base = model.predict(ds)

    for r, alt in enumerate(spec.alternatives):
        if alt not in time_columns:
            continue
        c = ds.column_index(time_columns[alt])
        delta = model.predict(_perturbed(ds, r, c, 1.0 + perturbation)) - base
        others = [j for j in range(J) if j != r]
        inflow = delta[:, others].sum(axis=1)
        ok = np.abs(inflow) > _ZERO_CHANGE
        n_used[r] = int(ok.sum())
        if not n_used[r]:
            raise EstimationError(f"no agent reacts to the time of '{alt}'; diversion row undefined")
        if n_used[r] < len(ds):
            logger.info(f"Diversion from '{alt}': {len(ds) - n_used[r]} agents without share change excluded")
        D[r, others] = np.mean(delta[ok][:, others] / inflow[ok, None], axis=0)
        D[r, r] = -1.0

    return DiversionMatrix(alternatives=list(spec.alternatives), matrix=D, n_used=n_used, perturbation=perturbation)
