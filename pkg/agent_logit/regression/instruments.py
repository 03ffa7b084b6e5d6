from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from agent_logit.errors import IdentificationError, SpecError
from agent_logit.io.logging_utils import logger
from agent_logit.model.market import Dataset
from agent_logit.model.spec import CONTROL_COLUMN
from agent_logit.regression.least_squares import LinearModelFit, ols_fit


GroupSpec = Mapping[str, Sequence[Sequence[str]]]


@dataclass
class InstrumentSet:
    """
    values[t, j, l]: instrument l for alternative j of agent t.
    """

    values: np.ndarray
    names: List[str]

    @property
    def n_instruments(self) -> int:
        return len(self.names)

    def for_alternative(self, j: int) -> np.ndarray:
        return self.values[:, j, :]


@dataclass
class StageOneResult:
    dataset: Dataset
    # alternative -> first-stage regression of the endogenous column
    fits: Dict[str, LinearModelFit] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {alt: fit.to_dict() for alt, fit in self.fits.items()}


def _check_groups(ds: Dataset, groups: GroupSpec) -> None:
    alternatives = set(ds.spec.alternatives)
    for dim, subsets in groups.items():
        seen = set()
        for subset in subsets:
            for alt in subset:
                if alt not in alternatives:
                    raise SpecError(f"group dimension '{dim}' references unknown alternative '{alt}'")
                if alt in seen:
                    raise SpecError(f"alternative '{alt}' appears twice in dimension '{dim}'")
                seen.add(alt)


def build_differentiation_instruments(
    ds: Dataset,
    groups: GroupSpec,
    columns: Sequence[str],
) -> InstrumentSet:
    """
    Leave-one-out group means: for each dimension and column, the
    instrument of alternative j is the mean of the column over the other
    alternatives in j's group. Alternatives outside every group of a
    dimension, and singleton groups, get 0.
    """
    _check_groups(ds, groups)
    col_idx = [ds.column_index(c) for c in columns]
    attrs = ds.attribute_tensor
    T, J = len(ds), ds.spec.J

    blocks: List[np.ndarray] = []
    names: List[str] = []
    for dim, subsets in groups.items():
        for col, c in zip(columns, col_idx):
            z = np.zeros((T, J))
            for subset in subsets:
                members = [ds.spec.alternative_index(a) for a in subset]
                if len(members) == 1:
                    logger.warning(
                        f"Group {list(subset)} of dimension '{dim}' has a single member; instrument set to 0"
                    )
                    continue
                total = attrs[:, members, c].sum(axis=1)
                for j in members:
                    z[:, j] = (total - attrs[:, j, c]) / (len(members) - 1)
            blocks.append(z)
            names.append(f"iv_{dim}_{col}")

    values = np.stack(blocks, axis=-1) if blocks else np.zeros((T, J, 0))
    return InstrumentSet(values=values, names=names)


def control_function_stage1(
    ds: Dataset,
    instruments: Optional[InstrumentSet] = None,
    groups: Optional[GroupSpec] = None,
    instrument_columns: Optional[Sequence[str]] = None,
) -> StageOneResult:
    """
    First stage of the control-function correction.

    For every alternative carrying the control parameter, the endogenous
    column is regressed (pooled over agents) on an intercept, the
    alternative's other varying attributes and the instruments. The
    residuals are attached as the control residual column; other
    alternatives get 0 there.
    """
    spec = ds.spec
    if spec.endogenous_column is None:
        logger.debug("No endogenous column declared; stage 1 skipped")
        return StageOneResult(dataset=ds)

    if instruments is None:
        if not groups or not instrument_columns:
            raise SpecError("control function needs instruments, or groups and instrument_columns to build them")
        instruments = build_differentiation_instruments(ds, groups, instrument_columns)

    attrs = ds.attribute_tensor
    endog_c = ds.column_index(spec.endogenous_column)
    residuals = np.zeros((len(ds), spec.J))
    fits: Dict[str, LinearModelFit] = {}

    for alt in spec.endogenous_alternatives:
        j = spec.alternative_index(alt)
        y = attrs[:, j, endog_c]

        exog_cols = [c for c in dict.fromkeys(spec.columns_used_by(alt)) if c != spec.endogenous_column]
        exog = [attrs[:, j, ds.column_index(c)] for c in exog_cols]
        keep_exog = [(c, v) for c, v in zip(exog_cols, exog) if np.ptp(v) > 0.0]

        Z = instruments.for_alternative(j)
        keep_iv = [(n, Z[:, l]) for l, n in enumerate(instruments.names) if np.ptp(Z[:, l]) > 0.0]
        dropped = len(instruments.names) - len(keep_iv)
        if dropped:
            logger.warning(f"Stage 1 for '{alt}': dropped {dropped} constant instrument column(s)")
        if not keep_iv:
            raise IdentificationError(f"no varying instrument for endogenous alternative '{alt}'")

        names = [c for c, _ in keep_exog] + [n for n, _ in keep_iv]
        X = np.column_stack([v for _, v in keep_exog] + [v for _, v in keep_iv])
        fit = ols_fit(y, X, intercept=True, column_names=names)
        fit.used_instruments = [n for n, _ in keep_iv]
        residuals[:, j] = fit.residuals
        fits[alt] = fit
        logger.info(f"Stage 1 '{alt}': R^2={fit.r_squared:.4f} on {fit.n_obs} agents")

    return StageOneResult(dataset=ds.with_column(CONTROL_COLUMN, residuals), fits=fits)
