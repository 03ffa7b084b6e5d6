from __future__ import annotations

from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from agent_logit.errors import EstimationError, SpecError
from agent_logit.io.logging_utils import logger
from agent_logit.model.market import Dataset, MarketObservation
from agent_logit.model.spec import ModelSpec


def _param(spec: ModelSpec, name: Optional[str], label: str) -> int:
    if name is None:
        raise SpecError(f"model spec declares no {label}")
    return spec.index(name)


def value_of_time(theta, spec: ModelSpec, time_param: Optional[str] = None, cost_param: Optional[str] = None) -> Optional[float]:
    """
    theta_time / theta_cost in currency per time unit of the time column
    after scaling (per hour when time is converted to hours).
    None when the cost parameter is 0.
    """
    k_time = _param(spec, time_param or spec.time_parameter, "time parameter")
    k_cost = _param(spec, cost_param or spec.cost_parameter, "cost parameter")
    cost = float(theta[k_cost])
    if cost == 0.0:
        return None
    return float(theta[k_time]) / cost


def compensating_variation(
    theta,
    obs: MarketObservation,
    spec: ModelSpec,
    removed: str,
    attribute_columns: Optional[Sequence[str]] = None,
) -> Optional[float]:
    """
    Welfare loss per trip from removing `removed` from the choice set:
    (1/theta_cost) * [logsum(J without removed) - logsum(J)].
    None when theta_cost >= 0.
    """
    theta = np.asarray(theta, dtype=np.float64)
    k_cost = _param(spec, spec.cost_parameter, "cost parameter")
    if not theta[k_cost] < 0.0:
        return None

    columns = spec.attribute_columns if attribute_columns is None else attribute_columns
    V = spec.design_rows(obs.attributes, columns) @ theta
    r = spec.alternative_index(removed)
    keep = np.array([j != r for j in range(spec.J)])
    if not np.any(np.isfinite(V[keep])):
        raise EstimationError(f"removing '{removed}' leaves no alternative with finite utility")
    return float((logsumexp(V[keep]) - logsumexp(V)) / theta[k_cost])


def vot_by_group(
    ds: Dataset,
    thetas: Mapping[str, np.ndarray],
    groups: Mapping[str, str],
) -> pd.DataFrame:
    """
    VOT summary per group label (agent_id -> label): agent count, agents
    with undefined VOT, mean, median and demand-weighted mean.
    """
    rows = []
    for obs in ds.observations:
        vot = value_of_time(thetas[obs.agent_id], ds.spec)
        rows.append({"group": groups[obs.agent_id], "vot": np.nan if vot is None else vot, "demand": obs.demand})
    df = pd.DataFrame(rows)

    out = []
    for label, block in df.groupby("group", sort=True):
        valid = block.dropna(subset=["vot"])
        weight = valid["demand"].sum()
        out.append({
            "group": label,
            "n_agents": len(block),
            "n_undefined": int(block["vot"].isna().sum()),
            "mean_vot": float(valid["vot"].mean()) if len(valid) else np.nan,
            "median_vot": float(valid["vot"].median()) if len(valid) else np.nan,
            "weighted_mean_vot": float((valid["vot"] * valid["demand"]).sum() / weight) if weight > 0 else np.nan,
        })
    return pd.DataFrame(out)


def vot_by_segment(ds: Dataset, thetas: Mapping[str, np.ndarray]) -> pd.DataFrame:
    df = vot_by_group(ds, thetas, {o.agent_id: o.segment for o in ds.observations})
    return df.rename(columns={"group": "segment"})


def cv_table(ds: Dataset, thetas: Mapping[str, np.ndarray], removed: str) -> pd.DataFrame:
    """Per-agent compensating variation; NaN where theta_cost >= 0."""
    rows = []
    for obs in ds.observations:
        cv = compensating_variation(thetas[obs.agent_id], obs, ds.spec, removed, ds.attribute_columns)
        rows.append({
            "agent_id": obs.agent_id,
            "segment": obs.segment,
            "demand": obs.demand,
            "cv": np.nan if cv is None else cv,
        })
    df = pd.DataFrame(rows)
    n_bad = int(df["cv"].isna().sum())
    if n_bad:
        logger.warning(f"CV undefined for {n_bad} agents with non-negative cost parameter")
    return df


def cv_cdf(cv: pd.DataFrame, by_segment: bool = False) -> pd.DataFrame:
    """
    Demand-weighted cumulative distribution of CV samples: columns
    (segment,) cv, cumulative_share; cumulative_share is nondecreasing
    within each segment and ends at 1.
    """
    valid = cv.dropna(subset=["cv"])
    parts = valid.groupby("segment", sort=True) if by_segment else [("all", valid)]
    out = []
    for label, block in parts:
        block = block.sort_values(["cv", "agent_id"], kind="mergesort")
        weights = block["demand"].to_numpy(dtype=np.float64)
        total = weights.sum()
        if total <= 0.0:
            weights = np.ones_like(weights)
            total = weights.sum()
        out.append(pd.DataFrame({
            "segment": label,
            "cv": block["cv"].to_numpy(),
            "cumulative_share": np.minimum(np.cumsum(weights) / total, 1.0),
        }))
    if not out:
        return pd.DataFrame(columns=["segment", "cv", "cumulative_share"])
    return pd.concat(out, ignore_index=True)
