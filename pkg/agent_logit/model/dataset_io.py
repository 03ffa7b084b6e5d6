from __future__ import annotations

import math
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from agent_logit.errors import DatasetValidationError, SpecError
from agent_logit.io.logging_utils import logger
from agent_logit.model.market import Dataset, MarketObservation
from agent_logit.model.spec import ModelSpec


AGENT_FIELDS = (
    "agent_id",
    "segment",
    "region_id",
    "origin_x",
    "origin_y",
    "destination_x",
    "destination_y",
)
ROW_FIELDS = AGENT_FIELDS + ("alternative",)
VALUE_FIELDS = ("share", "demand")
SPLIT_COLUMN = "split"

TRIP_KEYS = ("segment", "origin_zone", "destination_zone")
TRIP_COORDS = ("origin_x", "origin_y", "destination_x", "destination_y")

_STRING_COLUMNS = {"agent_id": str, "segment": str, "region_id": str, "alternative": str, SPLIT_COLUMN: str}


def _read_frame(path: str, dtype: Dict[str, type]) -> pd.DataFrame:
    if not os.path.exists(path):
        raise DatasetValidationError(f"file not found: {path}")
    try:
        return pd.read_csv(path, dtype=dtype, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise DatasetValidationError("no observations")


def _numeric_column(df: pd.DataFrame, column: str) -> pd.Series:
    """Parse a column as float; non-blank cells that fail to parse are errors."""
    raw = df[column]
    values = pd.to_numeric(raw, errors="coerce")
    bad = values.isna() & raw.notna() & (raw.astype(str).str.strip() != "")
    if bad.any():
        row = df.loc[bad].iloc[0]
        agent = row["agent_id"] if "agent_id" in df.columns else None
        raise DatasetValidationError(f"non-numeric value '{raw[bad].iloc[0]}'", agent_id=agent, column=column)
    return values.astype(np.float64)


# ============================================================
# markets CSV
# ============================================================

def load_dataset_csv(path: str, spec: ModelSpec) -> Dataset:
    """
    Read a long-format markets CSV (one row per agent x alternative).

    Columns: agent_id, segment, region_id, origin_x, origin_y, destination_x,
    destination_y, alternative, one column per attribute, share, demand and an
    optional `split` tag. Columns outside that set are kept as extra
    attribute columns (instruments, control residuals).
    """
    df = _read_frame(path, _STRING_COLUMNS)
    if df.empty:
        raise DatasetValidationError("no observations")

    missing = [c for c in ROW_FIELDS + VALUE_FIELDS + spec.attribute_columns if c not in df.columns]
    if missing:
        raise DatasetValidationError(f"{path} lacks required columns", column=", ".join(missing))

    fixed = set(ROW_FIELDS + VALUE_FIELDS + (SPLIT_COLUMN,))
    extra = [c for c in df.columns if c not in fixed and c not in spec.attribute_columns]
    attribute_columns = tuple(spec.attribute_columns) + tuple(extra)

    for c in ("segment", "region_id"):
        df[c] = df[c].fillna("")
    numeric = {c: _numeric_column(df, c) for c in attribute_columns + VALUE_FIELDS + TRIP_COORDS}

    dup = df.duplicated(subset=["agent_id", "alternative"], keep="first")
    if dup.any():
        row = df.loc[dup].iloc[0]
        raise DatasetValidationError(
            f"duplicate row for alternative '{row['alternative']}'", agent_id=row["agent_id"], column="alternative"
        )

    unknown = ~df["alternative"].isin(spec.alternatives)
    if unknown.any():
        row = df.loc[unknown].iloc[0]
        raise DatasetValidationError(
            f"unknown alternative '{row['alternative']}'", agent_id=row["agent_id"], column="alternative"
        )

    used_by = {a: set(spec.columns_used_by(a)) for a in spec.alternatives}
    observations: List[MarketObservation] = []
    tags: List[str] = []
    has_split = SPLIT_COLUMN in df.columns

    for agent_id, block in df.groupby("agent_id", sort=False):
        present = set(block["alternative"])
        for alt in spec.alternatives:
            if alt not in present:
                raise DatasetValidationError(f"missing alternative '{alt}'", agent_id=agent_id, column="alternative")

        rows = {alt: idx for idx, alt in zip(block.index, block["alternative"])}
        attrs = np.zeros((spec.J, len(attribute_columns)), dtype=np.float64)
        shares = np.zeros(spec.J, dtype=np.float64)
        for j, alt in enumerate(spec.alternatives):
            idx = rows[alt]
            for c, col in enumerate(attribute_columns):
                value = numeric[col].at[idx]
                if math.isnan(value):
                    if col in used_by[alt]:
                        raise DatasetValidationError(
                            f"blank value for alternative '{alt}'", agent_id=agent_id, column=col
                        )
                    value = 0.0
                attrs[j, c] = value
            shares[j] = numeric["share"].at[idx]
            if math.isnan(shares[j]):
                raise DatasetValidationError(f"blank share for alternative '{alt}'", agent_id=agent_id, column="share")

        first = block.index[0]
        per_agent = {c: _agent_constant(numeric[c] if c in numeric else df[c], block.index, agent_id, c)
                     for c in ("segment", "region_id", "demand") + TRIP_COORDS}
        demand = per_agent["demand"]
        if math.isnan(demand):
            raise DatasetValidationError("blank demand", agent_id=agent_id, column="demand")

        observations.append(
            MarketObservation(
                agent_id=str(agent_id),
                segment=str(df.at[first, "segment"]),
                region_id=str(df.at[first, "region_id"]),
                origin_xy=(_coord(per_agent["origin_x"]), _coord(per_agent["origin_y"])),
                destination_xy=(_coord(per_agent["destination_x"]), _coord(per_agent["destination_y"])),
                attributes=attrs,
                shares=shares,
                demand=demand,
            )
        )
        if has_split:
            tags.append(str(df.at[first, SPLIT_COLUMN]))

    ds = Dataset(
        spec=spec,
        observations=tuple(observations),
        attribute_columns=attribute_columns,
        split_tag=tuple(tags) if has_split else None,
    )
    logger.info(f"Loaded {len(ds)} agents x {spec.J} alternatives from {path}")
    return ds


def _agent_constant(series: pd.Series, index, agent_id: str, column: str):
    values = series.loc[index]
    distinct = values.dropna().unique()
    if len(distinct) > 1:
        raise DatasetValidationError("value differs between rows of the same agent", agent_id=agent_id, column=column)
    return values.iloc[0]


def _coord(value: float) -> float:
    return 0.0 if math.isnan(value) else float(value)


def dataset_frame(ds: Dataset) -> pd.DataFrame:
    """Long-format frame in agent order, alternatives in spec order."""
    records = []
    for t, obs in enumerate(ds.observations):
        for j, alt in enumerate(ds.spec.alternatives):
            rec = {
                "agent_id": obs.agent_id,
                "segment": obs.segment,
                "region_id": obs.region_id,
                "origin_x": obs.origin_xy[0],
                "origin_y": obs.origin_xy[1],
                "destination_x": obs.destination_xy[0],
                "destination_y": obs.destination_xy[1],
                "alternative": alt,
            }
            for c, col in enumerate(ds.attribute_columns):
                rec[col] = obs.attributes[j, c]
            rec["share"] = obs.shares[j]
            rec["demand"] = obs.demand
            if ds.split_tag is not None:
                rec[SPLIT_COLUMN] = ds.split_tag[t]
            records.append(rec)
    return pd.DataFrame.from_records(records)


def write_dataset_csv(ds: Dataset, path: str) -> str:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    # default float repr is the shortest round-trip text
    dataset_frame(ds).to_csv(path, index=False)
    return path


# ============================================================
# trips -> markets
# ============================================================

def load_trips_csv(path: str) -> pd.DataFrame:
    """
    Individual trip records: segment, origin_zone, destination_zone,
    alternative (the chosen one) and the attributes observed for it.
    Optional: origin/destination coordinates and region_id.
    """
    dtype = {k: str for k in TRIP_KEYS + ("alternative", "region_id")}
    trips = _read_frame(path, dtype)
    missing = [c for c in TRIP_KEYS + ("alternative",) if c not in trips.columns]
    if missing:
        raise DatasetValidationError(f"{path} lacks trip columns", column=", ".join(missing))
    return trips


def aggregate_trips(
    trips: pd.DataFrame,
    spec: ModelSpec,
    alternative_attributes: Optional[pd.DataFrame] = None,
    group_keys: Sequence[str] = TRIP_KEYS,
) -> Dataset:
    """
    Collapse individual trips into one market per (segment, origin zone,
    destination zone).

    Attributes are unweighted means over the group's trips that chose each
    alternative; shares are chosen-alternative frequencies and demand is
    the trip count. Alternatives nobody in a group chose take their
    attributes from `alternative_attributes` (group keys + alternative +
    attribute columns).

    :return: Dataset with agent ids "segment|origin|destination"
    """
    keys = list(group_keys)
    columns = list(spec.attribute_columns)
    if trips.empty:
        raise DatasetValidationError("no observations")
    for c in columns:
        if c not in trips.columns:
            trips = trips.assign(**{c: np.nan})

    unknown = ~trips["alternative"].isin(spec.alternatives)
    if unknown.any():
        raise DatasetValidationError(
            f"unknown alternative '{trips.loc[unknown, 'alternative'].iloc[0]}'", column="alternative"
        )

    means = trips.groupby(keys + ["alternative"], sort=True)[columns].mean()
    counts = trips.groupby(keys + ["alternative"], sort=True).size()
    coords = [c for c in TRIP_COORDS if c in trips.columns]
    coord_means = trips.groupby(keys, sort=True)[coords].mean() if coords else None
    regions = trips.groupby(keys, sort=True)["region_id"].first() if "region_id" in trips.columns else None

    external = _external_lookup(alternative_attributes, keys, columns)
    used_by = {a: set(spec.columns_used_by(a)) for a in spec.alternatives}

    observations: List[MarketObservation] = []
    for group, total in trips.groupby(keys, sort=True).size().items():
        group = group if isinstance(group, tuple) else (group,)
        label = tuple(str(g) for g in group)
        agent_id = "|".join(label)
        shares = np.zeros(spec.J)
        attrs = np.zeros((spec.J, len(columns)))

        for j, alt in enumerate(spec.alternatives):
            key = group + (alt,)
            observed = key in counts.index
            shares[j] = counts[key] / total if observed else 0.0
            row = means.loc[key] if observed else None
            for c, col in enumerate(columns):
                value = float(row[col]) if row is not None else math.nan
                if math.isnan(value) and col in used_by[alt]:
                    value = external.get((label + (alt,), col), math.nan)
                    if math.isnan(value):
                        raise DatasetValidationError(
                            f"unobserved alternative attributes for '{alt}'", agent_id=agent_id, column=col
                        )
                attrs[j, c] = 0.0 if math.isnan(value) else value

        gkey = group if len(group) > 1 else group[0]
        xy = coord_means.loc[gkey] if coord_means is not None else {}
        region = str(regions.loc[gkey]) if regions is not None else label[-1]
        observations.append(
            MarketObservation(
                agent_id=agent_id,
                segment=str(group[0]),
                region_id=region,
                origin_xy=(float(xy.get("origin_x", 0.0)), float(xy.get("origin_y", 0.0))),
                destination_xy=(float(xy.get("destination_x", 0.0)), float(xy.get("destination_y", 0.0))),
                attributes=attrs,
                shares=shares,
                demand=float(total),
            )
        )

    ds = Dataset(spec=spec, observations=tuple(observations), attribute_columns=tuple(columns))
    logger.info(f"Aggregated {len(trips)} trips into {len(ds)} markets")
    return ds


def _external_lookup(frame: Optional[pd.DataFrame], keys: List[str], columns: List[str]) -> Dict[Tuple, float]:
    if frame is None:
        return {}
    missing = [c for c in keys + ["alternative"] if c not in frame.columns]
    if missing:
        raise DatasetValidationError("alternative attribute table lacks key columns", column=", ".join(missing))
    lookup: Dict[Tuple, float] = {}
    for rec in frame.to_dict("records"):
        key = tuple(str(rec[k]) for k in keys) + (str(rec["alternative"]),)
        for col in columns:
            if col in rec and rec[col] is not None and not pd.isna(rec[col]):
                lookup[(key, col)] = float(rec[col])
    return lookup


# ============================================================
# train / test split
# ============================================================

def train_test_split(ds: Dataset, fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """
    Stratified (by segment) random split, deterministic given (order, seed).
    Both parts keep the dataset's agent order.
    """
    n = len(ds)
    if n < 2:
        raise DatasetValidationError("train/test split needs at least 2 observations")
    if not 0.0 < fraction < 1.0:
        raise SpecError(f"split fraction must lie in (0, 1), got {fraction}")

    by_segment: Dict[str, List[int]] = {}
    for i, seg in enumerate(ds.segments):
        by_segment.setdefault(seg, []).append(i)
    segments = sorted(by_segment)

    n_train = min(max(int(round(fraction * n)), 1), n - 1)
    quota = {s: fraction * len(by_segment[s]) for s in segments}
    take = {s: int(math.floor(quota[s])) for s in segments}

    # largest remainder; ties by segment name
    order = sorted(segments, key=lambda s: (-(quota[s] - take[s]), s))
    while sum(take.values()) < n_train:
        for s in order:
            if sum(take.values()) >= n_train:
                break
            if take[s] < len(by_segment[s]):
                take[s] += 1
    while sum(take.values()) > n_train:
        for s in reversed(order):
            if sum(take.values()) <= n_train:
                break
            if take[s] > 0:
                take[s] -= 1

    rng = np.random.default_rng(seed)
    train_idx: List[int] = []
    for s in segments:
        members = by_segment[s]
        picked = rng.permutation(len(members))[: take[s]]
        train_idx.extend(members[k] for k in picked)

    train_set = set(train_idx)
    train = sorted(train_set)
    test = [i for i in range(n) if i not in train_set]
    logger.info(f"Split {n} agents into {len(train)} train / {len(test)} test (seed={seed})")
    return ds.subset(train), ds.subset(test)
