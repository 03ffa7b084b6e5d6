from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from agent_logit.errors import DatasetValidationError
from agent_logit.model.spec import ModelSpec


SHARE_SUM_TOL = 1e-9


def _frozen(values, shape_ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != shape_ndim:
        raise DatasetValidationError(f"expected a {shape_ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MarketObservation:
    """
    One agent/market: homogeneous travellers sharing segment and OD pair.
    attributes is |J| x C (rows follow the model spec's alternatives, columns the
    dataset's attribute columns); shares are the observed market shares.
    """

    agent_id: str
    segment: str
    region_id: str
    origin_xy: Tuple[float, float]
    destination_xy: Tuple[float, float]
    attributes: np.ndarray
    shares: np.ndarray
    demand: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "attributes", _frozen(self.attributes, 2))
        object.__setattr__(self, "shares", _frozen(self.shares, 1))
        object.__setattr__(self, "origin_xy", (float(self.origin_xy[0]), float(self.origin_xy[1])))
        object.__setattr__(self, "destination_xy", (float(self.destination_xy[0]), float(self.destination_xy[1])))
        object.__setattr__(self, "demand", float(self.demand))

    @property
    def od_features(self) -> np.ndarray:
        return np.array([*self.origin_xy, *self.destination_xy], dtype=np.float64)

    def with_scaled_attribute(self, j: int, c: int, factor: float) -> "MarketObservation":
        """Copy with attributes[j, c] multiplied by `factor` (price/time perturbations)."""
        attrs = np.array(self.attributes)
        attrs[j, c] *= factor
        return self.with_attributes(attrs)

    def with_attributes(self, attributes: np.ndarray) -> "MarketObservation":
        return MarketObservation(
            agent_id=self.agent_id,
            segment=self.segment,
            region_id=self.region_id,
            origin_xy=self.origin_xy,
            destination_xy=self.destination_xy,
            attributes=attributes,
            shares=self.shares,
            demand=self.demand,
        )

    def validate(self, n_alternatives: int, n_columns: int) -> None:
        if self.attributes.shape != (n_alternatives, n_columns):
            raise DatasetValidationError(
                f"attribute matrix has shape {self.attributes.shape}, "
                f"expected {(n_alternatives, n_columns)}",
                agent_id=self.agent_id,
            )
        if self.shares.shape != (n_alternatives,):
            raise DatasetValidationError("share vector has wrong length", agent_id=self.agent_id, column="share")
        if not np.all(np.isfinite(self.attributes)):
            raise DatasetValidationError("non-finite attribute", agent_id=self.agent_id)
        if np.any(self.shares < 0.0) or np.any(self.shares > 1.0) or not np.all(np.isfinite(self.shares)):
            raise DatasetValidationError("share outside [0, 1]", agent_id=self.agent_id, column="share")
        total = float(self.shares.sum())
        if abs(total - 1.0) > SHARE_SUM_TOL:
            raise DatasetValidationError(
                f"shares sum to {total:.12g}, not 1", agent_id=self.agent_id, column="share"
            )
        if not (np.isfinite(self.demand) and self.demand >= 0.0):
            raise DatasetValidationError("demand must be finite and >= 0", agent_id=self.agent_id, column="demand")


@dataclass(frozen=True)
class Dataset:
    """
    Validated, immutable collection of market observations.
    Safe to share read-only between workers.
    """

    spec: ModelSpec
    observations: Tuple[MarketObservation, ...]
    attribute_columns: Tuple[str, ...]
    split_tag: Optional[Tuple[str, ...]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "observations", tuple(self.observations))
        object.__setattr__(self, "attribute_columns", tuple(self.attribute_columns))
        if self.split_tag is not None:
            object.__setattr__(self, "split_tag", tuple(self.split_tag))
        self._validate()

    def _validate(self) -> None:
        if not self.observations:
            raise DatasetValidationError("no observations")
        missing = [c for c in self.spec.attribute_columns if c not in self.attribute_columns]
        if missing:
            raise DatasetValidationError("dataset lacks spec attribute columns", column=", ".join(missing))
        if len(set(self.attribute_columns)) != len(self.attribute_columns):
            raise DatasetValidationError("duplicate attribute columns")

        seen = set()
        J, C = self.spec.J, len(self.attribute_columns)
        for obs in self.observations:
            if obs.agent_id in seen:
                raise DatasetValidationError("duplicate agent", agent_id=obs.agent_id)
            seen.add(obs.agent_id)
            obs.validate(J, C)

        if self.split_tag is not None and len(self.split_tag) != len(self.observations):
            raise DatasetValidationError("split_tag must have one entry per observation", column="split")

    # ------------------------ ACCESSORS ------------------------

    def __len__(self) -> int:
        return len(self.observations)

    def __iter__(self):
        return iter(self.observations)

    @cached_property
    def agent_ids(self) -> Tuple[str, ...]:
        return tuple(o.agent_id for o in self.observations)

    @cached_property
    def position(self) -> Dict[str, int]:
        return {a: i for i, a in enumerate(self.agent_ids)}

    def get(self, agent_id: str) -> MarketObservation:
        try:
            return self.observations[self.position[agent_id]]
        except KeyError:
            raise DatasetValidationError("unknown agent", agent_id=agent_id)

    def column_index(self, column: str) -> int:
        try:
            return self.attribute_columns.index(column)
        except ValueError:
            raise DatasetValidationError("unknown attribute column", column=column)

    @cached_property
    def shares_matrix(self) -> np.ndarray:
        """(T, J) observed shares."""
        arr = np.stack([o.shares for o in self.observations])
        arr.setflags(write=False)
        return arr

    @cached_property
    def attribute_tensor(self) -> np.ndarray:
        """(T, J, C) raw attributes."""
        arr = np.stack([o.attributes for o in self.observations])
        arr.setflags(write=False)
        return arr

    @cached_property
    def design_tensor(self) -> np.ndarray:
        """(T, J, K) design rows X_jt."""
        arr = self.spec.design_rows(self.attribute_tensor, self.attribute_columns)
        arr.setflags(write=False)
        return arr

    @cached_property
    def demand_vector(self) -> np.ndarray:
        return np.array([o.demand for o in self.observations], dtype=np.float64)

    @cached_property
    def segments(self) -> Tuple[str, ...]:
        return tuple(o.segment for o in self.observations)

    # ------------------------ DERIVED DATASETS ------------------------

    def subset(self, indices: Iterable[int]) -> "Dataset":
        idx = list(indices)
        tags = None if self.split_tag is None else tuple(self.split_tag[i] for i in idx)
        return Dataset(
            spec=self.spec,
            observations=tuple(self.observations[i] for i in idx),
            attribute_columns=self.attribute_columns,
            split_tag=tags,
        )

    def with_observations(self, observations: Sequence[MarketObservation]) -> "Dataset":
        return Dataset(spec=self.spec, observations=tuple(observations), attribute_columns=self.attribute_columns)

    def with_column(self, column: str, values: np.ndarray) -> "Dataset":
        """
        Attach (or replace) an attribute column.
        :param values: array (T, J)
        """
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(self), self.spec.J):
            raise DatasetValidationError(f"column values must have shape {(len(self), self.spec.J)}", column=column)

        if column in self.attribute_columns:
            c = self.attribute_columns.index(column)
            columns = self.attribute_columns
            build = lambda attrs, v: _replace_column(attrs, c, v)  # noqa: E731
        else:
            columns = self.attribute_columns + (column,)
            build = lambda attrs, v: np.column_stack([attrs, v])  # noqa: E731

        observations = tuple(
            obs.with_attributes(build(obs.attributes, values[t]))
            for t, obs in enumerate(self.observations)
        )
        return Dataset(spec=self.spec, observations=observations, attribute_columns=columns, split_tag=self.split_tag)

    def split_by_tag(self, train_tag: str = "train") -> Tuple["Dataset", "Dataset"]:
        if self.split_tag is None:
            raise DatasetValidationError("dataset has no split column", column="split")
        train = [i for i, tag in enumerate(self.split_tag) if tag == train_tag]
        test = [i for i, tag in enumerate(self.split_tag) if tag != train_tag]
        if not train or not test:
            raise DatasetValidationError("split column does not define both train and test agents", column="split")
        return self.subset(train), self.subset(test)


def _replace_column(attrs: np.ndarray, c: int, values: np.ndarray) -> np.ndarray:
    out = np.array(attrs)
    out[:, c] = values
    return out
