from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from agent_logit.errors import DatasetValidationError, SpecError


# design_map value for an alternative-specific constant
CONSTANT = "1"
# attribute column that receives the first-stage control residual
CONTROL_COLUMN = "control_residual"


@dataclass(frozen=True)
class ModelSpec:
    """
    Parameter vocabulary and per-alternative design of the utility function.

    design_map[alternative][parameter] names the attribute column feeding the
    parameter in that alternative's utility, or CONSTANT for an
    alternative-specific constant. Parameters missing from an alternative's
    map contribute 0 to its utility, so a parameter shared by several
    alternatives (one cost coefficient, say) appears in each of their maps.
    """

    parameter_names: Tuple[str, ...]
    bounds: Tuple[Tuple[float, float], ...]
    alternatives: Tuple[str, ...]
    design_map: Mapping[str, Mapping[str, str]]
    attribute_columns: Tuple[str, ...]
    reference_alternative: str
    column_scales: Mapping[str, float] = field(default_factory=dict)
    endogenous_column: Optional[str] = None
    control_parameter: Optional[str] = None
    time_parameter: Optional[str] = None
    cost_parameter: Optional[str] = None

    def __post_init__(self) -> None:
        self._validate()

    # ------------------------ PUBLIC API ------------------------

    @property
    def K(self) -> int:
        return len(self.parameter_names)

    @property
    def J(self) -> int:
        return len(self.alternatives)

    def index(self, parameter: str) -> int:
        try:
            return self.parameter_names.index(parameter)
        except ValueError:
            raise SpecError(f"unknown parameter '{parameter}'")

    def alternative_index(self, alternative: str) -> int:
        try:
            return self.alternatives.index(alternative)
        except ValueError:
            raise SpecError(f"unknown alternative '{alternative}'")

    @cached_property
    def lower_bounds(self) -> np.ndarray:
        return np.array([lb for lb, _ in self.bounds], dtype=np.float64)

    @cached_property
    def upper_bounds(self) -> np.ndarray:
        return np.array([ub for _, ub in self.bounds], dtype=np.float64)

    @cached_property
    def constant_parameters(self) -> Tuple[str, ...]:
        return tuple(
            p for p in self.parameter_names
            if any(m.get(p) == CONSTANT for m in self.design_map.values())
        )

    @cached_property
    def endogenous_alternatives(self) -> Tuple[str, ...]:
        """Alternatives whose utility carries the control residual."""
        if self.control_parameter is None:
            return ()
        return tuple(
            a for a in self.alternatives
            if self.control_parameter in self.design_map[a]
        )

    def columns_used_by(self, alternative: str) -> Tuple[str, ...]:
        return tuple(
            c for c in self.design_map[alternative].values()
            if c not in (CONSTANT, CONTROL_COLUMN)
        )

    def design_rows(self, attributes: np.ndarray, columns: Sequence[str]) -> np.ndarray:
        """
        Build X_jt from raw attributes.

        :param attributes: array (..., J, C) aligned with `columns`
        :param columns: attribute column names of the last axis
        :return: array (..., J, K) of design values, unit scales applied
        """
        attributes = np.asarray(attributes, dtype=np.float64)
        col_pos = {c: i for i, c in enumerate(columns)}
        X = np.zeros(attributes.shape[:-1] + (self.K,), dtype=np.float64)

        for j, alt in enumerate(self.alternatives):
            for param, source in self.design_map[alt].items():
                k = self.parameter_names.index(param)
                if source == CONSTANT:
                    X[..., j, k] = 1.0
                    continue
                if source not in col_pos:
                    hint = " (run control_function_stage1 first)" if source == CONTROL_COLUMN else ""
                    raise DatasetValidationError(
                        f"attribute column missing from dataset{hint}", column=source
                    )
                scale = self.column_scales.get(source, 1.0)
                X[..., j, k] = attributes[..., j, col_pos[source]] * scale
        return X

    def to_dict(self) -> dict:
        return {
            "parameters": [
                {"name": n, "lb": _bound_to_json(lb), "ub": _bound_to_json(ub)}
                for n, (lb, ub) in zip(self.parameter_names, self.bounds)
            ],
            "alternatives": list(self.alternatives),
            "reference_alternative": self.reference_alternative,
            "attribute_columns": list(self.attribute_columns),
            "design_map": {a: dict(m) for a, m in self.design_map.items()},
            "column_scales": dict(self.column_scales),
            "endogenous_column": self.endogenous_column,
            "control_parameter": self.control_parameter,
            "time_parameter": self.time_parameter,
            "cost_parameter": self.cost_parameter,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelSpec":
        try:
            params = data["parameters"]
            names = tuple(str(p["name"]) for p in params)
            bounds = tuple(
                (_bound_from_json(p.get("lb"), -math.inf), _bound_from_json(p.get("ub"), math.inf))
                for p in params
            )
            return cls(
                parameter_names=names,
                bounds=bounds,
                alternatives=tuple(data["alternatives"]),
                design_map={a: dict(m) for a, m in data["design_map"].items()},
                attribute_columns=tuple(data["attribute_columns"]),
                reference_alternative=data["reference_alternative"],
                column_scales={k: float(v) for k, v in data.get("column_scales", {}).items()},
                endogenous_column=data.get("endogenous_column"),
                control_parameter=data.get("control_parameter"),
                time_parameter=data.get("time_parameter"),
                cost_parameter=data.get("cost_parameter"),
            )
        except (KeyError, TypeError) as exc:
            raise SpecError(f"malformed model spec: {exc}") from exc

    # ------------------------ VALIDATION ------------------------

    def _validate(self) -> None:
        names = self.parameter_names
        if not names:
            raise SpecError("model spec declares no parameters")
        if len(set(names)) != len(names):
            raise SpecError("duplicate parameter names")
        if len(self.bounds) != len(names):
            raise SpecError("bounds must have one (lb, ub) pair per parameter")
        for n, (lb, ub) in zip(names, self.bounds):
            if math.isnan(lb) or math.isnan(ub) or lb > ub:
                raise SpecError(f"invalid bounds for '{n}': lb={lb}, ub={ub}")

        if len(set(self.alternatives)) != len(self.alternatives) or not self.alternatives:
            raise SpecError("alternatives must be a non-empty list of unique identifiers")
        if set(self.design_map) != set(self.alternatives):
            raise SpecError("design_map must have exactly one entry per alternative")
        if self.reference_alternative not in self.alternatives:
            raise SpecError(f"reference alternative '{self.reference_alternative}' not in alternatives")

        columns = set(self.attribute_columns)
        if CONTROL_COLUMN in columns:
            raise SpecError(f"'{CONTROL_COLUMN}' is reserved for the control residual")

        used = set()
        for alt, mapping in self.design_map.items():
            for param, source in mapping.items():
                if param not in names:
                    raise SpecError(f"design_map['{alt}'] references unknown parameter '{param}'")
                if source == CONTROL_COLUMN:
                    if param != self.control_parameter:
                        raise SpecError(
                            f"only the control parameter may read '{CONTROL_COLUMN}' (found '{param}')"
                        )
                elif source != CONSTANT and source not in columns:
                    raise SpecError(f"design_map['{alt}']['{param}'] references unknown column '{source}'")
                if param == self.control_parameter and source != CONTROL_COLUMN:
                    raise SpecError(f"control parameter '{param}' must read '{CONTROL_COLUMN}'")
                used.add(param)

        missing = [n for n in names if n not in used]
        if missing:
            raise SpecError(f"parameters not used by any alternative: {', '.join(missing)}")

        # identification: the reference alternative carries no constant
        if CONSTANT in self.design_map[self.reference_alternative].values():
            raise SpecError(
                f"reference alternative '{self.reference_alternative}' must not have a constant"
            )

        if (self.endogenous_column is None) != (self.control_parameter is None):
            raise SpecError("endogenous_column and control_parameter must be set together")
        if self.endogenous_column is not None and self.endogenous_column not in columns:
            raise SpecError(f"endogenous column '{self.endogenous_column}' is not an attribute column")

        for col, scale in self.column_scales.items():
            if col not in columns:
                raise SpecError(f"column_scales references unknown column '{col}'")
            if not (math.isfinite(scale) and scale > 0):
                raise SpecError(f"column scale for '{col}' must be positive and finite")

        for label, param in (("time_parameter", self.time_parameter), ("cost_parameter", self.cost_parameter)):
            if param is not None and param not in names:
                raise SpecError(f"{label} '{param}' is not a declared parameter")


def _bound_to_json(value: float) -> Optional[float]:
    return None if math.isinf(value) else value


def _bound_from_json(value: Any, default: float) -> float:
    return default if value is None else float(value)


def load_model_spec(path: str) -> ModelSpec:
    if not os.path.exists(path):
        raise SpecError(f"model spec not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise SpecError(f"model spec {path} is not valid JSON: {exc}") from exc
    return ModelSpec.from_dict(data)


def write_model_spec(spec: ModelSpec, path: str) -> str:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(spec.to_dict(), f, indent=2)
    return path
