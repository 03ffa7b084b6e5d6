from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Mapping, Optional, Tuple

import numpy as np

from agent_logit.analysis.shares import GlamPredictor
from agent_logit.errors import SpecError
from agent_logit.io.logging_utils import logger
from agent_logit.model.market import Dataset


@dataclass(frozen=True)
class DiscountInstance:
    """
    Region-selection problem for a transit fare discount.

    Every agent sits in exactly one region; selecting a region moves all of
    its agents from share_without to share_with. The budget limits the summed
    revenue loss of the selected agents, max_regions their count.
    """

    regions: Tuple[str, ...]
    agent_ids: Tuple[str, ...]
    # index into `regions` per agent
    agent_region: np.ndarray
    demand: np.ndarray
    fare: np.ndarray
    share_with: np.ndarray
    share_without: np.ndarray
    max_regions: int
    budget: float
    discount_rate: float = 0.5
    demand_weighted_loss: bool = False

    def __post_init__(self) -> None:
        n = len(self.agent_ids)
        for name in ("agent_region", "demand", "fare", "share_with", "share_without"):
            if np.asarray(getattr(self, name)).shape != (n,):
                raise SpecError(f"{name} must have one entry per agent")
        for name in ("share_with", "share_without"):
            values = np.asarray(getattr(self, name))
            if np.any(values < 0.0) or np.any(values > 1.0):
                raise SpecError(f"{name} outside [0, 1]")
        if n and (np.min(self.agent_region) < 0 or np.max(self.agent_region) >= len(self.regions)):
            raise SpecError("agent_region indexes an unknown region")
        if self.max_regions < 0:
            raise SpecError(f"max_regions must be >= 0, got {self.max_regions}")
        if math.isnan(self.budget) or self.budget < 0:
            raise SpecError(f"budget must be >= 0, got {self.budget}")
        if not 0.0 <= self.discount_rate <= 1.0:
            raise SpecError(f"discount_rate must be in [0, 1], got {self.discount_rate}")

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @cached_property
    def agent_loss(self) -> np.ndarray:
        """Revenue-loss coefficient per agent."""
        loss = self.discount_rate * self.fare
        if self.demand_weighted_loss:
            loss = loss * self.demand * self.share_without
        return loss

    @cached_property
    def region_gain(self) -> np.ndarray:
        """Ridership gain per region when it receives the discount."""
        gain = (self.share_with - self.share_without) * self.demand
        return np.bincount(self.agent_region, weights=gain, minlength=self.n_regions)

    @cached_property
    def region_cost(self) -> np.ndarray:
        return np.bincount(self.agent_region, weights=self.agent_loss, minlength=self.n_regions)

    @cached_property
    def region_sizes(self) -> np.ndarray:
        return np.bincount(self.agent_region, minlength=self.n_regions)

    @property
    def base_ridership(self) -> float:
        return float(np.sum(self.share_without * self.demand))

    @property
    def base_revenue(self) -> float:
        return float(np.sum(self.share_without * self.demand * self.fare))

    def with_limits(self, budget: Optional[float] = None, max_regions: Optional[int] = None) -> "DiscountInstance":
        return replace(
            self,
            budget=self.budget if budget is None else float(budget),
            max_regions=self.max_regions if max_regions is None else int(max_regions),
        )

    def to_dict(self) -> dict:
        return {
            "regions": list(self.regions),
            "max_regions": self.max_regions,
            "budget": None if math.isinf(self.budget) else self.budget,
            "discount_rate": self.discount_rate,
            "demand_weighted_loss": self.demand_weighted_loss,
            "agents": [
                {
                    "agent_id": a,
                    "region_id": self.regions[int(self.agent_region[t])],
                    "demand": float(self.demand[t]),
                    "fare": float(self.fare[t]),
                    "share_with": float(self.share_with[t]),
                    "share_without": float(self.share_without[t]),
                }
                for t, a in enumerate(self.agent_ids)
            ],
        }


def precompute_discount_shares(
    trained,
    ds: Dataset,
    transit_alternative: str,
    fare_column: str,
    discount_rate: float = 0.5,
    max_regions: int = 10,
    budget: float = math.inf,
    demand_weighted_loss: bool = False,
    extra_thetas: Optional[Mapping[str, np.ndarray]] = None,
) -> DiscountInstance:
    """
    Predict each agent's transit share at the observed fare and at the fare
    scaled by (1 - discount_rate); both come from the agent's own theta.

    :param trained: EstimationResult; `extra_thetas` covers agents it lacks
        (typically from knn_transfer)
    """
    spec = ds.spec
    if transit_alternative not in spec.alternatives:
        raise SpecError(f"transit alternative '{transit_alternative}' is not in the model spec")
    if not 0.0 <= discount_rate <= 1.0:
        raise SpecError(f"discount_rate must be in [0, 1], got {discount_rate}")
    j = spec.alternative_index(transit_alternative)
    c = ds.column_index(fare_column)
    if fare_column not in spec.columns_used_by(transit_alternative):
        logger.warning(f"'{fare_column}' does not enter the utility of '{transit_alternative}'; discount has no effect")

    model = GlamPredictor.from_result(trained, extra_thetas)
    without = model.predict(ds)[:, j]
    discounted = ds.with_observations([o.with_scaled_attribute(j, c, 1.0 - discount_rate) for o in ds.observations])
    with_ = model.predict(discounted)[:, j]

    regions = tuple(sorted({o.region_id for o in ds.observations}))
    region_pos = {r: i for i, r in enumerate(regions)}
    inst = DiscountInstance(
        regions=regions,
        agent_ids=ds.agent_ids,
        agent_region=np.array([region_pos[o.region_id] for o in ds.observations], dtype=np.int64),
        demand=ds.demand_vector.copy(),
        fare=ds.attribute_tensor[:, j, c].copy(),
        share_with=with_,
        share_without=without,
        max_regions=max_regions,
        budget=budget,
        discount_rate=discount_rate,
        demand_weighted_loss=demand_weighted_loss,
    )
    logger.info(
        f"Discount instance: {len(regions)} regions, {len(ds)} agents, "
        f"base ridership {inst.base_ridership:.1f}, max gain {inst.region_gain.clip(min=0).sum():.1f}"
    )
    return inst
