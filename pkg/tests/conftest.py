import math

import numpy as np
import pytest

from agent_logit.experiments.synthetic import simulate_taste_markets
from agent_logit.model.market import Dataset, MarketObservation
from agent_logit.model.spec import ModelSpec


# agent: (taxi time, taxi cost, transit time, transit cost, taxi share); minutes and dollars
TAXI_TRANSIT_AGENTS = [
    (10, 10, 30, 3, 0.8),
    (20, 15, 40, 3, 0.7),
    (40, 25, 60, 3, 0.6),
    (10, 10, 30, 3, 0.2),
    (20, 15, 40, 3, 0.3),
    (40, 25, 60, 3, 0.4),
    (10, 3, 30, 10, 0.1),
    (60, 25, 10, 3, 0.9),
]


def make_taxi_transit_spec(bounds=None) -> ModelSpec:
    names = ("b_time", "b_cost", "asc_transit")
    return ModelSpec(
        parameter_names=names,
        bounds=bounds or tuple((-math.inf, math.inf) for _ in names),
        alternatives=("taxi", "transit"),
        design_map={
            "taxi": {"b_time": "time", "b_cost": "cost"},
            "transit": {"b_time": "time", "b_cost": "cost", "asc_transit": "1"},
        },
        attribute_columns=("time", "cost"),
        reference_alternative="taxi",
        time_parameter="b_time",
        cost_parameter="b_cost",
    )


def make_taxi_transit_dataset(spec: ModelSpec) -> Dataset:
    observations = []
    for i, (tt, tc, pt, pc, share) in enumerate(TAXI_TRANSIT_AGENTS, start=1):
        observations.append(MarketObservation(
            agent_id=f"agent{i}",
            segment="low" if i <= 4 else "high",
            region_id=f"r{i % 3}",
            origin_xy=(float(i), 0.0),
            destination_xy=(float(i), 1.0),
            attributes=np.array([[tt, tc], [pt, pc]], dtype=float),
            shares=np.array([share, 1.0 - share]),
            demand=100.0 * i,
        ))
    return Dataset(spec=spec, observations=observations, attribute_columns=spec.attribute_columns)


@pytest.fixture
def taxi_spec() -> ModelSpec:
    return make_taxi_transit_spec()


@pytest.fixture
def taxi_dataset(taxi_spec) -> Dataset:
    return make_taxi_transit_dataset(taxi_spec)


@pytest.fixture
def two_taste_markets():
    """200 markets, 4 alternatives, tastes (time, cost) = (-2, -0.5) and (-0.5, -2)."""
    tastes = np.array([[-2.0, -0.5], [-0.5, -2.0]])
    ds, labels = simulate_taste_markets(tastes, agents_per_taste=100, n_alternatives=4, seed=7)
    return ds, labels, tastes
