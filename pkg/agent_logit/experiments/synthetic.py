from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from agent_logit.analysis.shares import softmax_rows
from agent_logit.io.logging_utils import logger
from agent_logit.model.market import Dataset, MarketObservation
from agent_logit.model.spec import CONTROL_COLUMN, ModelSpec
from agent_logit.regression.instruments import InstrumentSet


def taste_spec(
    parameter_names: Sequence[str] = ("time", "cost"),
    n_alternatives: int = 4,
) -> ModelSpec:
    """
    Generic-attribute spec: every alternative reads column `name` for
    parameter `name`; no constants, unbounded parameters.
    """
    alternatives = tuple(f"alt{j}" for j in range(n_alternatives))
    names = tuple(parameter_names)
    return ModelSpec(
        parameter_names=names,
        bounds=tuple((-math.inf, math.inf) for _ in names),
        alternatives=alternatives,
        design_map={a: {p: p for p in names} for a in alternatives},
        attribute_columns=names,
        reference_alternative=alternatives[0],
        time_parameter="time" if "time" in names else None,
        cost_parameter="cost" if "cost" in names else None,
    )


def simulate_taste_markets(
    tastes,
    agents_per_taste: int,
    n_alternatives: int = 4,
    attribute_range: Tuple[float, float] = (0.0, 6.0),
    seed: int = 0,
    n_segments: int = 1,
    n_regions: int = 5,
    spec: Optional[ModelSpec] = None,
) -> Tuple[Dataset, np.ndarray]:
    """
    Markets forward-simulated from known taste vectors with exact logit shares.

    Agents are interleaved over tastes (agent t has taste t % M). Each taste
    has its own OD neighbourhood so that nearby agents share tastes.

    :param tastes: (M, K) planted parameter vectors
    :return: dataset and the planted taste index per agent
    """
    tastes = np.atleast_2d(np.asarray(tastes, dtype=np.float64))
    M, K = tastes.shape
    spec = spec or taste_spec(
        ("time", "cost") if K == 2 else tuple(f"x{k}" for k in range(K)), n_alternatives
    )
    rng = np.random.default_rng(seed)
    T = M * agents_per_taste
    J, C = spec.J, len(spec.attribute_columns)
    low, high = attribute_range

    centers = rng.uniform(0.0, 100.0, size=(M, 4))
    labels = np.arange(T) % M
    attributes = rng.uniform(low, high, size=(T, J, C))
    designs = spec.design_rows(attributes, spec.attribute_columns)
    shares = softmax_rows(np.einsum("tjk,tk->tj", designs, tastes[labels]))

    observations = []
    for t in range(T):
        od = centers[labels[t]] + rng.normal(0.0, 1.0, size=4)
        observations.append(MarketObservation(
            agent_id=f"a{t:06d}",
            segment=f"seg{t % n_segments}",
            region_id=f"r{t % n_regions:02d}",
            origin_xy=(od[0], od[1]),
            destination_xy=(od[2], od[3]),
            attributes=attributes[t],
            shares=shares[t] / shares[t].sum(),
            demand=float(rng.integers(50, 150)),
        ))
    logger.info(f"Simulated {T} markets from {M} tastes over {J} alternatives")
    return Dataset(spec=spec, observations=observations, attribute_columns=spec.attribute_columns), labels


@dataclass
class EndogenousMarkets:
    dataset: Dataset
    # structural error and cost shifter per (agent, alternative); 0 for the outside option
    xi: np.ndarray
    w: np.ndarray
    instruments: InstrumentSet
    beta_x: float
    beta_price: float
    # corr(price, xi) over inside alternatives
    price_error_correlation: float


def endogenous_spec(n_inside: int = 3) -> ModelSpec:
    inside = tuple(f"alt{j}" for j in range(1, n_inside + 1))
    alternatives = ("outside",) + inside
    design = {"outside": {}}
    design.update({a: {"b_x": "x", "b_price": "price", "b_control": CONTROL_COLUMN} for a in inside})
    return ModelSpec(
        parameter_names=("b_x", "b_price", "b_control"),
        bounds=tuple((-math.inf, math.inf) for _ in range(3)),
        alternatives=alternatives,
        design_map=design,
        attribute_columns=("x", "price"),
        reference_alternative="outside",
        endogenous_column="price",
        control_parameter="b_control",
        cost_parameter="b_price",
    )


def simulate_endogenous_markets(
    n_markets: int,
    n_inside: int = 3,
    beta_x: float = 1.0,
    beta_price: float = -1.0,
    xi_sd: float = 1.0,
    price_loading: float = 0.8,
    seed: int = 0,
) -> EndogenousMarkets:
    """
    Monte Carlo markets where price loads on the structural error:
    price = 1 + w + price_loading * xi + eta, delta = beta_x x + beta_price price + xi,
    with the outside option's utility fixed at 0. The cost shifter w is a
    valid instrument.
    """
    rng = np.random.default_rng(seed)
    T, J = n_markets, n_inside + 1
    spec = endogenous_spec(n_inside)

    x = np.zeros((T, J))
    w = np.zeros((T, J))
    xi = np.zeros((T, J))
    price = np.zeros((T, J))
    x[:, 1:] = rng.uniform(0.0, 2.0, size=(T, n_inside))
    w[:, 1:] = rng.uniform(0.0, 2.0, size=(T, n_inside))
    xi[:, 1:] = rng.normal(0.0, xi_sd, size=(T, n_inside))
    price[:, 1:] = 1.0 + w[:, 1:] + price_loading * xi[:, 1:] + rng.normal(0.0, 0.5, size=(T, n_inside))

    delta = beta_x * x + beta_price * price + xi
    delta[:, 0] = 0.0
    shares = softmax_rows(delta)

    observations = [
        MarketObservation(
            agent_id=f"m{t:06d}",
            segment="all",
            region_id="r00",
            origin_xy=(0.0, 0.0),
            destination_xy=(0.0, 0.0),
            attributes=np.column_stack([x[t], price[t]]),
            shares=shares[t] / shares[t].sum(),
            demand=1.0,
        )
        for t in range(T)
    ]
    ds = Dataset(spec=spec, observations=observations, attribute_columns=spec.attribute_columns)
    corr = float(np.corrcoef(price[:, 1:].ravel(), xi[:, 1:].ravel())[0, 1])
    logger.info(f"Simulated {T} endogenous markets, corr(price, xi) = {corr:.3f}")
    return EndogenousMarkets(
        dataset=ds,
        xi=xi,
        w=w,
        instruments=InstrumentSet(values=w[:, :, None].copy(), names=["w"]),
        beta_x=beta_x,
        beta_price=beta_price,
        price_error_correlation=corr,
    )
