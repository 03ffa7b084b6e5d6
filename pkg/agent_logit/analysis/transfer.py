from __future__ import annotations

from typing import Dict, Sequence

import numpy as np

from agent_logit.errors import EstimationError
from agent_logit.io.logging_utils import logger
from agent_logit.model.market import Dataset, MarketObservation


def knn_transfer(
    trained,
    train_ds: Dataset,
    new_agents: Sequence[MarketObservation],
    K: int,
) -> Dict[str, np.ndarray]:
    """
    Parameters for agents not seen in estimation: the unweighted mean theta
    of the K nearest feasible training agents of the same segment, by
    Euclidean distance between (origin_xy, destination_xy).

    Candidates are sorted by agent_id before a stable distance sort, so
    equal distances resolve to the smaller agent_id.

    :param trained: EstimationResult covering `train_ds`
    :raises EstimationError: unseen segment, or fewer than K candidates
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")

    by_segment: Dict[str, list] = {}
    for obs in train_ds.observations:
        params = trained.agent_params.get(obs.agent_id)
        if params is None or not params.feasible:
            continue
        by_segment.setdefault(obs.segment, []).append((obs.agent_id, obs.od_features, params.theta))

    pools = {}
    for segment, rows in by_segment.items():
        rows.sort(key=lambda r: r[0])
        pools[segment] = (
            np.stack([r[1] for r in rows]),
            np.stack([r[2] for r in rows]),
        )

    out: Dict[str, np.ndarray] = {}
    for obs in new_agents:
        if obs.segment not in pools:
            raise EstimationError(f"segment '{obs.segment}' of agent '{obs.agent_id}' has no trained agents")
        features, thetas = pools[obs.segment]
        if features.shape[0] < K:
            raise EstimationError(
                f"segment '{obs.segment}' has {features.shape[0]} trained agents, K={K} requested"
            )
        dist = np.sqrt(((features - obs.od_features) ** 2).sum(axis=1))
        nearest = np.argsort(dist, kind="stable")[:K]
        out[obs.agent_id] = thetas[nearest].mean(axis=0)

    logger.info(f"KNN transfer (K={K}): parameters for {len(out)} new agents")
    return out
