from __future__ import annotations

from typing import Mapping, Optional, Protocol, Sequence

import numpy as np
from numba import njit, prange

from agent_logit.errors import EstimationError
from agent_logit.model.market import Dataset, MarketObservation
from agent_logit.model.spec import ModelSpec


@njit(parallel=True)
def softmax_kernel(V: np.ndarray, out: np.ndarray) -> None:
    """
    Row-wise softmax with max subtraction.
    V, out have shape (T, J); rows are independent.
    """
    T = V.shape[0]
    J = V.shape[1]

    for t in prange(T):
        vmax = V[t, 0]
        for j in range(1, J):
            if V[t, j] > vmax:
                vmax = V[t, j]
        total = 0.0
        for j in range(J):
            e = np.exp(V[t, j] - vmax)
            out[t, j] = e
            total += e
        for j in range(J):
            out[t, j] /= total


def softmax_rows(V: np.ndarray) -> np.ndarray:
    V = np.ascontiguousarray(np.atleast_2d(V), dtype=np.float64)
    if not np.all(np.isfinite(V)):
        raise EstimationError("non-finite systematic utility")
    out = np.empty_like(V)
    softmax_kernel(V, out)
    return out


def utilities(thetas: np.ndarray, designs: np.ndarray) -> np.ndarray:
    """V[t, j] = thetas[t] @ designs[t, j]."""
    return np.einsum("tjk,tk->tj", designs, thetas)


def predict_share_matrix(thetas: np.ndarray, designs: np.ndarray) -> np.ndarray:
    """
    :param thetas: (T, K) agent parameters
    :param designs: (T, J, K) design rows
    :return: (T, J) logit shares
    """
    return softmax_rows(utilities(thetas, designs))


def predict_shares(
    theta: np.ndarray,
    obs: MarketObservation,
    spec: ModelSpec,
    attribute_columns: Optional[Sequence[str]] = None,
) -> np.ndarray:
    """Logit shares of one agent: softmax of theta @ X_jt."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (spec.K,):
        raise ValueError(f"theta must have length {spec.K}, got shape {theta.shape}")
    columns = spec.attribute_columns if attribute_columns is None else attribute_columns
    design = spec.design_rows(obs.attributes, columns)
    return predict_share_matrix(theta[None, :], design[None, :, :])[0]


class SharePredictor(Protocol):
    """Anything that maps a dataset to (T, J) predicted shares."""

    def predict(self, ds: Dataset) -> np.ndarray:
        ...


class GlamPredictor:
    """
    Agent-level logit: each agent's shares use its own theta.
    Agents are looked up by id, so perturbed copies of a dataset reuse the
    same parameters.
    """

    def __init__(self, thetas: Mapping[str, np.ndarray]):
        self.thetas = {a: np.asarray(v, dtype=np.float64) for a, v in thetas.items()}

    @classmethod
    def from_result(cls, result, extra: Optional[Mapping[str, np.ndarray]] = None) -> "GlamPredictor":
        thetas = {a: p.theta for a, p in result.agent_params.items()}
        if extra:
            thetas.update(extra)
        return cls(thetas)

    def theta_matrix(self, ds: Dataset) -> np.ndarray:
        missing = [a for a in ds.agent_ids if a not in self.thetas]
        if missing:
            raise EstimationError(f"no parameters for {len(missing)} agents (first: '{missing[0]}')")
        return np.stack([self.thetas[a] for a in ds.agent_ids])

    def predict(self, ds: Dataset) -> np.ndarray:
        return predict_share_matrix(self.theta_matrix(ds), ds.design_tensor)
