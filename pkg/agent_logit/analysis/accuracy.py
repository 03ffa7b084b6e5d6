from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from agent_logit.errors import DatasetValidationError


@dataclass
class PredictionReport:
    mae: float
    overall_accuracy: float
    # None when |T| <= K_dof or the observed shares are all uniform
    adjusted_r_square: Optional[float]
    per_alternative_mae: np.ndarray
    n_agents: int
    K_dof: int
    ss_residual: float
    ss_total: float

    def to_dict(self, alternatives: Optional[Sequence[str]] = None) -> dict:
        names = list(alternatives) if alternatives is not None else [str(j) for j in range(len(self.per_alternative_mae))]
        return {
            "mae": self.mae,
            "overall_accuracy": self.overall_accuracy,
            "adjusted_r_square": self.adjusted_r_square,
            "per_alternative_mae": {n: float(v) for n, v in zip(names, self.per_alternative_mae)},
            "n_agents": self.n_agents,
            "K_dof": self.K_dof,
        }


def accuracy_metrics(predicted, observed, K_dof: int) -> PredictionReport:
    """
    MAE over all (agent, alternative) cells, overall accuracy
    mean_t sum_j min(pred, obs), and adjusted R^2 against the
    all-parameters-zero model (uniform shares).
    """
    pred = np.asarray(predicted, dtype=np.float64)
    obs = np.asarray(observed, dtype=np.float64)
    if pred.shape != obs.shape or pred.ndim != 2:
        raise DatasetValidationError(f"predicted {pred.shape} and observed {obs.shape} shares are not aligned")
    T, J = obs.shape

    err = pred - obs
    mae = float(np.mean(np.abs(err)))
    oa = float(np.clip(np.mean(np.minimum(pred, obs).sum(axis=1)), 0.0, 1.0))

    ss_res = float(np.sum(err ** 2))
    ss_tot = float(np.sum((obs - 1.0 / J) ** 2))
    ars: Optional[float] = None
    if T > K_dof and ss_tot > 0.0:
        ars = 1.0 - (ss_res / (T - K_dof)) / (ss_tot / (T - 1))

    return PredictionReport(
        mae=mae,
        overall_accuracy=oa,
        adjusted_r_square=ars,
        per_alternative_mae=np.mean(np.abs(err), axis=0),
        n_agents=T,
        K_dof=int(K_dof),
        ss_residual=ss_res,
        ss_total=ss_tot,
    )
