from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from agent_logit.model.market import MarketObservation
from agent_logit.model.spec import ModelSpec


class QPStatus(str, Enum):
    OPTIMAL = "optimal"
    RELAXED = "relaxed"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class QPSubproblem:
    """
    Projection of a cluster prior onto one agent's share-ratio polyhedron:

        min ||theta - prior||^2
        s.t. lower[r] <= A[r] @ theta <= upper[r]   (one row per share pair)
             lb <= theta <= ub
    """

    prior: np.ndarray
    A: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    tol_used: float
    pair_index: Tuple[Tuple[int, int], ...] = ()
    agent_id: str = ""

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def degenerate(self) -> bool:
        """Fewer than two positive shares: only the box remains."""
        return self.n_rows == 0

    @property
    def targets(self) -> np.ndarray:
        """Observed log share ratios, the centres of the row intervals."""
        return 0.5 * (self.lower + self.upper)

    @property
    def constraint_rows(self) -> Tuple[Tuple[np.ndarray, float, float], ...]:
        return tuple((self.A[r], float(self.lower[r]), float(self.upper[r])) for r in range(self.n_rows))

    def with_prior(self, prior: np.ndarray) -> "QPSubproblem":
        return QPSubproblem(
            prior=np.asarray(prior, dtype=np.float64),
            A=self.A,
            lower=self.lower,
            upper=self.upper,
            lb=self.lb,
            ub=self.ub,
            tol_used=self.tol_used,
            pair_index=self.pair_index,
            agent_id=self.agent_id,
        )

    def to_dict(self) -> dict:
        """Debug dump; infinite bounds become null."""
        finite = lambda v: [None if math.isinf(x) else float(x) for x in v]  # noqa: E731
        return {
            "agent_id": self.agent_id,
            "prior": [float(x) for x in self.prior],
            "rows": [
                {"pair": list(self.pair_index[r]), "a": [float(x) for x in self.A[r]],
                 "lower": float(self.lower[r]), "upper": float(self.upper[r])}
                for r in range(self.n_rows)
            ],
            "lb": finite(self.lb),
            "ub": finite(self.ub),
            "tol_used": self.tol_used,
        }


@dataclass
class QPSolution:
    theta: np.ndarray
    objective: float
    kkt_residual: float
    active_set: Tuple[int, ...]
    status: QPStatus
    tol_used: float
    degenerate: bool = False
    iterations: int = 0
    agent_id: str = ""
    # signed row multipliers (lower side positive, upper side negative)
    multipliers: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def feasible(self) -> bool:
        return self.status != QPStatus.INFEASIBLE


def build_qp(
    design: np.ndarray,
    shares: np.ndarray,
    spec: ModelSpec,
    prior: np.ndarray,
    tol: float,
    agent_id: str = "",
) -> QPSubproblem:
    """
    :param design: (J, K) design rows X_jt of one agent
    :param shares: (J,) observed shares
    """
    if not tol > 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    prior = np.asarray(prior, dtype=np.float64)
    if prior.shape != (spec.K,):
        raise ValueError(f"prior must have length {spec.K}, got shape {prior.shape}")

    positive = [j for j in range(spec.J) if shares[j] > 0.0]
    pairs = tuple((j, k) for i, j in enumerate(positive) for k in positive[i + 1:])

    if pairs:
        A = np.array([design[j] - design[k] for j, k in pairs], dtype=np.float64)
        ratio = np.array([math.log(shares[j] / shares[k]) for j, k in pairs])
    else:
        A = np.zeros((0, spec.K))
        ratio = np.zeros(0)

    return QPSubproblem(
        prior=prior,
        A=A,
        lower=ratio - tol,
        upper=ratio + tol,
        lb=spec.lower_bounds,
        ub=spec.upper_bounds,
        tol_used=float(tol),
        pair_index=pairs,
        agent_id=agent_id,
    )


def build_agent_qp(
    obs: MarketObservation,
    spec: ModelSpec,
    prior: np.ndarray,
    tol: float,
    attribute_columns: Optional[Sequence[str]] = None,
) -> QPSubproblem:
    """
    One two-sided row per unordered pair of alternatives with positive
    shares: |theta @ (X_j - X_k) - ln(s_j / s_k)| <= tol.
    """
    columns = spec.attribute_columns if attribute_columns is None else attribute_columns
    design = spec.design_rows(obs.attributes, columns)
    return build_qp(design, obs.shares, spec, prior, tol, agent_id=obs.agent_id)
