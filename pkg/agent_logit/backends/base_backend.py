from abc import ABC, abstractmethod
from typing import List, Sequence

import numpy as np

from agent_logit.config import EstimatorConfig
from agent_logit.model.spec import ModelSpec
from agent_logit.qp.solver import relax_design
from agent_logit.qp.subproblem import QPSolution


def solve_chunk(
    spec: ModelSpec,
    designs: np.ndarray,
    shares: np.ndarray,
    priors: np.ndarray,
    tol: float,
    max_doublings: int,
    agent_ids: Sequence[str],
) -> List[QPSolution]:
    """
    Solves a contiguous block of agent QPs in order.
    Shared by every backend so all of them run the same arithmetic.
    """
    return [
        relax_design(designs[t], shares[t], spec, priors[t], tol, max_doublings, agent_id=agent_ids[t])
        for t in range(designs.shape[0])
    ]


class AgentSolverBackend(ABC):
    """
    Abstract base for all backends (Sequential, Parallel, MPI).
    """

    name: str = "base"

    def __init__(self, config: EstimatorConfig):
        self.config = config

    @abstractmethod
    def solve_agents(
        self,
        spec: ModelSpec,
        designs: np.ndarray,
        shares: np.ndarray,
        priors: np.ndarray,
        tol: float,
        max_doublings: int,
        agent_ids: Sequence[str],
    ) -> List[QPSolution]:
        """
        Solves every agent's projection QP.

        :param designs: (T, J, K) design rows
        :param shares: (T, J) observed shares
        :param priors: (T, K) prior of each agent's current cluster
        :return: one QPSolution per agent, in input order
        """
        raise NotImplementedError
