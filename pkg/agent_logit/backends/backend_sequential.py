from typing import List, Sequence

import numpy as np

from agent_logit.backends.base_backend import AgentSolverBackend, solve_chunk
from agent_logit.model.spec import ModelSpec
from agent_logit.qp.subproblem import QPSolution


class SequentialBackend(AgentSolverBackend):
    """
    Sequential implementation of the per-agent solves.
    Used as the reference the other backends must match bitwise.
    """

    name = "sequential"

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
        return solve_chunk(spec, designs, shares, priors, tol, max_doublings, agent_ids)
