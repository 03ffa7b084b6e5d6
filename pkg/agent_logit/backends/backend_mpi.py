from typing import List, Sequence

import numpy as np
from mpi4py import MPI

from agent_logit.backends.base_backend import AgentSolverBackend, solve_chunk
from agent_logit.config import EstimatorConfig
from agent_logit.model.spec import ModelSpec
from agent_logit.qp.subproblem import QPSolution


class MPIBackend(AgentSolverBackend):
    """
    MPI backend using block decomposition of the agents.

    Every rank holds the full dataset and solves only its contiguous block
    (np.array_split by rank). Blocks are allgathered and concatenated in
    rank order, so every rank ends up with the same solution list and
    continues the (serial) clustering step in lockstep.
    """

    name = "mpi"

    def __init__(self, config: EstimatorConfig):
        super().__init__(config)

        self.comm = MPI.COMM_WORLD
        self.rank = self.comm.Get_rank()
        self.size = self.comm.Get_size()

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
        T = designs.shape[0]
        block = np.array_split(np.arange(T), self.size)[self.rank]
        ids = list(agent_ids)

        # Ranks with an empty block still take part in the allgather
        if block.size:
            lo, hi = int(block[0]), int(block[-1]) + 1
            local = solve_chunk(spec, designs[lo:hi], shares[lo:hi], priors[lo:hi], tol, max_doublings, ids[lo:hi])
        else:
            local = []

        gathered = self.comm.allgather(local)
        return [sol for part in gathered for sol in part]
