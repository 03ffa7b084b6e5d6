from typing import List, Sequence

import numpy as np
from joblib import Parallel, delayed
from numba import config as numba_config, set_num_threads

from agent_logit.backends.base_backend import AgentSolverBackend, solve_chunk
from agent_logit.config import EstimatorConfig
from agent_logit.model.spec import ModelSpec
from agent_logit.qp.subproblem import QPSolution


class ParallelBackend(AgentSolverBackend):
    """
    Process-pool backend (joblib/loky).

    Agents are cut into contiguous chunks, one task per chunk; chunk results
    are concatenated in submission order, so the output matches the
    sequential backend regardless of the worker count. The same thread
    count drives Numba's parallel kernels.
    """

    name = "parallel"

    def __init__(self, config: EstimatorConfig):
        super().__init__(config)

        # Configure the number of threads used by Numba
        if self.config.threads > 0:
            set_num_threads(min(self.config.threads, numba_config.NUMBA_NUM_THREADS))

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
        n_jobs = max(self.config.threads, 1)
        T = designs.shape[0]
        if n_jobs == 1 or T < 2:
            return solve_chunk(spec, designs, shares, priors, tol, max_doublings, agent_ids)

        chunks = [c for c in np.array_split(np.arange(T), n_jobs) if c.size]
        ids = list(agent_ids)
        parts = Parallel(n_jobs=n_jobs, backend="loky")(
            delayed(solve_chunk)(
                spec,
                designs[c[0]:c[-1] + 1],
                shares[c[0]:c[-1] + 1],
                priors[c[0]:c[-1] + 1],
                tol,
                max_doublings,
                ids[c[0]:c[-1] + 1],
            )
            for c in chunks
        )
        return [sol for part in parts for sol in part]
