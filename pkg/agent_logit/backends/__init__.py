from typing import Dict, Type

from agent_logit.backends.base_backend import AgentSolverBackend
from agent_logit.backends.backend_sequential import SequentialBackend
from agent_logit.backends.backend_parallel import ParallelBackend

# IMPORTANT
# MPIBackend is intentionally NOT loaded here
# run_mpi.py will import it directly when needed

BACKENDS: Dict[str, Type[AgentSolverBackend]] = {
    SequentialBackend.name: SequentialBackend,
    ParallelBackend.name: ParallelBackend,
}


def get_backend(name: str) -> Type[AgentSolverBackend]:
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"Unknown backend '{name}'. Available: {', '.join(BACKENDS.keys())}"
        )
