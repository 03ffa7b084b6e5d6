from agent_logit.qp.subproblem import QPSolution, QPStatus, QPSubproblem, build_agent_qp, build_qp
from agent_logit.qp.solver import relax_design, relax_tolerance, solve_projection_qp

__all__ = [
    "QPSolution",
    "QPStatus",
    "QPSubproblem",
    "build_agent_qp",
    "build_qp",
    "relax_design",
    "relax_tolerance",
    "solve_projection_qp",
]
