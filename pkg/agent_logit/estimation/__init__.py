from agent_logit.estimation.kmeans import KMeansResult, kmeans_cluster
from agent_logit.estimation.msa import msa_update, relative_change
from agent_logit.estimation.estimator import (
    AgentParameters,
    EstimationResult,
    IterationRecord,
    estimate_glam,
)
from agent_logit.estimation.bootstrap import BootstrapResult, bootstrap_standard_errors

__all__ = [
    "KMeansResult",
    "kmeans_cluster",
    "msa_update",
    "relative_change",
    "AgentParameters",
    "EstimationResult",
    "IterationRecord",
    "estimate_glam",
    "BootstrapResult",
    "bootstrap_standard_errors",
]
