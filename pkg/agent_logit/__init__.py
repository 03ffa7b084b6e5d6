from agent_logit.config import EstimatorConfig, RunConfig
from agent_logit.backends import get_backend, BACKENDS


__all__ = ["EstimatorConfig", "RunConfig", "get_backend", "BACKENDS"]
