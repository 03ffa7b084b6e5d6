from agent_logit.experiments.runner import (
    evaluate_in_sample,
    evaluate_out_of_sample,
    glam_dof,
    run_cluster_sweep,
)
from agent_logit.experiments.synthetic import (
    EndogenousMarkets,
    endogenous_spec,
    simulate_endogenous_markets,
    simulate_taste_markets,
    taste_spec,
)

__all__ = [
    "evaluate_in_sample",
    "evaluate_out_of_sample",
    "glam_dof",
    "run_cluster_sweep",
    "EndogenousMarkets",
    "endogenous_spec",
    "simulate_endogenous_markets",
    "simulate_taste_markets",
    "taste_spec",
]
