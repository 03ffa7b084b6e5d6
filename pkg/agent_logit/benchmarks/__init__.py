from agent_logit.benchmarks.models import (
    MODEL_KINDS,
    BenchmarkFit,
    BenchmarkPredictor,
    benchmark_predict_shares,
    benchmark_share_matrix,
    estimate_benchmark,
)

__all__ = [
    "MODEL_KINDS",
    "BenchmarkFit",
    "BenchmarkPredictor",
    "benchmark_predict_shares",
    "benchmark_share_matrix",
    "estimate_benchmark",
]
