from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict, field, fields, replace
from typing import Any, Dict, List, Literal, Optional

from joblib import cpu_count

from agent_logit.errors import SpecError


BackendName = Literal["sequential", "parallel", "mpi"]
BenchmarkKind = Literal["MNL", "NL", "IPDL"]

OUTPUT_DIR_ENV = "AGENT_LOGIT_OUTPUT_DIR"


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV, "results")


@dataclass
class EstimatorConfig:
    # number of taste clusters
    M: int = 2
    # half-width of the log-share-ratio band
    tol: float = 0.5
    max_iterations: int = 50
    # relative change of the priors that stops the iterations
    convergence_threshold: float = 0.005
    # prior magnitudes below this are compared in absolute terms
    relative_change_floor: float = 1e-3
    seed: int = 42
    max_tol_doublings: int = 3
    # 0 = off
    bootstrap_resamples: int = 0
    kmeans_max_iter: int = 100

    backend: BackendName = "sequential"
    # worker processes and numba threads
    threads: int = field(default_factory=cpu_count)

    def __post_init__(self) -> None:
        if self.M < 1:
            raise SpecError(f"M must be >= 1, got {self.M}")
        if not self.tol > 0:
            raise SpecError(f"tol must be > 0, got {self.tol}")
        if not self.convergence_threshold > 0:
            raise SpecError(
                f"convergence_threshold must be > 0, got {self.convergence_threshold}"
            )
        if self.max_iterations < 1:
            raise SpecError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.max_tol_doublings < 0:
            raise SpecError(f"max_tol_doublings must be >= 0, got {self.max_tol_doublings}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EstimatorConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class RunConfig:
    # paths
    data_path: Optional[str] = None
    spec_path: Optional[str] = None
    output_dir: str = field(default_factory=default_output_dir)
    result_path: Optional[str] = None
    test_data_path: Optional[str] = None
    trips_path: Optional[str] = None

    # estimation
    M: int = 2
    tol: float = 0.5
    seed: int = 42
    max_iterations: int = 50
    convergence_threshold: float = 0.005
    max_tol_doublings: int = 3
    bootstrap_resamples: int = 0
    backend: BackendName = "sequential"
    # worker processes and numba threads
    threads: int = field(default_factory=cpu_count)
    train_fraction: Optional[float] = None

    # instruments / benchmarks
    groups: Dict[str, List[List[str]]] = field(default_factory=dict)
    instrument_columns: List[str] = field(default_factory=list)
    benchmark_models: List[BenchmarkKind] = field(default_factory=list)
    # falls back to `groups`; NL uses the first dimension only
    benchmark_groups: Dict[str, List[List[str]]] = field(default_factory=dict)

    # evaluation / analysis
    knn_k: int = 3
    knn_sweep: List[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    perturbation: float = 0.01
    price_column: Optional[str] = None
    price_alternatives: List[str] = field(default_factory=list)
    time_columns: Dict[str, str] = field(default_factory=dict)
    removed_alternative: Optional[str] = None

    # discount optimizer
    transit_alternative: Optional[str] = None
    fare_column: Optional[str] = None
    discount_rate: float = 0.5
    max_regions: int = 10
    budgets: List[float] = field(default_factory=lambda: [50_000.0])
    demand_weighted_loss: bool = False
    exact_region_limit: int = 64

    # sweep
    m_values: List[int] = field(default_factory=lambda: [1, 2, 3])
    k_values: List[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])

    plots: bool = False
    log_level: str = "INFO"

    def to_dict(self) -> dict:
        return asdict(self)

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(
            M=self.M,
            tol=self.tol,
            max_iterations=self.max_iterations,
            convergence_threshold=self.convergence_threshold,
            seed=self.seed,
            max_tol_doublings=self.max_tol_doublings,
            bootstrap_resamples=self.bootstrap_resamples,
            backend=self.backend,
            threads=self.threads,
        )

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Flag values win over file values; None means 'not given'."""
        known = {f.name for f in fields(self)}
        changes = {k: v for k, v in overrides.items() if k in known and v is not None}
        return replace(self, **changes)

    @classmethod
    def from_json(cls, path: str) -> "RunConfig":
        if not os.path.exists(path):
            raise SpecError(f"run config not found: {path}")
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise SpecError(f"unknown run config keys in {path}: {', '.join(unknown)}")
        return cls(**data)
