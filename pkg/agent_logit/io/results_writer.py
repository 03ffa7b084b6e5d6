import json
import os
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from agent_logit.benchmarks.models import BenchmarkFit
from agent_logit.errors import SpecError
from agent_logit.estimation.estimator import EstimationResult


# fixed artifact names: identical inputs give identical output files
RESULT_JSON = "estimation_result.json"
AGENT_PARAMS_CSV = "agent_parameters.csv"
TRACE_CSV = "iteration_trace.csv"
CLUSTER_CSV = "cluster_summary.csv"
STAGE1_JSON = "stage1.json"
ACCURACY_CSV = "prediction_accuracy.csv"
ACCURACY_JSON = "prediction_accuracy.json"
ELASTICITY_CSV = "price_elasticities.csv"
DIVERSION_CSV = "diversion_ratios.csv"
VOT_CSV = "vot_by_segment.csv"
VOT_REGION_CSV = "vot_by_region.csv"
CV_CSV = "compensating_variation.csv"
CV_CDF_CSV = "cv_cdf.csv"
DISCOUNT_INSTANCE_JSON = "discount_instance.json"
DISCOUNT_SOLUTIONS_JSON = "discount_solutions.json"
DISCOUNT_SUMMARY_CSV = "discount_summary.csv"
DISCOUNT_REGIONS_CSV = "discount_regions.csv"
SWEEP_CSV = "cluster_sweep.csv"


def _ensure_dir(path: str):
    os.makedirs(path, exist_ok=True)


def _json_default(value: Any):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"not JSON serialisable: {type(value).__name__}")


def save_json(data: Any, output_dir: str, filename: str) -> str:
    _ensure_dir(output_dir)
    path = os.path.join(output_dir, filename)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, ensure_ascii=False, default=_json_default)
    return path


def save_csv(frame: pd.DataFrame, output_dir: str, filename: str) -> str:
    _ensure_dir(output_dir)
    path = os.path.join(output_dir, filename)
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def agent_parameter_frame(result: EstimationResult) -> pd.DataFrame:
    rows = []
    for p in result.agent_params.values():
        row = {"agent_id": p.agent_id, "cluster": p.cluster, "status": p.status.value, "tol_used": p.tol_used}
        row.update({name: float(v) for name, v in zip(result.parameter_names, p.theta)})
        row["objective"] = p.objective
        row["degenerate"] = p.degenerate
        rows.append(row)
    return pd.DataFrame(rows)


def trace_frame(result: EstimationResult) -> pd.DataFrame:
    """One row per (iteration, cluster) with the prior after that iteration."""
    rows = []
    for rec in result.trace:
        for m, prior in enumerate(rec.priors):
            row = {"iteration": rec.iteration, "cluster": m, "size": rec.cluster_sizes[m]}
            row.update({name: float(v) for name, v in zip(result.parameter_names, prior)})
            row["max_relative_change"] = rec.max_relative_change
            row["n_infeasible"] = rec.n_infeasible
            row["n_relaxed"] = rec.n_relaxed
            rows.append(row)
    return pd.DataFrame(rows)


def save_estimation_result(result: EstimationResult, output_dir: str) -> Dict[str, str]:
    """Result JSON, per-agent parameter CSV, iteration trace CSV and cluster summary CSV."""
    return {
        "result": save_json(result.to_dict(), output_dir, RESULT_JSON),
        "agents": save_csv(agent_parameter_frame(result), output_dir, AGENT_PARAMS_CSV),
        "trace": save_csv(trace_frame(result), output_dir, TRACE_CSV),
        "clusters": save_csv(pd.DataFrame(result.cluster_summary()), output_dir, CLUSTER_CSV),
    }


def load_estimation_result(path: str) -> EstimationResult:
    if os.path.isdir(path):
        path = os.path.join(path, RESULT_JSON)
    if not os.path.exists(path):
        raise SpecError(f"estimation result not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return EstimationResult.from_dict(json.load(f))


def benchmark_filename(kind: str) -> str:
    return f"benchmark_{kind.lower()}.json"


def save_benchmark_fit(fit: BenchmarkFit, output_dir: str) -> str:
    return save_json(fit.to_dict(), output_dir, benchmark_filename(fit.model_kind))


def load_benchmark_fit(output_dir: str, kind: str) -> Optional[BenchmarkFit]:
    path = os.path.join(output_dir, benchmark_filename(kind))
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as f:
        return BenchmarkFit.from_dict(json.load(f))
