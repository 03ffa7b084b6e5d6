from dataclasses import replace
from typing import Iterable, Optional, Tuple

import pandas as pd

from agent_logit.analysis.accuracy import PredictionReport, accuracy_metrics
from agent_logit.analysis.shares import GlamPredictor
from agent_logit.analysis.transfer import knn_transfer
from agent_logit.backends.base_backend import AgentSolverBackend
from agent_logit.config import EstimatorConfig
from agent_logit.estimation.estimator import EstimationResult, estimate_glam
from agent_logit.io.logging_utils import logger
from agent_logit.model.market import Dataset


def glam_dof(result: EstimationResult) -> int:
    """Cluster-level effective parameter count used for the adjusted R^2."""
    return len(result.parameter_names) * result.M


def evaluate_in_sample(result: EstimationResult, ds: Dataset) -> PredictionReport:
    model = GlamPredictor.from_result(result)
    return accuracy_metrics(model.predict(ds), ds.shares_matrix, glam_dof(result))


def evaluate_out_of_sample(
    result: EstimationResult,
    train: Dataset,
    test: Dataset,
    K: int,
) -> Tuple[PredictionReport, GlamPredictor]:
    """Predict held-out agents with KNN-transferred parameters."""
    thetas = knn_transfer(result, train, test.observations, K)
    model = GlamPredictor(thetas)
    return accuracy_metrics(model.predict(test), test.shares_matrix, glam_dof(result)), model


def run_cluster_sweep(
    train: Dataset,
    test: Dataset,
    base_cfg: EstimatorConfig,
    m_values: Iterable[int],
    k_values: Iterable[int],
    backend: Optional[AgentSolverBackend] = None,
) -> pd.DataFrame:
    """
    Helper: re-estimates for each number of clusters M and evaluates every
    neighbour count K out of sample.

    :param base_cfg: all settings except M
    :return: one row per (M, K) with in- and out-of-sample MAE/OA/ARS
    """
    k_values = list(k_values)
    rows = []
    for M in m_values:
        cfg = replace(base_cfg, M=M)
        result = estimate_glam(train, cfg, backend=backend)
        inside = evaluate_in_sample(result, train)
        for K in k_values:
            outside, _ = evaluate_out_of_sample(result, train, test, K)
            rows.append({
                "M": M,
                "K": K,
                "converged": result.converged,
                "iterations": result.iterations_run,
                "in_mae": inside.mae,
                "in_oa": inside.overall_accuracy,
                "in_ars": inside.adjusted_r_square,
                "out_mae": outside.mae,
                "out_oa": outside.overall_accuracy,
                "out_ars": outside.adjusted_r_square,
            })
            logger.info(f"Sweep M={M} K={K}: in OA={inside.overall_accuracy:.4f} out OA={outside.overall_accuracy:.4f}")
    return pd.DataFrame(rows)
