from agent_logit.analysis.shares import GlamPredictor, SharePredictor, predict_share_matrix, predict_shares
from agent_logit.analysis.accuracy import PredictionReport, accuracy_metrics
from agent_logit.analysis.substitution import (
    DiversionMatrix,
    ElasticityReport,
    diversion_ratios,
    elasticity_report,
    price_elasticity,
)
from agent_logit.analysis.welfare import (
    compensating_variation,
    cv_cdf,
    cv_table,
    value_of_time,
    vot_by_group,
    vot_by_segment,
)
from agent_logit.analysis.transfer import knn_transfer

__all__ = [
    "GlamPredictor",
    "SharePredictor",
    "predict_share_matrix",
    "predict_shares",
    "PredictionReport",
    "accuracy_metrics",
    "DiversionMatrix",
    "ElasticityReport",
    "diversion_ratios",
    "elasticity_report",
    "price_elasticity",
    "compensating_variation",
    "cv_cdf",
    "cv_table",
    "value_of_time",
    "vot_by_group",
    "vot_by_segment",
    "knn_transfer",
]
