from agent_logit.regression.least_squares import LinearModelFit, ols_fit, tsls_fit
from agent_logit.regression.instruments import (
    InstrumentSet,
    StageOneResult,
    build_differentiation_instruments,
    control_function_stage1,
)

__all__ = [
    "LinearModelFit",
    "ols_fit",
    "tsls_fit",
    "InstrumentSet",
    "StageOneResult",
    "build_differentiation_instruments",
    "control_function_stage1",
]
