from agent_logit.model.spec import CONSTANT, CONTROL_COLUMN, ModelSpec, load_model_spec, write_model_spec
from agent_logit.model.market import Dataset, MarketObservation
from agent_logit.model.dataset_io import (
    aggregate_trips,
    load_dataset_csv,
    load_trips_csv,
    train_test_split,
    write_dataset_csv,
)

__all__ = [
    "CONSTANT",
    "CONTROL_COLUMN",
    "ModelSpec",
    "load_model_spec",
    "write_model_spec",
    "Dataset",
    "MarketObservation",
    "aggregate_trips",
    "load_dataset_csv",
    "load_trips_csv",
    "train_test_split",
    "write_dataset_csv",
]
