import json
import os

import pandas as pd
import pytest

from agent_logit.cli import build_parser, config_from_args, main
from agent_logit.io import results_writer as rw
from agent_logit.model.dataset_io import dataset_frame, write_dataset_csv
from agent_logit.model.spec import write_model_spec


@pytest.fixture
def inputs(tmp_path, taxi_spec, taxi_dataset):
    spec = write_model_spec(taxi_spec, str(tmp_path / "spec.json"))
    data = write_dataset_csv(taxi_dataset, str(tmp_path / "markets.csv"))
    return {"spec": spec, "data": data, "dir": tmp_path}


def _read(path: str) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def _estimate(inputs, out: str) -> int:
    return main([
        "estimate", "--spec", inputs["spec"], "--data", inputs["data"],
        "--M", "2", "--tol", "0.5", "--seed", "7", "--output-dir", out,
    ])


def test_validate_reports_counts(inputs, capsys):
    assert main(["validate", "--spec", inputs["spec"], "--data", inputs["data"]]) == 0
    out = capsys.readouterr().out
    assert out.startswith("OK: 8 agents, 2 alternatives, 3 parameters, 2 segments, 3 regions")


def test_validate_rejects_bad_shares(inputs, taxi_dataset, capsys):
    frame = dataset_frame(taxi_dataset)
    frame.loc[(frame["agent_id"] == "agent3") & (frame["alternative"] == "taxi"), "share"] = 0.9
    bad = str(inputs["dir"] / "bad.csv")
    frame.to_csv(bad, index=False)

    assert main(["validate", "--spec", inputs["spec"], "--data", bad]) == 2
    assert "agent3" in capsys.readouterr().err


def test_missing_inputs_exit_with_code_2(inputs, capsys):
    missing = str(inputs["dir"] / "nope.json")
    assert main(["validate", "--spec", missing, "--data", inputs["data"]]) == 2
    assert "nope.json" in capsys.readouterr().err

    assert main(["validate", "--spec", inputs["spec"]]) == 2
    assert "--data" in capsys.readouterr().err


def test_estimate_writes_identical_files_on_rerun(inputs):
    first, second = str(inputs["dir"] / "run1"), str(inputs["dir"] / "run2")
    assert _estimate(inputs, first) == 0
    assert _estimate(inputs, second) == 0

    for name in (rw.RESULT_JSON, rw.AGENT_PARAMS_CSV, rw.TRACE_CSV, rw.CLUSTER_CSV):
        assert os.path.exists(os.path.join(first, name))
        assert _read(os.path.join(first, name)) == _read(os.path.join(second, name))

    agents = pd.read_csv(os.path.join(first, rw.AGENT_PARAMS_CSV))
    assert len(agents) == 8
    assert set(agents.columns) >= {"agent_id", "cluster", "status", "b_time", "b_cost", "asc_transit"}


def test_evaluate_compares_against_mnl(inputs):
    out = str(inputs["dir"] / "run")
    assert _estimate(inputs, out) == 0
    assert main([
        "evaluate", "--spec", inputs["spec"], "--data", inputs["data"], "--output-dir", out, "--models", "MNL",
    ]) == 0

    frame = pd.read_csv(os.path.join(out, rw.ACCURACY_CSV))
    assert frame["model"].tolist() == ["GLAM", "MNL"]
    assert frame["sample"].tolist() == ["in", "in"]
    assert frame["overall_accuracy"].between(0.0, 1.0).all()


def test_analyze_writes_requested_tables(inputs):
    out = str(inputs["dir"] / "run")
    assert _estimate(inputs, out) == 0
    assert main([
        "analyze", "--spec", inputs["spec"], "--data", inputs["data"], "--output-dir", out,
        "--price-column", "cost", "--price-alternatives", "transit",
        "--time-column", "taxi=time", "--removed", "transit",
    ]) == 0

    for name in (rw.ELASTICITY_CSV, rw.DIVERSION_CSV, rw.VOT_CSV, rw.VOT_REGION_CSV, rw.CV_CSV, rw.CV_CDF_CSV):
        assert os.path.exists(os.path.join(out, name))


def test_optimize_with_zero_budget_selects_nothing(inputs):
    out = str(inputs["dir"] / "run")
    assert _estimate(inputs, out) == 0
    assert main([
        "optimize", "--spec", inputs["spec"], "--data", inputs["data"], "--output-dir", out,
        "--transit", "transit", "--fare-column", "cost", "--budgets", "0", "1000", "--max-regions", "2",
    ]) == 0

    summary = pd.read_csv(os.path.join(out, rw.DISCOUNT_SUMMARY_CSV))
    assert summary["budget"].tolist() == [0.0, 1000.0]
    assert summary["n_selected"].iloc[0] == 0
    assert summary["n_selected"].iloc[1] <= 2
    assert summary["optimal"].all()
    with open(os.path.join(out, rw.DISCOUNT_SOLUTIONS_JSON), encoding="utf-8") as f:
        assert len(json.load(f)) == 2


def test_flags_override_run_config(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"M": 4, "tol": 0.25, "budgets": [10.0]}))
    args = build_parser().parse_args([
        "estimate", "--config", str(config), "--M", "3", "--group", "mode=bus,rail;car", "--time-column", "bus=time",
    ])
    cfg = config_from_args(args)

    assert cfg.M == 3
    assert cfg.tol == 0.25
    assert cfg.budgets == [10.0]
    assert cfg.groups == {"mode": [["bus", "rail"], ["car"]]}
    assert cfg.time_columns == {"bus": "time"}


def test_unknown_run_config_key(tmp_path, capsys):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"clusters": 3}))

    assert main(["validate", "--config", str(config)]) == 2
    assert "clusters" in capsys.readouterr().err


def test_aggregate_writes_markets(inputs, tmp_path):
    trips = pd.DataFrame({
        "segment": ["low", "low", "low"],
        "origin_zone": ["z1"] * 3,
        "destination_zone": ["z2"] * 3,
        "alternative": ["taxi", "transit", "taxi"],
        "time": [10.0, 30.0, 12.0],
        "cost": [9.0, 3.0, 11.0],
    })
    trips_path = str(tmp_path / "trips.csv")
    trips.to_csv(trips_path, index=False)
    out = str(tmp_path / "agg")

    assert main(["aggregate", "--spec", inputs["spec"], "--trips", trips_path, "--output-dir", out]) == 0
    markets = pd.read_csv(os.path.join(out, "markets.csv"))
    assert markets["agent_id"].unique().tolist() == ["low|z1|z2"]
    assert markets["share"].tolist() == pytest.approx([2 / 3, 1 / 3])
