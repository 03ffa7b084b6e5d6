from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from agent_logit.analysis.accuracy import accuracy_metrics
from agent_logit.analysis.shares import GlamPredictor
from agent_logit.analysis.substitution import diversion_ratios, elasticity_report
from agent_logit.analysis.transfer import knn_transfer
from agent_logit.analysis.welfare import cv_cdf, cv_table, vot_by_group, vot_by_segment
from agent_logit.backends import BACKENDS
from agent_logit.benchmarks.models import MODEL_KINDS, BenchmarkFit, BenchmarkPredictor, estimate_benchmark
from agent_logit.config import RunConfig
from agent_logit.discount.instance import precompute_discount_shares
from agent_logit.discount.solvers import budget_summary, region_summary, solve_bp
from agent_logit.errors import AgentLogitError, SpecError
from agent_logit.estimation.bootstrap import bootstrap_standard_errors
from agent_logit.estimation.estimator import EstimationResult, estimate_glam, make_backend
from agent_logit.experiments.runner import evaluate_in_sample, evaluate_out_of_sample, run_cluster_sweep
from agent_logit.io import results_writer as rw
from agent_logit.io.logging_utils import logger, setup_logging
from agent_logit.metrics.timers import walltime
from agent_logit.model.dataset_io import aggregate_trips, load_dataset_csv, load_trips_csv, train_test_split, write_dataset_csv
from agent_logit.model.market import Dataset
from agent_logit.model.spec import ModelSpec, load_model_spec
from agent_logit.regression.instruments import build_differentiation_instruments, control_function_stage1


# ============================================================
# input helpers
# ============================================================

def _require(value, flag: str):
    if value is None or value == [] or value == {}:
        raise SpecError(f"missing required setting: {flag}")
    return value


def _spec(cfg: RunConfig) -> ModelSpec:
    return load_model_spec(_require(cfg.spec_path, "--spec"))


def _stage1(cfg: RunConfig, fits: Optional[dict] = None) -> Callable[[Dataset], Dataset]:
    def run(ds: Dataset) -> Dataset:
        if ds.spec.endogenous_column is None:
            return ds
        stage = control_function_stage1(ds, groups=cfg.groups, instrument_columns=cfg.instrument_columns)
        if fits is not None:
            fits.update(stage.to_dict())
        return stage.dataset
    return run


def _load(cfg: RunConfig, path: Optional[str], flag: str, fits: Optional[dict] = None) -> Dataset:
    ds = load_dataset_csv(_require(path, flag), _spec(cfg))
    return _stage1(cfg, fits)(ds)


def training_data(cfg: RunConfig, fits: Optional[dict] = None) -> Tuple[Dataset, Optional[Dataset]]:
    """
    Training agents and, if any, held-out agents: a separate test file,
    else the dataset's split column, else a random split by train_fraction.
    The control residual is computed before splitting; its first-stage
    fits go to `fits` when given.
    """
    ds = _load(cfg, cfg.data_path, "--data", fits)
    if cfg.test_data_path:
        return ds, _load(cfg, cfg.test_data_path, "--test-data")
    if ds.split_tag is not None and set(ds.split_tag) != {"train"}:
        return ds.split_by_tag()
    if cfg.train_fraction is not None:
        return train_test_split(ds, cfg.train_fraction, cfg.seed)
    return ds, None


def _result(cfg: RunConfig) -> EstimationResult:
    return rw.load_estimation_result(cfg.result_path or cfg.output_dir)


def _model_for(result: EstimationResult, ds: Dataset, K: int) -> GlamPredictor:
    """GLAM predictor covering every agent of `ds`; unseen agents via KNN."""
    known = [i for i, a in enumerate(ds.agent_ids) if a in result.agent_params]
    unseen = [o for o in ds.observations if o.agent_id not in result.agent_params]
    extra = None
    if unseen:
        if not known:
            raise SpecError("estimation result shares no agents with the dataset")
        extra = knn_transfer(result, ds.subset(known), unseen, K)
    return GlamPredictor.from_result(result, extra)


def _benchmark_groups(cfg: RunConfig, kind: str) -> Dict[str, List[List[str]]]:
    groups = cfg.benchmark_groups or cfg.groups
    if kind == "NL" and groups:
        first = next(iter(groups))
        return {first: groups[first]}
    return groups if kind != "MNL" else {}


def _benchmark_fits(cfg: RunConfig, train: Dataset) -> List[BenchmarkFit]:
    """Saved fits from the output directory, fitted on `train` when missing."""
    fits = []
    for kind in cfg.benchmark_models:
        fit = rw.load_benchmark_fit(cfg.output_dir, kind)
        if fit is None:
            fit = _fit_benchmark(cfg, train, kind)
        fits.append(fit)
    return fits


def _fit_benchmark(cfg: RunConfig, train: Dataset, kind: str) -> BenchmarkFit:
    groups = _benchmark_groups(cfg, kind)
    instruments = None
    if cfg.groups and cfg.instrument_columns:
        instruments = build_differentiation_instruments(train, cfg.groups, cfg.instrument_columns)
    return estimate_benchmark(train, kind, groups=groups, instruments=instruments)


def _report_row(model: str, sample: str, K: Optional[int], report) -> dict:
    return {
        "model": model,
        "sample": sample,
        "K": K,
        "mae": report.mae,
        "overall_accuracy": report.overall_accuracy,
        "adjusted_r_square": report.adjusted_r_square,
        "n_agents": report.n_agents,
    }


# ============================================================
# commands
# ============================================================

def cmd_validate(cfg: RunConfig) -> int:
    ds = load_dataset_csv(_require(cfg.data_path, "--data"), _spec(cfg))
    regions = len({o.region_id for o in ds.observations})
    print(
        f"OK: {len(ds)} agents, {ds.spec.J} alternatives, {ds.spec.K} parameters, "
        f"{len(set(ds.segments))} segments, {regions} regions"
    )
    return 0


def cmd_estimate(cfg: RunConfig) -> int:
    stage1_fits: dict = {}
    train, _ = training_data(cfg, stage1_fits)
    est_cfg = cfg.estimator_config()
    backend = make_backend(est_cfg)

    with walltime("estimate"):
        result = estimate_glam(train, est_cfg, backend=backend)

    if est_cfg.bootstrap_resamples:
        bs = bootstrap_standard_errors(train, est_cfg, reference=result, stage1=_stage1(cfg), backend=backend)
        result.bootstrap_se = bs.standard_errors
        result.bootstrap_failures = bs.n_failed

    paths = rw.save_estimation_result(result, cfg.output_dir)
    if stage1_fits:
        paths["stage1"] = rw.save_json(stage1_fits, cfg.output_dir, rw.STAGE1_JSON)
    if cfg.plots:
        from agent_logit.io.plots import save_estimation_plots
        save_estimation_plots(result, cfg.output_dir)

    status = "converged" if result.converged else "did NOT converge"
    print(
        f"GLAM {status} after {result.iterations_run} iterations: M={result.M}, "
        f"{len(result.agent_params)} agents, {len(result.infeasible_agents)} infeasible"
    )
    for path in paths.values():
        logger.info(f"Saved {path}")
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    result = _result(cfg)
    train, test = training_data(cfg)

    rows = [_report_row("GLAM", "in", None, evaluate_in_sample(result, train))]
    fits = _benchmark_fits(cfg, train)
    for fit in fits:
        K_dof = len(fit.parameter_names) + len(fit.rho)
        rows.append(_report_row(fit.model_kind, "in", None, accuracy_metrics(
            BenchmarkPredictor(fit).predict(train), train.shares_matrix, K_dof)))

    if test is not None:
        for K in cfg.knn_sweep:
            report, _ = evaluate_out_of_sample(result, train, test, K)
            rows.append(_report_row("GLAM", "out", K, report))
        for fit in fits:
            K_dof = len(fit.parameter_names) + len(fit.rho)
            rows.append(_report_row(fit.model_kind, "out", None, accuracy_metrics(
                BenchmarkPredictor(fit).predict(test), test.shares_matrix, K_dof)))

    frame = pd.DataFrame(rows)
    rw.save_csv(frame, cfg.output_dir, rw.ACCURACY_CSV)
    rw.save_json(rows, cfg.output_dir, rw.ACCURACY_JSON)
    print(frame.to_string(index=False))
    return 0


def cmd_analyze(cfg: RunConfig) -> int:
    result = _result(cfg)
    ds = _load(cfg, cfg.data_path, "--data")
    model = _model_for(result, ds, cfg.knn_k)
    thetas = model.thetas

    if cfg.price_column and cfg.price_alternatives:
        frames = []
        models = [("GLAM", model)] + [(f.model_kind, BenchmarkPredictor(f)) for f in _benchmark_fits(cfg, ds)]
        for name, predictor in models:
            report = elasticity_report(predictor, ds, cfg.price_column, cfg.price_alternatives, cfg.perturbation)
            frame = report.to_frame()
            frame.insert(0, "model", name)
            frames.append(frame)
        rw.save_csv(pd.concat(frames, ignore_index=True), cfg.output_dir, rw.ELASTICITY_CSV)

    if cfg.time_columns:
        diversion = diversion_ratios(model, ds, cfg.time_columns, cfg.perturbation)
        rw.save_csv(diversion.to_frame(), cfg.output_dir, rw.DIVERSION_CSV)
        if cfg.plots:
            from agent_logit.io.plots import plot_diversion_heatmap
            plot_diversion_heatmap(diversion, cfg.output_dir)

    if ds.spec.time_parameter and ds.spec.cost_parameter:
        rw.save_csv(vot_by_segment(ds, thetas), cfg.output_dir, rw.VOT_CSV)
        regions = vot_by_group(ds, thetas, {o.agent_id: o.region_id for o in ds.observations})
        rw.save_csv(regions.rename(columns={"group": "region_id"}), cfg.output_dir, rw.VOT_REGION_CSV)

    if cfg.removed_alternative:
        cv = cv_table(ds, thetas, cfg.removed_alternative)
        cdf = cv_cdf(cv, by_segment=True)
        rw.save_csv(cv, cfg.output_dir, rw.CV_CSV)
        rw.save_csv(cdf, cfg.output_dir, rw.CV_CDF_CSV)
        if cfg.plots:
            from agent_logit.io.plots import plot_cv_cdf
            plot_cv_cdf(cdf, cfg.output_dir)

    logger.info(f"Analysis written to {cfg.output_dir}")
    return 0


def cmd_optimize(cfg: RunConfig) -> int:
    result = _result(cfg)
    ds = _load(cfg, cfg.data_path, "--data")
    model = _model_for(result, ds, cfg.knn_k)
    extra = {a: t for a, t in model.thetas.items() if a not in result.agent_params}
    budgets = _require(cfg.budgets, "--budgets")

    inst = precompute_discount_shares(
        result,
        ds,
        transit_alternative=_require(cfg.transit_alternative, "--transit"),
        fare_column=_require(cfg.fare_column, "--fare-column"),
        discount_rate=cfg.discount_rate,
        max_regions=cfg.max_regions,
        budget=budgets[0],
        demand_weighted_loss=cfg.demand_weighted_loss,
        extra_thetas=extra,
    )
    summary, solutions = budget_summary(inst, budgets, solver=lambda i: solve_bp(i, cfg.exact_region_limit))

    per_region = []
    for budget, sol in zip(budgets, solutions):
        frame = region_summary(inst.with_limits(budget=budget), sol)
        frame.insert(0, "budget", budget)
        per_region.append(frame)

    rw.save_json(inst.to_dict(), cfg.output_dir, rw.DISCOUNT_INSTANCE_JSON)
    rw.save_json([s.to_dict() for s in solutions], cfg.output_dir, rw.DISCOUNT_SOLUTIONS_JSON)
    rw.save_csv(summary, cfg.output_dir, rw.DISCOUNT_SUMMARY_CSV)
    rw.save_csv(pd.concat(per_region, ignore_index=True), cfg.output_dir, rw.DISCOUNT_REGIONS_CSV)
    print(summary.drop(columns=["selected_regions"]).to_string(index=False))
    return 0


def cmd_benchmark(cfg: RunConfig) -> int:
    train, _ = training_data(cfg)
    for kind in _require(cfg.benchmark_models, "--models"):
        fit = _fit_benchmark(cfg, train, kind)
        path = rw.save_benchmark_fit(fit, cfg.output_dir)
        logger.info(f"Saved {path}")
    return 0


def cmd_aggregate(cfg: RunConfig) -> int:
    trips = load_trips_csv(_require(cfg.trips_path, "--trips"))
    ds = aggregate_trips(trips, _spec(cfg))
    out = cfg.data_path or os.path.join(cfg.output_dir, "markets.csv")
    rw._ensure_dir(os.path.dirname(out) or ".")
    write_dataset_csv(ds, out)
    print(f"Wrote {len(ds)} markets to {out}")
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    train, test = training_data(cfg)
    if test is None:
        raise SpecError("sweep needs held-out agents: --test-data, a split column or --train-fraction")
    frame = run_cluster_sweep(train, test, cfg.estimator_config(), cfg.m_values, cfg.k_values)
    rw.save_csv(frame, cfg.output_dir, rw.SWEEP_CSV)
    print(frame.to_string(index=False))
    return 0


COMMANDS: Dict[str, Callable[[RunConfig], int]] = {
    "validate": cmd_validate,
    "estimate": cmd_estimate,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
    "optimize": cmd_optimize,
    "benchmark": cmd_benchmark,
    "aggregate": cmd_aggregate,
    "sweep": cmd_sweep,
}


# ============================================================
# argument parsing
# ============================================================

def _group_arg(text: str) -> Dict[str, List[List[str]]]:
    """'dim=a,b;c,d' -> {'dim': [['a', 'b'], ['c', 'd']]}"""
    dim, _, body = text.partition("=")
    if not body:
        raise argparse.ArgumentTypeError(f"expected dim=a,b;c,d, got '{text}'")
    return {dim: [s.split(",") for s in body.split(";") if s]}


def _pair_arg(text: str) -> Tuple[str, str]:
    key, _, value = text.partition("=")
    if not value:
        raise argparse.ArgumentTypeError(f"expected alternative=column, got '{text}'")
    return key, value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config; flags override its values")
    common.add_argument("--data", dest="data_path")
    common.add_argument("--spec", dest="spec_path")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--result", dest="result_path", help="estimation result JSON or its directory")
    common.add_argument("--test-data", dest="test_data_path")
    common.add_argument("--trips", dest="trips_path")
    common.add_argument("--log-level", dest="log_level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--plots", action="store_true", default=None)

    est = common.add_argument_group("estimation")
    est.add_argument("--M", type=int)
    est.add_argument("--tol", type=float)
    est.add_argument("--seed", type=int)
    est.add_argument("--max-iterations", dest="max_iterations", type=int)
    est.add_argument("--convergence-threshold", dest="convergence_threshold", type=float)
    est.add_argument("--bootstrap", dest="bootstrap_resamples", type=int)
    est.add_argument("--backend", choices=sorted(BACKENDS))
    est.add_argument("--threads", type=int)
    est.add_argument("--train-fraction", dest="train_fraction", type=float)
    est.add_argument("--group", dest="groups", type=_group_arg, action="append")
    est.add_argument("--instrument-columns", dest="instrument_columns", nargs="+")

    ana = common.add_argument_group("evaluation / analysis")
    ana.add_argument("--models", dest="benchmark_models", nargs="+", choices=MODEL_KINDS)
    ana.add_argument("--knn-k", dest="knn_k", type=int)
    ana.add_argument("--knn-sweep", dest="knn_sweep", type=int, nargs="+")
    ana.add_argument("--perturbation", type=float)
    ana.add_argument("--price-column", dest="price_column")
    ana.add_argument("--price-alternatives", dest="price_alternatives", nargs="+")
    ana.add_argument("--time-column", dest="time_columns", type=_pair_arg, action="append")
    ana.add_argument("--removed", dest="removed_alternative")

    opt = common.add_argument_group("discount")
    opt.add_argument("--transit", dest="transit_alternative")
    opt.add_argument("--fare-column", dest="fare_column")
    opt.add_argument("--discount-rate", dest="discount_rate", type=float)
    opt.add_argument("--max-regions", dest="max_regions", type=int)
    opt.add_argument("--budgets", type=float, nargs="+")
    opt.add_argument("--demand-weighted-loss", dest="demand_weighted_loss", action="store_true", default=None)
    opt.add_argument("--exact-region-limit", dest="exact_region_limit", type=int)

    swp = common.add_argument_group("sweep")
    swp.add_argument("--m-values", dest="m_values", type=int, nargs="+")
    swp.add_argument("--k-values", dest="k_values", type=int, nargs="+")

    parser = argparse.ArgumentParser(prog="agent_logit", description="Agent-level logit estimation from market shares")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
    overrides = {k: v for k, v in vars(args).items() if k not in ("config", "command")}
    if overrides.get("groups") is not None:
        merged: Dict[str, List[List[str]]] = {}
        for g in overrides["groups"]:
            merged.update(g)
        overrides["groups"] = merged
    if overrides.get("time_columns") is not None:
        overrides["time_columns"] = dict(overrides["time_columns"])
    return cfg.with_overrides(**overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        setup_logging(level=getattr(logging, cfg.log_level.upper(), logging.INFO))
        logger.setLevel(getattr(logging, cfg.log_level.upper(), logging.INFO))
        return COMMANDS[args.command](cfg)
    except AgentLogitError as exc:
        logger.error(str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        logger.error(str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return 2
