from __future__ import annotations

import argparse
import logging

from mpi4py import MPI

from agent_logit.config import RunConfig
from agent_logit.estimation.estimator import estimate_glam
from agent_logit.io.logging_utils import setup_logging, logger
from agent_logit.io.results_writer import save_estimation_result
from agent_logit.backends.backend_mpi import MPIBackend
from agent_logit.cli import training_data


def main() -> None:
    parser = argparse.ArgumentParser(description="GLAM estimation with agents spread over MPI ranks")
    parser.add_argument("--config", required=True, help="JSON run config (data_path, spec_path, M, tol, ...)")
    args = parser.parse_args()

    comm = MPI.COMM_WORLD
    rank = comm.Get_rank()

    # every rank configures logging; only rank 0 logs above WARNING
    setup_logging(level=logging.INFO if rank == 0 else logging.WARNING)
    if rank != 0:
        logger.setLevel(logging.WARNING)

    cfg = RunConfig.from_json(args.config).with_overrides(backend="mpi")
    est_cfg = cfg.estimator_config()

    # every rank loads the full dataset; the backend solves only its block
    train, _ = training_data(cfg)

    # Create MPI backend directly, do NOT use get_backend
    backend = MPIBackend(est_cfg)
    result = estimate_glam(train, est_cfg, backend=backend)

    # Only rank 0 saves results
    if rank == 0:
        logger.info("=== MPI run finished ===")
        logger.info(f"Ranks: {comm.Get_size()}")
        logger.info(f"Converged: {result.converged} after {result.iterations_run} iterations")
        paths = save_estimation_result(result, cfg.output_dir)
        logger.info(f"Results saved to {paths['result']}")


if __name__ == "__main__":
    main()
