from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from agent_logit.backends.base_backend import AgentSolverBackend
from agent_logit.config import EstimatorConfig
from agent_logit.errors import AgentLogitError, EstimationError, SpecError
from agent_logit.estimation.estimator import EstimationResult, align_labels, estimate_glam
from agent_logit.io.logging_utils import logger
from agent_logit.model.market import Dataset


Stage1 = Callable[[Dataset], Dataset]


@dataclass
class BootstrapResult:
    # (M, K) standard deviation of the aligned cluster priors
    standard_errors: np.ndarray
    # (n_ok, M, K) aligned priors of the successful resamples
    samples: np.ndarray
    n_resamples: int
    n_failed: int


def resample_dataset(ds: Dataset, rng: np.random.Generator) -> Dataset:
    """Draw |T| agents with replacement; repeats get '#k' id suffixes."""
    idx = rng.integers(len(ds), size=len(ds))
    seen: Dict[str, int] = {}
    observations = []
    for t in idx:
        obs = ds.observations[t]
        k = seen.get(obs.agent_id, 0)
        seen[obs.agent_id] = k + 1
        observations.append(replace(obs, agent_id=f"{obs.agent_id}#{k}"))
    return ds.with_observations(observations)


def bootstrap_standard_errors(
    ds: Dataset,
    cfg: EstimatorConfig,
    reference: Optional[EstimationResult] = None,
    stage1: Optional[Stage1] = None,
    backend: Optional[AgentSolverBackend] = None,
    show_progress: bool = True,
) -> BootstrapResult:
    """
    Agent-level bootstrap of the cluster priors.

    Each resample re-runs `stage1` (the control-function regression, when
    the model has one) and the full estimation. Resample clusters are
    matched to the reference clusters by minimum total squared distance.
    Failed resamples are logged and skipped.

    :raises SpecError: fewer than 2 resamples requested
    :raises EstimationError: more than half of the resamples failed
    """
    B = cfg.bootstrap_resamples
    if B < 2:
        raise SpecError(f"bootstrap needs at least 2 resamples, got {B}")

    inner = replace(cfg, bootstrap_resamples=0)
    if reference is None:
        reference = estimate_glam(stage1(ds) if stage1 else ds, inner, backend=backend)

    samples: List[np.ndarray] = []
    failed = 0
    for b in tqdm(range(B), desc="bootstrap", disable=not show_progress):
        rng = np.random.default_rng([cfg.seed, b])
        sample = resample_dataset(ds, rng)
        try:
            if stage1 is not None:
                sample = stage1(sample)
            res = estimate_glam(sample, inner, backend=backend)
        except AgentLogitError as exc:
            failed += 1
            logger.warning(f"Bootstrap resample {b} failed: {exc}")
            continue
        perm = align_labels(res.priors, reference.priors)
        aligned = np.empty_like(res.priors)
        aligned[perm] = res.priors
        samples.append(aligned)

    if failed > B / 2:
        raise EstimationError(f"{failed} of {B} bootstrap resamples failed")

    stacked = np.stack(samples)
    se = stacked.std(axis=0, ddof=1) if len(samples) > 1 else np.zeros_like(reference.priors)
    logger.info(f"Bootstrap finished: {len(samples)} ok, {failed} failed")
    return BootstrapResult(standard_errors=se, samples=stacked, n_resamples=B, n_failed=failed)
