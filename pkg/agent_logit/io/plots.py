import os
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from agent_logit.analysis.substitution import DiversionMatrix  # noqa: E402
from agent_logit.estimation.estimator import EstimationResult  # noqa: E402
from agent_logit.io.results_writer import _ensure_dir  # noqa: E402


def _save(fig, output_dir: str, filename: str) -> str:
    _ensure_dir(output_dir)
    path = os.path.join(output_dir, filename)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_prior_trace(result: EstimationResult, output_dir: str) -> str:
    """Cluster priors per iteration, one panel per parameter."""
    K = len(result.parameter_names)
    fig, axes = plt.subplots(1, K, figsize=(4 * K, 3.5), squeeze=False)
    iters = [rec.iteration for rec in result.trace]
    priors = np.array([rec.priors for rec in result.trace])
    for k, name in enumerate(result.parameter_names):
        ax = axes[0, k]
        for m in range(result.M):
            ax.plot(iters, priors[:, m, k], marker="o", ms=3, label=f"cluster {m}")
        ax.set_title(name)
        ax.set_xlabel("iteration")
    axes[0, 0].legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, output_dir, "prior_trace.png")


def plot_cluster_histograms(result: EstimationResult, output_dir: str, bins: int = 30) -> str:
    K = len(result.parameter_names)
    fig, axes = plt.subplots(1, K, figsize=(4 * K, 3.5), squeeze=False)
    params = [p for p in result.agent_params.values() if p.feasible]
    for k, name in enumerate(result.parameter_names):
        ax = axes[0, k]
        for m in range(result.M):
            values = [p.theta[k] for p in params if p.cluster == m]
            if values:
                ax.hist(values, bins=bins, alpha=0.5, label=f"cluster {m}")
        ax.set_title(name)
    axes[0, 0].legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, output_dir, "cluster_histograms.png")


def plot_cv_cdf(cdf: pd.DataFrame, output_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, block in cdf.groupby("segment", sort=True):
        ax.step(block["cv"], block["cumulative_share"], where="post", label=str(label))
    ax.set_xlabel("compensating variation per trip")
    ax.set_ylabel("cumulative share of trips")
    ax.legend(fontsize=8)
    return _save(fig, output_dir, "cv_cdf.png")


def plot_diversion_heatmap(diversion: DiversionMatrix, output_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(diversion.matrix, cmap="RdBu_r", vmin=-1.0, vmax=1.0)
    ax.set_xticks(range(len(diversion.alternatives)), diversion.alternatives, rotation=45)
    ax.set_yticks(range(len(diversion.alternatives)), diversion.alternatives)
    ax.set_xlabel("to")
    ax.set_ylabel("time increase of")
    for (r, c), v in np.ndenumerate(diversion.matrix):
        if np.isfinite(v):
            ax.text(c, r, f"{v:.2f}", ha="center", va="center", fontsize=7)
    plt.colorbar(im, ax=ax, label="diversion ratio")
    return _save(fig, output_dir, "diversion_heatmap.png")


def save_estimation_plots(result: EstimationResult, output_dir: str) -> List[str]:
    return [plot_prior_trace(result, output_dir), plot_cluster_histograms(result, output_dir)]
