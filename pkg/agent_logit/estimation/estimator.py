from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from agent_logit.backends import get_backend
from agent_logit.backends.base_backend import AgentSolverBackend
from agent_logit.config import EstimatorConfig
from agent_logit.errors import EstimationError
from agent_logit.estimation.kmeans import kmeans_cluster
from agent_logit.estimation.msa import msa_update, relative_change
from agent_logit.io.logging_utils import logger
from agent_logit.metrics.timers import Timer
from agent_logit.model.market import Dataset
from agent_logit.qp.subproblem import QPSolution, QPStatus


@dataclass
class AgentParameters:
    agent_id: str
    theta: np.ndarray
    cluster: int
    status: QPStatus
    tol_used: float
    objective: float = math.nan
    kkt_residual: float = math.nan
    degenerate: bool = False

    @property
    def feasible(self) -> bool:
        return self.status != QPStatus.INFEASIBLE

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "theta": [float(v) for v in self.theta],
            "cluster": int(self.cluster),
            "status": self.status.value,
            "tol_used": float(self.tol_used),
            "objective": _json_float(self.objective),
            "kkt_residual": _json_float(self.kkt_residual),
            "degenerate": bool(self.degenerate),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AgentParameters":
        return cls(
            agent_id=str(data["agent_id"]),
            theta=np.array(data["theta"], dtype=np.float64),
            cluster=int(data["cluster"]),
            status=QPStatus(data["status"]),
            tol_used=float(data["tol_used"]),
            objective=_float_or_nan(data.get("objective")),
            kkt_residual=_float_or_nan(data.get("kkt_residual")),
            degenerate=bool(data.get("degenerate", False)),
        )


@dataclass
class IterationRecord:
    iteration: int
    priors: np.ndarray
    cluster_sizes: List[int]
    mean_objective: float
    max_relative_change: float
    n_infeasible: int = 0
    n_relaxed: int = 0

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "priors": self.priors.tolist(),
            "cluster_sizes": list(self.cluster_sizes),
            "mean_objective": _json_float(self.mean_objective),
            "max_relative_change": _json_float(self.max_relative_change),
            "n_infeasible": self.n_infeasible,
            "n_relaxed": self.n_relaxed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IterationRecord":
        return cls(
            iteration=int(data["iteration"]),
            priors=np.array(data["priors"], dtype=np.float64),
            cluster_sizes=[int(s) for s in data["cluster_sizes"]],
            mean_objective=_float_or_nan(data["mean_objective"]),
            max_relative_change=_float_or_nan(data["max_relative_change"]),
            n_infeasible=int(data.get("n_infeasible", 0)),
            n_relaxed=int(data.get("n_relaxed", 0)),
        )


@dataclass
class EstimationResult:
    parameter_names: List[str]
    priors: np.ndarray
    agent_params: Dict[str, AgentParameters]
    trace: List[IterationRecord]
    converged: bool
    iterations_run: int
    config: dict = field(default_factory=dict)
    bootstrap_se: Optional[np.ndarray] = None
    bootstrap_failures: int = 0

    @property
    def M(self) -> int:
        return self.priors.shape[0]

    @property
    def agent_ids(self) -> List[str]:
        return list(self.agent_params)

    def theta(self, agent_id: str) -> np.ndarray:
        return self.agent_params[agent_id].theta

    def theta_matrix(self, agent_ids: Optional[Sequence[str]] = None) -> np.ndarray:
        ids = self.agent_ids if agent_ids is None else agent_ids
        return np.stack([self.agent_params[a].theta for a in ids])

    def parameter(self, name: str) -> int:
        return self.parameter_names.index(name)

    @property
    def infeasible_agents(self) -> List[str]:
        return [a for a, p in self.agent_params.items() if not p.feasible]

    def cluster_summary(self) -> List[dict]:
        """Per-cluster size and mean/SD of member parameters (feasible agents)."""
        rows = []
        for m in range(self.M):
            members = [p.theta for p in self.agent_params.values() if p.cluster == m and p.feasible]
            thetas = np.array(members) if members else np.zeros((0, len(self.parameter_names)))
            sd = thetas.std(axis=0, ddof=1) if len(members) > 1 else np.zeros(len(self.parameter_names))
            row = {"cluster": m, "size": len(members)}
            for k, name in enumerate(self.parameter_names):
                row[f"{name}_prior"] = float(self.priors[m, k])
                row[f"{name}_mean"] = float(thetas[:, k].mean()) if members else math.nan
                row[f"{name}_sd"] = float(sd[k])
                if self.bootstrap_se is not None:
                    row[f"{name}_bootstrap_se"] = float(self.bootstrap_se[m, k])
            rows.append(row)
        return rows

    def to_dict(self) -> dict:
        return {
            "parameter_names": list(self.parameter_names),
            "priors": self.priors.tolist(),
            "converged": self.converged,
            "iterations_run": self.iterations_run,
            "config": dict(self.config),
            "bootstrap_se": None if self.bootstrap_se is None else self.bootstrap_se.tolist(),
            "bootstrap_failures": self.bootstrap_failures,
            "agents": [p.to_dict() for p in self.agent_params.values()],
            "trace": [r.to_dict() for r in self.trace],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EstimationResult":
        agents = [AgentParameters.from_dict(a) for a in data["agents"]]
        se = data.get("bootstrap_se")
        return cls(
            parameter_names=list(data["parameter_names"]),
            priors=np.array(data["priors"], dtype=np.float64),
            agent_params={a.agent_id: a for a in agents},
            trace=[IterationRecord.from_dict(r) for r in data.get("trace", [])],
            converged=bool(data["converged"]),
            iterations_run=int(data["iterations_run"]),
            config=dict(data.get("config", {})),
            bootstrap_se=None if se is None else np.array(se, dtype=np.float64),
            bootstrap_failures=int(data.get("bootstrap_failures", 0)),
        )


def _json_float(value: float) -> Optional[float]:
    return None if value is None or not math.isfinite(value) else float(value)


def _float_or_nan(value) -> float:
    return math.nan if value is None else float(value)


def align_labels(centroids: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """
    Match new cluster labels to reference labels minimising total squared
    distance (Hungarian). :return: perm with perm[new_label] = reference_label
    """
    cost = ((centroids[:, None, :] - reference[None, :, :]) ** 2).sum(axis=2)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(centroids.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm


def _cluster_means(thetas: np.ndarray, labels: np.ndarray, order: np.ndarray, M: int):
    """Member means accumulated in `order` (agent-id order)."""
    K = thetas.shape[1]
    sums = np.zeros((M, K))
    counts = np.zeros(M, dtype=np.int64)
    for t in order:
        sums[labels[t]] += thetas[t]
        counts[labels[t]] += 1
    means = np.zeros((M, K))
    filled = counts > 0
    means[filled] = sums[filled] / counts[filled, None]
    return means, counts


def make_backend(cfg: EstimatorConfig) -> AgentSolverBackend:
    BackendCls = get_backend(cfg.backend)
    return BackendCls(cfg)


def estimate_glam(
    ds: Dataset,
    cfg: EstimatorConfig,
    backend: Optional[AgentSolverBackend] = None,
) -> EstimationResult:
    """
    Fixed-point estimation of agent-level taste parameters.

    Each iteration projects every agent's cluster prior onto its share
    constraints, re-clusters the agent parameters with k-means, and moves
    each prior towards its members' mean with successive averages. The
    first update replaces the zero initial prior, so convergence is first
    tested on the second iteration.

    :raises EstimationError: all agents infeasible, or fewer feasible
        agents than clusters
    """
    spec = ds.spec
    T, M, K = len(ds), cfg.M, spec.K
    if M > T:
        raise EstimationError(f"M={M} exceeds the number of agents ({T})")
    backend = backend if backend is not None else make_backend(cfg)

    designs = ds.design_tensor
    shares = ds.shares_matrix
    agent_ids = ds.agent_ids
    id_order = np.array(sorted(range(T), key=lambda t: agent_ids[t]), dtype=np.int64)

    rng = np.random.default_rng(cfg.seed)
    assign = rng.integers(M, size=T)
    priors = np.zeros((M, K))
    thetas = np.zeros((T, K))
    solutions: List[QPSolution] = []
    trace: List[IterationRecord] = []
    converged = False

    with Timer() as timer:
        for i in range(cfg.max_iterations):
            solutions = backend.solve_agents(
                spec, designs, shares, priors[assign], cfg.tol, cfg.max_tol_doublings, agent_ids
            )
            feasible = np.array([s.feasible for s in solutions])
            for t in np.flatnonzero(feasible):
                thetas[t] = solutions[t].theta

            F = np.flatnonzero(feasible)
            if F.size == 0:
                raise EstimationError("all agents are infeasible")
            if F.size < M:
                raise EstimationError(f"M={M} exceeds the number of feasible agents ({F.size})")

            km = kmeans_cluster(thetas[F], M, seed=cfg.seed + i, max_iter=cfg.kmeans_max_iter)
            perm = align_labels(km.centroids, priors)
            assign[F] = perm[km.labels]

            feasible_order = id_order[feasible[id_order]]
            y, counts = _cluster_means(thetas, assign, feasible_order, M)

            new_priors = priors.copy()
            for m in range(M):
                if counts[m] > 0:
                    new_priors[m] = msa_update(priors[m], y[m], i)
            change = relative_change(new_priors, priors, cfg.relative_change_floor)

            n_relaxed = sum(s.status == QPStatus.RELAXED for s in solutions)
            record = IterationRecord(
                iteration=i,
                priors=new_priors.copy(),
                cluster_sizes=np.bincount(assign, minlength=M).tolist(),
                mean_objective=float(np.mean([solutions[t].objective for t in F])),
                max_relative_change=change,
                n_infeasible=int(T - F.size),
                n_relaxed=int(n_relaxed),
            )
            trace.append(record)
            logger.info(
                f"Iteration {i}: clusters={record.cluster_sizes} "
                f"mean_obj={record.mean_objective:.6g} change={change:.4g} "
                f"infeasible={record.n_infeasible} relaxed={record.n_relaxed}"
            )
            priors = new_priors

            if i >= 1 and change < cfg.convergence_threshold:
                converged = True
                break

    iterations_run = len(trace)
    if converged:
        logger.info(f"Converged after {iterations_run} iterations ({timer.elapsed:.2f} s)")
    else:
        logger.warning(f"No convergence within {cfg.max_iterations} iterations ({timer.elapsed:.2f} s)")

    agent_params: Dict[str, AgentParameters] = {}
    for t, sol in enumerate(solutions):
        agent_params[agent_ids[t]] = AgentParameters(
            agent_id=agent_ids[t],
            theta=thetas[t].copy(),
            cluster=int(assign[t]),
            status=sol.status,
            tol_used=sol.tol_used,
            objective=sol.objective,
            kkt_residual=sol.kkt_residual,
            degenerate=sol.degenerate,
        )
    n_bad = sum(not p.feasible for p in agent_params.values())
    if n_bad:
        logger.warning(f"{n_bad} agents remain infeasible and are excluded from cluster means")

    return EstimationResult(
        parameter_names=list(spec.parameter_names),
        priors=priors,
        agent_params=agent_params,
        trace=trace,
        converged=converged,
        iterations_run=iterations_run,
        # backend and thread count do not affect the result
        config={k: v for k, v in cfg.to_dict().items() if k not in ("backend", "threads")},
    )
