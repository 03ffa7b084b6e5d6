from __future__ import annotations

import math
from typing import Dict, Optional, Sequence, Tuple

import cvxpy as cp
import numpy as np
from cvxpy.error import SolverError
from scipy.optimize import nnls

from agent_logit.io.logging_utils import logger
from agent_logit.model.market import MarketObservation
from agent_logit.model.spec import ModelSpec
from agent_logit.qp.subproblem import QPSolution, QPStatus, QPSubproblem, build_qp


FEASIBILITY_TOL = 1e-10
KKT_TOL = 1e-6
# residuals up to here are kept with a warning, above it the agent is infeasible
KKT_ACCEPT = 1e-4
# relative slack under which a constraint counts as active
ACTIVE_TOL = 1e-7

CLARABEL_OPTIONS = {"tol_gap_abs": 1e-9, "tol_gap_rel": 1e-9, "tol_feas": 1e-9, "max_iter": 200}

# row kinds of the expanded system C @ x >= b
_PAIR = 0
_BOUND = 1


class _ProjectionProblem:
    """
    Parametrised projection for a fixed number of pair rows and a fixed
    pattern of finite bounds. Compiled once per process and re-solved with
    new parameter values for every agent.
    """

    def __init__(self, n_rows: int, K: int, lb_idx: Tuple[int, ...], ub_idx: Tuple[int, ...]):
        self.lb_idx = list(lb_idx)
        self.ub_idx = list(ub_idx)
        self.theta = cp.Variable(K)
        self.prior = cp.Parameter(K)
        self.A = cp.Parameter((n_rows, K))
        self.lower = cp.Parameter(n_rows)
        self.upper = cp.Parameter(n_rows)

        Ax = self.A @ self.theta
        constraints = [Ax >= self.lower, Ax <= self.upper]
        if self.lb_idx:
            self.lb = cp.Parameter(len(self.lb_idx))
            constraints.append(self.theta[self.lb_idx] >= self.lb)
        if self.ub_idx:
            self.ub = cp.Parameter(len(self.ub_idx))
            constraints.append(self.theta[self.ub_idx] <= self.ub)
        self.problem = cp.Problem(cp.Minimize(cp.sum_squares(self.theta - self.prior)), constraints)

    def solve(self, p: QPSubproblem) -> Tuple[Optional[np.ndarray], str, int]:
        self.prior.value = p.prior
        self.A.value = p.A
        self.lower.value = p.lower
        self.upper.value = p.upper
        if self.lb_idx:
            self.lb.value = p.lb[self.lb_idx]
        if self.ub_idx:
            self.ub.value = p.ub[self.ub_idx]
        try:
            self.problem.solve(solver=cp.CLARABEL, **CLARABEL_OPTIONS)
        except SolverError as exc:
            logger.debug(f"Clarabel failed for agent '{p.agent_id}': {exc}")
            return None, "solver_error", 0

        stats = self.problem.solver_stats
        iterations = int(stats.num_iters) if stats is not None and stats.num_iters is not None else 0
        x = self.theta.value
        return (None if x is None else np.asarray(x, dtype=np.float64)), self.problem.status, iterations


_PROBLEMS: Dict[Tuple[int, int, Tuple[int, ...], Tuple[int, ...]], _ProjectionProblem] = {}


def _problem_for(p: QPSubproblem) -> _ProjectionProblem:
    lb_idx = tuple(int(k) for k in np.flatnonzero(np.isfinite(p.lb)))
    ub_idx = tuple(int(k) for k in np.flatnonzero(np.isfinite(p.ub)))
    key = (p.n_rows, p.prior.size, lb_idx, ub_idx)
    if key not in _PROBLEMS:
        _PROBLEMS[key] = _ProjectionProblem(p.n_rows, p.prior.size, lb_idx, ub_idx)
    return _PROBLEMS[key]


def _solve_cvxpy(p: QPSubproblem) -> Tuple[Optional[np.ndarray], str, int]:
    """:return: (theta or None, cvxpy status string, solver iterations)"""
    return _problem_for(p).solve(p)


def _expand(p: QPSubproblem) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Rewrite two-sided rows and finite bounds as C @ x >= b.
    :return: C, b, kind, source index, sign (+1 lower side, -1 upper side)
    """
    K = p.prior.size
    rows, rhs, kind, src, sign = [], [], [], [], []
    for r in range(p.n_rows):
        for a, bound, sgn in ((p.A[r], p.lower[r], 1.0), (-p.A[r], -p.upper[r], -1.0)):
            if math.isfinite(bound):
                rows.append(a); rhs.append(bound); kind.append(_PAIR); src.append(r); sign.append(sgn)

    eye = np.eye(K)
    for k in range(K):
        if math.isfinite(p.lb[k]):
            rows.append(eye[k]); rhs.append(p.lb[k]); kind.append(_BOUND); src.append(k); sign.append(1.0)
        if math.isfinite(p.ub[k]):
            rows.append(-eye[k]); rhs.append(-p.ub[k]); kind.append(_BOUND); src.append(k); sign.append(-1.0)

    C = np.array(rows, dtype=np.float64).reshape(len(rows), K)
    return C, np.array(rhs, dtype=np.float64), np.array(kind, dtype=int), np.array(src, dtype=int), np.array(sign)


def _active(C: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    if not b.size:
        return np.zeros(0, dtype=int)
    return np.flatnonzero(C @ x - b <= ACTIVE_TOL * (1.0 + np.abs(b)))


def _certify(p: QPSubproblem, C: np.ndarray, b: np.ndarray, x: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    KKT residual of x as the projection of p.prior: multipliers of the
    active rows from non-negative least squares on x - prior = C_a' lam.

    :return: (residual, multipliers over the rows of C)
    """
    lam = np.zeros(b.size)
    active = _active(C, b, x)
    if active.size:
        lam[active], _ = nnls(C[active].T, x - p.prior)
    stationarity = x - p.prior - (C.T @ lam if b.size else 0.0)
    slack = C @ x - b if b.size else np.zeros(0)
    kkt = max(
        float(np.max(np.abs(stationarity))) if x.size else 0.0,
        float(np.max(np.abs(lam * slack))) if b.size else 0.0,
        float(np.max(np.maximum(-slack, 0.0))) if b.size else 0.0,
    )
    return kkt, lam


def _polish(p: QPSubproblem, C: np.ndarray, b: np.ndarray, x: np.ndarray) -> Optional[np.ndarray]:
    """Exact projection onto the affine hull of the active rows, if it stays feasible."""
    active = _active(C, b, x)
    if not active.size:
        return None
    N = C[active]
    x_pol = p.prior - np.linalg.pinv(N) @ (N @ p.prior - b[active])
    if np.min(C @ x_pol - b) < -FEASIBILITY_TOL:
        return None
    return x_pol


def _infeasible(p: QPSubproblem, iterations: int, kkt: float = math.nan) -> QPSolution:
    return QPSolution(
        theta=p.prior.copy(),
        objective=math.nan,
        kkt_residual=kkt,
        active_set=(),
        status=QPStatus.INFEASIBLE,
        tol_used=p.tol_used,
        degenerate=p.degenerate,
        iterations=iterations,
        agent_id=p.agent_id,
    )


def _finish(
    p: QPSubproblem,
    C: np.ndarray,
    b: np.ndarray,
    kind: np.ndarray,
    src: np.ndarray,
    sign: np.ndarray,
    x: np.ndarray,
    iterations: int,
) -> QPSolution:
    kkt, lam = _certify(p, C, b, x)
    if kkt > KKT_ACCEPT:
        logger.warning(f"Agent '{p.agent_id}': projection failed KKT certification (residual {kkt:.3e}), marked infeasible")
        return _infeasible(p, iterations, kkt)
    if kkt > KKT_TOL:
        logger.warning(f"Agent '{p.agent_id}': projection certified loosely (residual {kkt:.3e})")

    pair_rows = kind == _PAIR
    multipliers = np.zeros(p.n_rows)
    np.add.at(multipliers, src[pair_rows], (sign * lam)[pair_rows])
    active_rows = tuple(sorted({int(src[i]) for i in _active(C, b, x) if kind[i] == _PAIR}))

    diff = x - p.prior
    return QPSolution(
        theta=x,
        objective=float(diff @ diff),
        kkt_residual=kkt,
        active_set=active_rows,
        status=QPStatus.OPTIMAL,
        tol_used=p.tol_used,
        degenerate=p.degenerate,
        iterations=iterations,
        agent_id=p.agent_id,
        multipliers=multipliers,
    )


def solve_projection_qp(p: QPSubproblem) -> QPSolution:
    """
    Euclidean projection of p.prior onto the polyhedron of p.

    A prior that already satisfies every row is returned unchanged and a
    box-only problem is clipped. Everything else goes to Clarabel through
    a cached cvxpy problem; the solver point is polished onto its active
    rows and certified through the KKT residual.

    Never raises: solver failures, infeasibility and failed certification
    all come back with status "infeasible" and theta equal to the prior.
    """
    C, b, kind, src, sign = _expand(p)
    finish = lambda x, it: _finish(p, C, b, kind, src, sign, x, it)  # noqa: E731

    if not b.size or np.min(C @ p.prior - b) >= -FEASIBILITY_TOL:
        return finish(p.prior.copy(), 0)
    if p.degenerate:
        if np.any(p.lb > p.ub):
            return _infeasible(p, 0)
        return finish(np.clip(p.prior, p.lb, p.ub), 0)

    x, status, iterations = _solve_cvxpy(p)
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        logger.debug(f"QP for agent '{p.agent_id}' is infeasible")
        return _infeasible(p, iterations)
    if x is None or status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        logger.warning(f"Agent '{p.agent_id}': solver returned status '{status}', marked infeasible")
        return _infeasible(p, iterations)

    candidates = [x]
    polished = _polish(p, C, b, x)
    if polished is not None:
        candidates.insert(0, polished)
    scored = [(_certify(p, C, b, c)[0], i) for i, c in enumerate(candidates)]
    _, best = min(scored)
    return finish(candidates[best], iterations)


def relax_design(
    design: np.ndarray,
    shares: np.ndarray,
    spec: ModelSpec,
    prior: np.ndarray,
    tol: float,
    max_doublings: int,
    agent_id: str = "",
) -> QPSolution:
    """Tolerance relaxation on a precomputed (J, K) design; see relax_tolerance."""
    if max_doublings < 0:
        raise ValueError(f"max_doublings must be >= 0, got {max_doublings}")

    sol = None
    for d in range(max_doublings + 1):
        tol_d = tol * 2.0 ** d
        sol = solve_projection_qp(build_qp(design, shares, spec, prior, tol_d, agent_id=agent_id))
        if sol.feasible:
            if d > 0:
                sol.status = QPStatus.RELAXED
                logger.warning(f"Agent '{agent_id}': QP infeasible at tol={tol}, relaxed to tol={tol_d}")
            return sol

    logger.warning(f"Agent '{agent_id}': QP infeasible up to tol={sol.tol_used}")
    return sol


def relax_tolerance(
    obs: MarketObservation,
    spec: ModelSpec,
    prior: np.ndarray,
    tol: float,
    max_doublings: int,
    attribute_columns: Optional[Sequence[str]] = None,
) -> QPSolution:
    """
    Solve at `tol`; on infeasibility double it up to `max_doublings` times.
    The first feasible solve is returned with status "relaxed" (or
    "optimal" when no doubling was needed); otherwise status "infeasible".
    """
    columns = spec.attribute_columns if attribute_columns is None else attribute_columns
    design = spec.design_rows(obs.attributes, columns)
    return relax_design(design, obs.shares, spec, prior, tol, max_doublings, agent_id=obs.agent_id)
