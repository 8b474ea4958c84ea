"""Discrete optimal transport solvers.

sinkhorn_log runs alternating dual updates entirely in the log domain so
that small regularization values stay finite.  brute_force_ot is an exact
reference for tiny instances.  barycentric_map turns a plan into per-atom
targets by conditional averaging.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import kernels

# below this value convergence degrades and rounding bites; warn, don't stop
EPSILON_WARN_THRESHOLD = 0.005


@dataclass
class SinkhornConfig:
    epsilon: float
    max_iterations: int = 10_000
    tolerance: float = 1e-6
    warm_start: Optional[Tuple[np.ndarray, np.ndarray]] = None
    # anneal from a large regularization down to epsilon before the final
    # full-tolerance stage; cold small-epsilon solves converge orders of
    # magnitude faster this way and the fixed stage schedule stays
    # deterministic.  Ignored when a warm start is supplied.
    epsilon_scaling: bool = True

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class DiscreteOtSolution:
    u_hat: np.ndarray
    v_hat: np.ndarray
    plan: np.ndarray
    epsilon: float
    iterations_used: int
    marginal_error: float
    converged: bool

    @property
    def transport_cost(self) -> float:
        # set by sinkhorn_log; recomputable as (plan * cost).sum()
        return self._transport_cost


def _check_weights(w: np.ndarray, name: str) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError(f"{name} must be a non-empty vector")
    if np.any(w <= 0):
        raise ValueError(f"{name} must be strictly positive")
    if abs(w.sum() - 1.0) > 1e-8:
        raise ValueError(f"{name} must sum to 1")
    return w


def sinkhorn_log(cost: np.ndarray, a: np.ndarray, b: np.ndarray,
                 cfg: SinkhornConfig) -> DiscreteOtSolution:
    """Entropic OT between weighted atoms via log-domain dual iterations.

    Parameters
    ----------
    cost : (n, m) finite cost matrix.
    a, b : strictly positive weights summing to 1.
    cfg : SinkhornConfig with epsilon, stopping rule, optional warm start.

    Returns the potentials in cost units (u_i + v_j - c_ij is the exponent
    of the plan density), the plan itself, and convergence diagnostics.
    The potential gauge is fixed to mean(u_hat) = 0.  Iterations stop once
    the L1 deviation of the plan marginals from (a, b) is within tolerance.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    a = _check_weights(a, "a")
    b = _check_weights(b, "b")
    n, m = cost.shape
    if a.size != n or b.size != m:
        raise ValueError("weight lengths must match the cost matrix")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    if cfg.epsilon < EPSILON_WARN_THRESHOLD:
        warnings.warn(
            f"epsilon={cfg.epsilon} below {EPSILON_WARN_THRESHOLD}: "
            "expect slow convergence and rounding noise",
            RuntimeWarning,
        )
    if cfg.warm_start is not None:
        u = np.array(cfg.warm_start[0], dtype=np.float64).copy()
        v = np.array(cfg.warm_start[1], dtype=np.float64).copy()
        if u.size != n or v.size != m:
            raise ValueError("warm start lengths must match the weights")
    else:
        u = np.zeros(n)
        v = np.zeros(m)
    log_a = np.log(a)
    log_b = np.log(b)
    total_iters = 0
    if cfg.epsilon_scaling and cfg.warm_start is None:
        # at most half the budget on the annealing stages; each stage only
        # has to hand the next one a decent starting point
        reserve = cfg.max_iterations // 2
        stage_eps = float(cost.max()) / 8.0
        while stage_eps > cfg.epsilon and total_iters < reserve:
            it, _, _ = kernels.sinkhorn_loop(
                cost, log_a, log_b, stage_eps, u, v,
                min(1000, reserve - total_iters),
                max(1e-3, float(cfg.tolerance)))
            total_iters += it
            stage_eps /= 2.0
    iters, err, converged = kernels.sinkhorn_loop(
        cost, log_a, log_b, float(cfg.epsilon), u, v,
        int(cfg.max_iterations) - total_iters, float(cfg.tolerance))
    iters = total_iters + iters
    # mean-zero gauge on u; the shift cancels in every u_i + v_j sum
    shift = u.mean()
    u -= shift
    v += shift
    logp = (u[:, None] + v[None, :] - cost) / cfg.epsilon \
        + log_a[:, None] + log_b[None, :]
    plan = np.exp(logp)
    sol = DiscreteOtSolution(
        u_hat=u, v_hat=v, plan=plan, epsilon=cfg.epsilon,
        iterations_used=int(iters), marginal_error=float(err),
        converged=bool(converged))
    sol._transport_cost = float((plan * cost).sum())
    return sol


def _brute_force_permutations(cost: np.ndarray) -> Tuple[np.ndarray, float]:
    n = cost.shape[0]
    best_perm = None
    best = np.inf
    for perm in itertools.permutations(range(n)):
        s = 0.0
        for i, j in enumerate(perm):
            s += cost[i, j]
        # strict < keeps the lexicographically smallest minimizer
        if s < best:
            best = s
            best_perm = perm
    plan = np.zeros_like(cost)
    for i, j in enumerate(best_perm):
        plan[i, j] = 1.0 / n
    return plan, best / n


def _brute_force_vertices(cost: np.ndarray, a: np.ndarray,
                          b: np.ndarray) -> Tuple[np.ndarray, float]:
    # vertices of the transport polytope are supported on spanning trees
    # of the bipartite graph; enumerate all candidate supports
    n, m = cost.shape
    cells = [(i, j) for i in range(n) for j in range(m)]
    best_plan = None
    best = np.inf
    for support in itertools.combinations(cells, n + m - 1):
        flow = _solve_tree_flow(support, a, b, n, m)
        if flow is None:
            continue
        s = sum(f * cost[i, j] for (i, j), f in zip(support, flow))
        if s < best - 1e-15:
            best = s
            best_plan = (support, flow)
    plan = np.zeros_like(cost)
    for (i, j), f in zip(best_plan[0], best_plan[1]):
        plan[i, j] = f
    return plan, float(best)


def _solve_tree_flow(support, a, b, n, m):
    # peel leaves; each leaf node pins the flow on its unique edge
    remaining = {k: list() for k in range(n + m)}
    for e, (i, j) in enumerate(support):
        remaining[i].append(e)
        remaining[n + j].append(e)
    balance = np.concatenate([a, b]).astype(np.float64)
    flow = [None] * len(support)
    alive = set(range(len(support)))
    changed = True
    while alive and changed:
        changed = False
        for node, edges in remaining.items():
            live = [e for e in edges if e in alive]
            if len(live) == 1:
                e = live[0]
                i, j = support[e]
                f = balance[node]
                if f < -1e-12:
                    return None
                flow[e] = f
                other = n + j if node == i else i
                balance[other] -= f
                balance[node] = 0.0
                alive.discard(e)
                changed = True
    if alive:
        return None  # cycle: not a basic support
    if any(f is None or f < -1e-12 for f in flow):
        return None
    return [max(f, 0.0) for f in flow]


def brute_force_ot(cost: np.ndarray, a: np.ndarray,
                   b: np.ndarray) -> Tuple[np.ndarray, float]:
    """Exact minimizer of <plan, cost> over the transport polytope.

    Handles the uniform square case up to n = 8 by permutation search and
    general weights up to n*m <= 12 by basic-support enumeration.
    """
    cost = np.asarray(cost, dtype=np.float64)
    a = _check_weights(a, "a")
    b = _check_weights(b, "b")
    n, m = cost.shape
    uniform = (
        n == m
        and np.allclose(a, 1.0 / n, atol=1e-12)
        and np.allclose(b, 1.0 / n, atol=1e-12)
    )
    if uniform and n <= 8:
        return _brute_force_permutations(cost)
    if n * m <= 12:
        return _brute_force_vertices(cost, a, b)
    raise ValueError(
        f"instance too large for brute force: {n}x{m} "
        "(need uniform n=m<=8 or n*m<=12)")


def barycentric_map(plan: np.ndarray, a: np.ndarray,
                    y: np.ndarray) -> np.ndarray:
    """Conditional mean targets T(x_i) = sum_j plan[i,j] * y_j / a_i."""
    plan = np.asarray(plan, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(a <= 0):
        raise ValueError("source weights must be positive")
    if np.any(plan.sum(axis=1) == 0):
        raise ValueError("plan has an empty row")
    return (plan @ y) / a[:, None]
