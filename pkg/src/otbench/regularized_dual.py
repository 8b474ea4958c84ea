"""Stochastic dual training for entropic and L2 regularized transport.

Potential networks u, v are trained to minimize the negated empirical dual
on fresh batches.  The penalty term can be aggregated as a mean over both
batch indices or as a double sum normalized by the source batch size only
("sum" is literally the mean-penalty scaled by the target batch size, so
the two losses satisfy an exact arithmetic relation on frozen inputs).

During dual training the evaluation snapshots score an implied map: the
density-weighted barycenter of a fixed reference target batch under the
current potentials.  A second stage fits an actual map network by
regressing each source point toward its density-weighted barycenter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import autodiff_nn, geometry, kernels
from .evaluation import SnapshotRecorder


@dataclass
class DualConfig:
    regularization: str  # "entropic" | "l2"
    epsilon: float = 0.1
    aggregation: str = "mean"  # "mean" | "sum"

    def __post_init__(self):
        if self.regularization not in ("entropic", "l2"):
            raise ValueError(f"unknown regularization {self.regularization!r}")
        if self.aggregation not in ("mean", "sum"):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def plan_density_entropic(u, v, c, epsilon: float):
    """exp((u + v - c) / epsilon), the entropic plan density."""
    return np.exp((np.asarray(u) + np.asarray(v) - np.asarray(c)) / epsilon)


def plan_density_l2(u, v, c, epsilon: float):
    """(u + v - c)_+ / (2 epsilon), the L2 plan density."""
    s = np.asarray(u) + np.asarray(v) - np.asarray(c)
    return np.maximum(s, 0.0) / (2.0 * epsilon)


def entropic_dual_parts(u_vals, v_vals, cost, epsilon: float):
    """(linear term, mean-aggregated penalty) of the entropic dual.

    The penalty is computed through nested log-sum-exp so that no raw
    exponential of the slack matrix is formed.
    """
    u = np.asarray(u_vals, dtype=np.float64).ravel()
    v = np.asarray(v_vals, dtype=np.float64).ravel()
    n, m = u.size, v.size
    e = (u[:, None] + v[None, :] - cost) / epsilon
    mx = e.max()
    total = np.log(np.exp(e - mx).sum()) + mx
    linear = u.mean() + v.mean()
    penalty = epsilon * np.exp(total - np.log(n * m))
    return linear, penalty


def entropic_dual_batch_loss(u_vals, v_vals, cost, epsilon: float,
                             aggregation: str = "mean",
                             want_grad: bool = False):
    """Negated empirical entropic dual (a quantity to minimize).

    With want_grad, also returns the exact gradients in the u and v values.
    """
    u = np.asarray(u_vals, dtype=np.float64).ravel()
    v = np.asarray(v_vals, dtype=np.float64).ravel()
    cost = np.asarray(cost, dtype=np.float64)
    n, m = u.size, v.size
    if cost.shape != (n, m):
        raise ValueError("cost shape mismatch")
    linear, penalty = entropic_dual_parts(u, v, cost, epsilon)
    scale = float(m) if aggregation == "sum" else 1.0
    loss = -linear + penalty * scale
    if np.isnan(loss):
        raise FloatingPointError("NaN in entropic dual loss")
    if not want_grad:
        return loss
    e = (u[:, None] + v[None, :] - cost) / epsilon
    rmax = e.max(axis=1, keepdims=True)
    row_lse = np.log(np.exp(e - rmax).sum(axis=1)) + rmax.ravel()
    cmax = e.max(axis=0, keepdims=True)
    col_lse = np.log(np.exp(e - cmax).sum(axis=0)) + cmax.ravel()
    lognm = np.log(n * m)
    du = -1.0 / n + scale * np.exp(row_lse - lognm)
    dv = -1.0 / m + scale * np.exp(col_lse - lognm)
    return loss, du, dv


def l2_dual_parts(u_vals, v_vals, cost, epsilon: float):
    u = np.asarray(u_vals, dtype=np.float64).ravel()
    v = np.asarray(v_vals, dtype=np.float64).ravel()
    s = np.maximum(u[:, None] + v[None, :] - cost, 0.0)
    linear = u.mean() + v.mean()
    penalty = (s * s).mean() / (4.0 * epsilon)
    return linear, penalty


def l2_dual_batch_loss(u_vals, v_vals, cost, epsilon: float,
                       aggregation: str = "mean", want_grad: bool = False):
    """Negated empirical L2-regularized dual."""
    u = np.asarray(u_vals, dtype=np.float64).ravel()
    v = np.asarray(v_vals, dtype=np.float64).ravel()
    cost = np.asarray(cost, dtype=np.float64)
    n, m = u.size, v.size
    if cost.shape != (n, m):
        raise ValueError("cost shape mismatch")
    linear, penalty = l2_dual_parts(u, v, cost, epsilon)
    scale = float(m) if aggregation == "sum" else 1.0
    loss = -linear + penalty * scale
    if np.isnan(loss):
        raise FloatingPointError("NaN in l2 dual loss")
    if not want_grad:
        return loss
    s = np.maximum(u[:, None] + v[None, :] - cost, 0.0)
    du = -1.0 / n + scale * s.sum(axis=1) / (2.0 * epsilon * n * m)
    dv = -1.0 / m + scale * s.sum(axis=0) / (2.0 * epsilon * n * m)
    return loss, du, dv


def dual_batch_loss(config: DualConfig, u_vals, v_vals, cost,
                    want_grad: bool = False):
    fn = entropic_dual_batch_loss if config.regularization == "entropic" \
        else l2_dual_batch_loss
    return fn(u_vals, v_vals, cost, config.epsilon, config.aggregation,
              want_grad)


def density_weights(u_vals, v_vals, cost, epsilon: float,
                    regularization: str) -> Tuple[np.ndarray, int]:
    """Row-normalized plan densities, plus the count of all-zero rows.

    Entropic rows are softmax-normalized (never zero).  L2 rows with no
    positive slack stay identically zero and are reported as skipped.
    """
    u = np.asarray(u_vals, dtype=np.float64).ravel()
    v = np.asarray(v_vals, dtype=np.float64).ravel()
    s = u[:, None] + v[None, :] - cost
    if regularization == "entropic":
        e = s / epsilon
        e -= e.max(axis=1, keepdims=True)
        w = np.exp(e)
        w /= w.sum(axis=1, keepdims=True)
        return w, 0
    rho = np.maximum(s, 0.0)
    rowsum = rho.sum(axis=1)
    zero = rowsum == 0.0
    safe = np.where(zero, 1.0, rowsum)
    w = rho / safe[:, None]
    return w, int(zero.sum())


def make_implied_map(u_model: autodiff_nn.Mlp, v_model: autodiff_nn.Mlp,
                     ref_y: np.ndarray, epsilon: float,
                     regularization: str) -> Callable[[np.ndarray], np.ndarray]:
    """Barycentric map induced by current potentials over fixed targets.

    L2 rows with zero density fall back to uniform weights over the
    reference batch (the global barycenter), keeping the map total.
    """
    ref_y = np.ascontiguousarray(ref_y, dtype=np.float64)
    v_ref = v_model.forward(ref_y).ravel()

    def fn(x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
        u = u_model.forward(x).ravel()
        cost = kernels.pairwise_sqdist(x, ref_y)
        w, skipped = density_weights(u, v_ref, cost, epsilon, regularization)
        if skipped:
            zero = w.sum(axis=1) == 0.0
            w[zero] = 1.0 / ref_y.shape[0]
        return w @ ref_y

    return fn


def train_dual(config: DualConfig, *, iterations: int, batch_x: int,
               batch_y: int, rng_init: np.random.Generator,
               rng_data: np.random.Generator,
               recorder: Optional[SnapshotRecorder] = None,
               ref_y: Optional[np.ndarray] = None,
               hidden_dims=(64, 64), activation: str = "tanh",
               optimizer: str = "adam", learning_rate: float = 1e-3,
               ) -> Tuple[autodiff_nn.Mlp, autodiff_nn.Mlp, List[float]]:
    """Joint stochastic minimization of the selected dual loss."""
    u_model = autodiff_nn.init_zero_potential(hidden_dims, activation,
                                              rng_init)
    v_model = autodiff_nn.init_zero_potential(hidden_dims, activation,
                                              rng_init)
    u_opt = autodiff_nn.OptimizerState(kind=optimizer,
                                       learning_rate=learning_rate)
    v_opt = autodiff_nn.OptimizerState(kind=optimizer,
                                       learning_rate=learning_rate)
    trace: List[float] = []
    if iterations == 0 and recorder is not None and recorder.due(0):
        fn = make_implied_map(u_model, v_model, ref_y, config.epsilon,
                              config.regularization)
        recorder.record(0, fn, {"dual_loss": 0.0})
    for t in range(1, iterations + 1):
        x = geometry.sample_unit_ball(batch_x, rng_data).points
        y = geometry.sample_four_balls(batch_y, rng_data).points
        cost = geometry.cost_matrix(x, y)
        u_vals, u_cache = u_model.forward(x, want_cache=True)
        v_vals, v_cache = v_model.forward(y, want_cache=True)
        loss, du, dv = dual_batch_loss(config, u_vals, v_vals, cost,
                                       want_grad=True)
        if not np.isfinite(loss):
            raise FloatingPointError(
                f"non-finite dual loss at step {t} "
                f"({config.regularization}/{config.aggregation})")
        ug, _ = u_model.backward(u_cache, du[:, None])
        vg, _ = v_model.backward(v_cache, dv[:, None])
        autodiff_nn.optimizer_step(u_opt, u_model, ug, context="dual/u")
        autodiff_nn.optimizer_step(v_opt, v_model, vg, context="dual/v")
        trace.append(loss)
        if recorder is not None and recorder.due(t):
            fn = make_implied_map(u_model, v_model, ref_y, config.epsilon,
                                  config.regularization)
            recorder.record(t, fn, {"dual_loss": loss})
    return u_model, v_model, trace


def barycenter_fit_step(tx, y, weights, active) -> Tuple[float, np.ndarray]:
    """Loss and gradient in tx for the density-weighted regression.

    weights rows must sum to 1 on active points and 0 elsewhere.
    """
    n = tx.shape[0]
    n_active = int(active.sum())
    if n_active == 0:
        return 0.0, np.zeros_like(tx)
    bary = weights @ y
    d2 = kernels.pairwise_sqdist(np.ascontiguousarray(tx),
                                 np.ascontiguousarray(y))
    per_point = (weights * d2).sum(axis=1)
    loss = float(per_point[active].sum() / n_active)
    grad = np.zeros_like(tx)
    grad[active] = (2.0 / n_active) * (tx[active] - bary[active])
    return loss, grad


def fit_map_from_potentials(u_model: autodiff_nn.Mlp,
                            v_model: autodiff_nn.Mlp,
                            config: DualConfig, *, iterations: int,
                            batch_x: int, batch_y: int,
                            rng_init: np.random.Generator,
                            rng_data: np.random.Generator,
                            hidden_dims=(64, 64), activation: str = "tanh",
                            optimizer: str = "adam",
                            learning_rate: float = 1e-3,
                            ) -> Tuple[autodiff_nn.Mlp, Dict[str, float]]:
    """Regress a map network onto density-weighted batch barycenters."""
    density_fn = lambda x, y, cost: density_weights(
        u_model.forward(x).ravel(), v_model.forward(y).ravel(), cost,
        config.epsilon, config.regularization)
    return fit_map_from_density(
        density_fn, iterations=iterations, batch_x=batch_x, batch_y=batch_y,
        rng_init=rng_init, rng_data=rng_data, hidden_dims=hidden_dims,
        activation=activation, optimizer=optimizer,
        learning_rate=learning_rate)


def fit_map_from_density(density_fn, *, iterations: int, batch_x: int,
                         batch_y: int, rng_init: np.random.Generator,
                         rng_data: np.random.Generator,
                         hidden_dims=(64, 64), activation: str = "tanh",
                         optimizer: str = "adam", learning_rate: float = 1e-3,
                         ) -> Tuple[autodiff_nn.Mlp, Dict[str, float]]:
    """Shared second stage: density_fn(x, y, cost) -> (weights, n_skipped)."""
    map_model = autodiff_nn.init_identity_map(hidden_dims, activation,
                                              rng_init)
    opt = autodiff_nn.OptimizerState(kind=optimizer,
                                     learning_rate=learning_rate)
    skipped_total = 0
    last_loss = 0.0
    for t in range(1, iterations + 1):
        x = geometry.sample_unit_ball(batch_x, rng_data).points
        y = geometry.sample_four_balls(batch_y, rng_data).points
        cost = geometry.cost_matrix(x, y)
        weights, skipped = density_fn(x, y, cost)
        skipped_total += skipped
        active = weights.sum(axis=1) > 0.0
        tx, cache = map_model.forward(x, want_cache=True)
        loss, dtx = barycenter_fit_step(tx, y, weights, active)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite map-fit loss at step {t}")
        pgrad, _ = map_model.backward(cache, dtx)
        autodiff_nn.optimizer_step(opt, map_model, pgrad, context="map-fit")
        last_loss = loss
    stats = {"skipped_points": float(skipped_total),
             "final_fit_loss": float(last_loss)}
    return map_model, stats
