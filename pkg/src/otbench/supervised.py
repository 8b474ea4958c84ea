"""Supervised reduction: per-batch discrete solutions become labels.

Each outer step draws fresh batches, solves them with the discrete solver,
derives labels for the selected target kind (potential values, barycentric
map images, or rescaled plan entries), and runs a fixed number of inner
fitting iterations against those frozen labels.  The global step count is
outer * inner, which is what the snapshot schedule indexes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from . import autodiff_nn, discrete_solvers, geometry
from .evaluation import SnapshotRecorder
from .regularized_dual import density_weights, make_implied_map


@dataclass
class SupervisedTarget:
    kind: str  # "dual" | "map" | "plan"
    epsilon: float = 0.05
    inner_iterations: int = 100
    dual_loss_form: str = "abs"  # "abs" | "squared"
    warm_start: bool = True
    sinkhorn_max_iterations: int = 10_000
    sinkhorn_tolerance: float = 1e-6

    def __post_init__(self):
        if self.kind not in ("dual", "map", "plan"):
            raise ValueError(f"unknown supervised target {self.kind!r}")
        if self.epsilon < 0.005:
            raise ValueError("epsilon below the supported range")
        if self.inner_iterations < 1:
            raise ValueError("inner_iterations must be >= 1")
        if self.dual_loss_form not in ("abs", "squared"):
            raise ValueError(f"unknown loss form {self.dual_loss_form!r}")


def normalize_potentials(u_hat: np.ndarray,
                         v_hat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Shift to the mean-zero-u gauge; every pairwise sum is preserved."""
    u_hat = np.asarray(u_hat, dtype=np.float64)
    v_hat = np.asarray(v_hat, dtype=np.float64)
    c = u_hat.mean()
    return u_hat - c, v_hat + c


def supervised_dual_loss(pred_u, pred_v, u_norm, v_norm, form: str = "abs",
                         want_grad: bool = False):
    """Sum of per-point label errors on both potentials."""
    ru = np.asarray(pred_u, dtype=np.float64).ravel() - u_norm
    rv = np.asarray(pred_v, dtype=np.float64).ravel() - v_norm
    if form == "abs":
        loss = float(np.abs(ru).sum() + np.abs(rv).sum())
        if not want_grad:
            return loss
        return loss, np.sign(ru), np.sign(rv)
    loss = float(ru @ ru + rv @ rv)
    if not want_grad:
        return loss
    return loss, 2.0 * ru, 2.0 * rv


def supervised_map_loss(tx, targets, want_grad: bool = False):
    """Mean squared deviation from the barycentric label images."""
    tx = np.asarray(tx, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = tx.shape[0]
    diff = tx - targets
    loss = float(np.einsum("ij,ij->", diff, diff) / n)
    if not want_grad:
        return loss
    return loss, (2.0 / n) * diff


def supervised_plan_loss(pred, plan_hat, want_grad: bool = False):
    """Regression of pair scores against plan entries rescaled by bx*by.

    The rescaling sends the product plan to the constant 1, so labels stay
    O(1) regardless of batch size.
    """
    plan_hat = np.asarray(plan_hat, dtype=np.float64)
    n, m = plan_hat.shape
    pred = np.asarray(pred, dtype=np.float64).reshape(n, m)
    labels = (n * m) * plan_hat
    diff = pred - labels
    loss = float(np.einsum("ij,ij->", diff, diff) / (n * m))
    if not want_grad:
        return loss
    return loss, (2.0 / (n * m)) * diff


def warm_start_from_networks(u_model: autodiff_nn.Mlp,
                             v_model: autodiff_nn.Mlp, x: np.ndarray,
                             y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Network predictions as initial dual vectors for the discrete solver."""
    return u_model.forward(x).ravel(), v_model.forward(y).ravel()


def init_unit_plan(hidden_dims=(64, 64), activation: str = "tanh",
                   rng=None) -> autodiff_nn.Mlp:
    """Pair-scoring network that outputs exactly 1 at initialization."""
    model = autodiff_nn.make_mlp([4, *hidden_dims, 1], activation, rng,
                                 zero_final=True)
    model.params[-1] = 1.0  # final bias; final weights stay zero
    return model


def plan_pairs(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """(n*m, 4) array of concatenated (x_i, y_j) pairs, row-major in i."""
    n, m = x.shape[0], y.shape[0]
    return np.hstack([np.repeat(x, m, axis=0), np.tile(y, (n, 1))])


def make_plan_implied_map(plan_model: autodiff_nn.Mlp, ref_y: np.ndarray):
    """Barycentric map from positive-part plan-network scores.

    Rows with no positive score fall back to uniform weights.
    """
    ref_y = np.asarray(ref_y, dtype=np.float64)

    def fn(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        n, m = x.shape[0], ref_y.shape[0]
        scores = plan_model.forward(plan_pairs(x, ref_y)).reshape(n, m)
        rho = np.maximum(scores, 0.0)
        rowsum = rho.sum(axis=1)
        zero = rowsum == 0.0
        w = rho / np.where(zero, 1.0, rowsum)[:, None]
        w[zero] = 1.0 / m
        return w @ ref_y

    return fn


def plan_density_fn(plan_model: autodiff_nn.Mlp):
    """density_fn(x, y, cost) adapter for the map-fitting stage."""

    def fn(x, y, cost):
        n, m = x.shape[0], y.shape[0]
        scores = plan_model.forward(plan_pairs(x, y)).reshape(n, m)
        rho = np.maximum(scores, 0.0)
        rowsum = rho.sum(axis=1)
        zero = rowsum == 0.0
        w = rho / np.where(zero, 1.0, rowsum)[:, None]
        w[zero] = 0.0
        return w, int(zero.sum())

    return fn


def train_supervised(target: SupervisedTarget, *, outer_steps: int,
                     batch_x: int, batch_y: int,
                     rng_init: np.random.Generator,
                     rng_data: np.random.Generator,
                     recorder: Optional[SnapshotRecorder] = None,
                     ref_y: Optional[np.ndarray] = None,
                     hidden_dims=(64, 64), activation: str = "tanh",
                     optimizer: str = "adam", learning_rate: float = 1e-3,
                     ) -> Dict[str, object]:
    """Outer label-generation loop with inner fitting iterations."""
    inner = target.inner_iterations
    models: Dict[str, object] = {}
    if target.kind == "dual":
        models["u_model"] = autodiff_nn.init_zero_potential(
            hidden_dims, activation, rng_init)
        models["v_model"] = autodiff_nn.init_zero_potential(
            hidden_dims, activation, rng_init)
        opts = [autodiff_nn.OptimizerState(kind=optimizer,
                                           learning_rate=learning_rate)
                for _ in range(2)]
    elif target.kind == "map":
        models["map_model"] = autodiff_nn.init_identity_map(
            hidden_dims, activation, rng_init)
        opts = [autodiff_nn.OptimizerState(kind=optimizer,
                                           learning_rate=learning_rate)]
    else:
        models["plan_model"] = init_unit_plan(hidden_dims, activation,
                                              rng_init)
        opts = [autodiff_nn.OptimizerState(kind=optimizer,
                                           learning_rate=learning_rate)]

    def snapshot_map_fn():
        if target.kind == "map":
            return models["map_model"]
        if target.kind == "dual":
            return make_implied_map(models["u_model"], models["v_model"],
                                    ref_y, target.epsilon, "entropic")
        return make_plan_implied_map(models["plan_model"], ref_y)

    skipped = 0
    sinkhorn_iters_total = 0
    step = 0
    a = np.full(batch_x, 1.0 / batch_x)
    b = np.full(batch_y, 1.0 / batch_y)
    if outer_steps == 0 and recorder is not None and recorder.due(0):
        recorder.record(0, snapshot_map_fn(), {"label_loss": 0.0,
                                               "sinkhorn_iters": 0.0})
    for _ in range(outer_steps):
        x = geometry.sample_unit_ball(batch_x, rng_data).points
        y = geometry.sample_four_balls(batch_y, rng_data).points
        cost = geometry.cost_matrix(x, y)
        warm = None
        if target.kind == "dual" and target.warm_start:
            warm = warm_start_from_networks(models["u_model"],
                                            models["v_model"], x, y)
        sol = discrete_solvers.sinkhorn_log(
            cost, a, b,
            discrete_solvers.SinkhornConfig(
                epsilon=target.epsilon,
                max_iterations=target.sinkhorn_max_iterations,
                tolerance=target.sinkhorn_tolerance,
                warm_start=warm))
        sinkhorn_iters_total += sol.iterations_used
        if not sol.converged:
            # burn this batch's step slots so the schedule stays aligned
            skipped += 1
            for _ in range(inner):
                step += 1
                if recorder is not None and recorder.due(step):
                    recorder.record(step, snapshot_map_fn(),
                                    {"label_loss": float("nan"),
                                     "sinkhorn_iters": float(sol.iterations_used)})
            continue
        if target.kind == "dual":
            u_norm, v_norm = normalize_potentials(sol.u_hat, sol.v_hat)
        elif target.kind == "map":
            targets = discrete_solvers.barycentric_map(sol.plan, a, y)
        else:
            pairs = plan_pairs(x, y)
        for _ in range(inner):
            step += 1
            if target.kind == "dual":
                pu, cu = models["u_model"].forward(x, want_cache=True)
                pv, cv = models["v_model"].forward(y, want_cache=True)
                loss, du, dv = supervised_dual_loss(
                    pu, pv, u_norm, v_norm, target.dual_loss_form,
                    want_grad=True)
                gu, _ = models["u_model"].backward(cu, du[:, None])
                gv, _ = models["v_model"].backward(cv, dv[:, None])
                autodiff_nn.optimizer_step(opts[0], models["u_model"], gu,
                                           context="supervised/u")
                autodiff_nn.optimizer_step(opts[1], models["v_model"], gv,
                                           context="supervised/v")
            elif target.kind == "map":
                tx, cache = models["map_model"].forward(x, want_cache=True)
                loss, dtx = supervised_map_loss(tx, targets, want_grad=True)
                pg, _ = models["map_model"].backward(cache, dtx)
                autodiff_nn.optimizer_step(opts[0], models["map_model"], pg,
                                           context="supervised/map")
            else:
                pred, cache = models["plan_model"].forward(pairs,
                                                           want_cache=True)
                loss, dpred = supervised_plan_loss(pred, sol.plan,
                                                   want_grad=True)
                pg, _ = models["plan_model"].backward(
                    cache, dpred.reshape(-1, 1))
                autodiff_nn.optimizer_step(opts[0], models["plan_model"], pg,
                                           context="supervised/plan")
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite supervised loss at step {step}")
            if recorder is not None and recorder.due(step):
                recorder.record(step, snapshot_map_fn(),
                                {"label_loss": loss,
                                 "sinkhorn_iters": float(sol.iterations_used)})
    models["skipped_batches"] = skipped
    models["sinkhorn_iters_total"] = sinkhorn_iters_total
    return models
