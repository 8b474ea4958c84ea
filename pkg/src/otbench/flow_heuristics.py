"""Feature-matching flow losses and the gradient-descent map trainer.

Each loss compares a mapped batch TX against a target batch Y and comes
with its exact gradient in the mapped points.  The neighbor-based losses
hold the neighbor assignment fixed when differentiating, which yields a
subgradient of the piecewise-smooth objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from . import autodiff_nn, geometry, kernels
from .evaluation import SnapshotRecorder

DEFAULT_BUMP_SIGMA = 0.5


def default_bump_grid(side: int = 9, extent: float = 2.0) -> np.ndarray:
    """side x side grid of bump centers covering [-extent, extent]^2."""
    line = np.linspace(-extent, extent, side)
    gx, gy = np.meshgrid(line, line, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


@dataclass
class FlowLossKind:
    variant: str  # covariance | gaussian_bumps | discr | sym_discr
    k: int = 1
    sigma: float = DEFAULT_BUMP_SIGMA
    centers: Optional[np.ndarray] = None
    with_transport_cost: bool = False

    def __post_init__(self):
        if self.variant not in ("covariance", "gaussian_bumps", "discr",
                                "sym_discr"):
            raise ValueError(f"unknown flow loss {self.variant!r}")
        if self.variant == "gaussian_bumps":
            if self.centers is None:
                self.centers = default_bump_grid()
            self.centers = np.asarray(self.centers, dtype=np.float64)
            if self.centers.size == 0:
                raise ValueError("need at least one bump center")
            if self.sigma <= 0:
                raise ValueError("sigma must be positive")
        if self.variant in ("discr", "sym_discr") and self.k < 1:
            raise ValueError("k must be >= 1")


def _as_points(batch) -> np.ndarray:
    pts = batch.points if isinstance(batch, geometry.SampleBatch) else batch
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    if pts.shape[0] == 0:
        raise ValueError("empty batch in loss")
    return pts


# monomial features x0, x1, x0^2, x1^2, x0*x1

def covariance_loss_grad(tx, y) -> Tuple[float, np.ndarray]:
    tx = _as_points(tx)
    y = _as_points(y)
    n = tx.shape[0]

    def feats(p):
        return np.column_stack([p[:, 0], p[:, 1], p[:, 0] ** 2,
                                p[:, 1] ** 2, p[:, 0] * p[:, 1]])

    d = feats(tx).mean(axis=0) - feats(y).mean(axis=0)
    loss = float(d @ d)
    g0 = d[0] + 2.0 * d[2] * tx[:, 0] + d[4] * tx[:, 1]
    g1 = d[1] + 2.0 * d[3] * tx[:, 1] + d[4] * tx[:, 0]
    grad = (2.0 / n) * np.column_stack([g0, g1])
    return loss, grad


def covariance_loss(tx, y) -> float:
    return covariance_loss_grad(tx, y)[0]


def gaussian_bump_loss_grad(tx, y, centers, sigma) -> Tuple[float, np.ndarray]:
    tx = _as_points(tx)
    y = _as_points(y)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    n = tx.shape[0]
    inv = 1.0 / (sigma * sigma)
    f = np.exp(-kernels.pairwise_sqdist(tx, centers) * inv)
    g = np.exp(-kernels.pairwise_sqdist(y, centers) * inv)
    d = f.mean(axis=0) - g.mean(axis=0)
    loss = float(d @ d)
    w = f * d[None, :]
    grad = (-4.0 * inv / n) * (tx * w.sum(axis=1)[:, None] - w @ centers)
    return loss, grad


def gaussian_bump_loss(tx, y, centers, sigma) -> float:
    return gaussian_bump_loss_grad(tx, y, centers, sigma)[0]


def discrepancy_at_k_grad(tx, y, k) -> Tuple[float, np.ndarray]:
    tx = _as_points(tx)
    y = _as_points(y)
    if k > y.shape[0]:
        raise ValueError(f"k={k} exceeds target batch size {y.shape[0]}")
    n = tx.shape[0]
    dists, idx = kernels.knn(tx, y, k)
    loss = float(dists.sum() / n)
    vec = tx[:, None, :] - y[idx]
    safe = np.where(dists > 0.0, dists, 1.0)
    unit = vec / safe[:, :, None] * (dists > 0.0)[:, :, None]
    return loss, unit.sum(axis=1) / n


def discrepancy_at_k(tx, y, k) -> float:
    return discrepancy_at_k_grad(tx, y, k)[0]


def sym_discrepancy_at_k_grad(tx, y, k) -> Tuple[float, np.ndarray]:
    tx = _as_points(tx)
    y = _as_points(y)
    if k > min(tx.shape[0], y.shape[0]):
        raise ValueError(f"k={k} exceeds a batch size")
    loss, grad = discrepancy_at_k_grad(tx, y, k)
    m = y.shape[0]
    dists, idx = kernels.knn(y, tx, k)
    loss += float(dists.sum() / m)
    vec = tx[idx] - y[:, None, :]
    safe = np.where(dists > 0.0, dists, 1.0)
    unit = vec / safe[:, :, None] * (dists > 0.0)[:, :, None]
    np.add.at(grad, idx.ravel(), unit.reshape(-1, 2) / m)
    return loss, grad


def sym_discrepancy_at_k(tx, y, k) -> float:
    return sym_discrepancy_at_k_grad(tx, y, k)[0]


def _base_loss_grad(tx, y, kind: FlowLossKind):
    if kind.variant == "covariance":
        return covariance_loss_grad(tx, y)
    if kind.variant == "gaussian_bumps":
        return gaussian_bump_loss_grad(tx, y, kind.centers, kind.sigma)
    if kind.variant == "discr":
        return discrepancy_at_k_grad(tx, y, kind.k)
    return sym_discrepancy_at_k_grad(tx, y, kind.k)


def flow_loss(x, model: autodiff_nn.Mlp, y, kind: FlowLossKind):
    """Loss, parameter gradient, and the base/cost split for one batch."""
    x = _as_points(x)
    y = _as_points(y)
    tx, cache = model.forward(x, want_cache=True)
    base, dtx = _base_loss_grad(tx, y, kind)
    cost = 0.0
    if kind.with_transport_cost:
        n = x.shape[0]
        diff = tx - x
        cost = float(np.einsum("ij,ij->", diff, diff) / n)
        dtx = dtx + (2.0 / n) * diff
    pgrad, _ = model.backward(cache, dtx)
    parts = {"base_term": base, "cost_term": cost}
    return base + cost, pgrad, parts


def train_flow(kind: FlowLossKind, *, iterations: int, batch_x: int,
               batch_y: int, rng_init: np.random.Generator,
               rng_data: np.random.Generator, recorder: SnapshotRecorder,
               hidden_dims=(64, 64), activation: str = "tanh",
               optimizer: str = "adam", learning_rate: float = 1e-3,
               ) -> autodiff_nn.Mlp:
    """Stochastic gradient descent of the selected flow loss on fresh batches."""
    model = autodiff_nn.init_identity_map(hidden_dims, activation, rng_init)
    opt = autodiff_nn.OptimizerState(kind=optimizer,
                                     learning_rate=learning_rate)
    if iterations == 0 and recorder.due(0):
        recorder.record(0, model, {"loss": 0.0, "base_term": 0.0,
                                   "cost_term": 0.0})
    for t in range(1, iterations + 1):
        x = geometry.sample_unit_ball(batch_x, rng_data).points
        y = geometry.sample_four_balls(batch_y, rng_data).points
        loss, pgrad, parts = flow_loss(x, model, y, kind)
        if not np.isfinite(loss):
            raise FloatingPointError(
                f"non-finite flow loss at step {t} ({kind.variant})")
        autodiff_nn.optimizer_step(opt, model, pgrad,
                                   context=f"flow/{kind.variant}")
        if recorder.due(t):
            recorder.record(t, model, {"loss": loss, **parts})
    return model
