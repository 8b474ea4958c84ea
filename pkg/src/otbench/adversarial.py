"""Min-max training: transport cost plus a critic-sized penalty.

The map network descends mean c(X, TX) + lambda * [mean f(TX) - mean f(Y)]
while the critic f ascends the bracketed penalty.  Per outer iteration the
critic takes a configured number of ascent steps (each on fresh batches),
then the map takes one descent step.  Gradient clipping, when enabled,
applies element-wise to the critic gradient only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import autodiff_nn, geometry
from .evaluation import SnapshotRecorder


@dataclass
class AdversarialConfig:
    lam: float = 1.0
    critic_steps_per_map_step: int = 1
    clip_threshold: Optional[float] = None

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.critic_steps_per_map_step < 1:
            raise ValueError("need at least one critic step")


def adversarial_objective(x, y, map_model: autodiff_nn.Mlp,
                          critic_model: autodiff_nn.Mlp,
                          lam: float) -> Tuple[float, float]:
    """Evaluate (map_loss, critic_value) on frozen networks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    tx = map_model.forward(x)
    fx = critic_model.forward(tx).ravel()
    fy = critic_model.forward(y).ravel()
    penalty = float(fx.mean() - fy.mean())
    diff = tx - x
    cost = float(np.einsum("ij,ij->", diff, diff) / x.shape[0])
    return cost + lam * penalty, penalty


def _critic_ascent(critic, critic_opt, map_model, x, y, lam):
    tx = map_model.forward(x)
    fx, cache_x = critic.forward(tx, want_cache=True)
    fy, cache_y = critic.forward(y, want_cache=True)
    bx, by = x.shape[0], y.shape[0]
    gx, _ = critic.backward(cache_x, np.full((bx, 1), 1.0 / bx))
    gy, _ = critic.backward(cache_y, np.full((by, 1), 1.0 / by))
    # minimize the negated penalty = ascend it
    autodiff_nn.optimizer_step(critic_opt, critic, -lam * (gx - gy),
                               context="adversarial/critic")


def _map_descent(map_model, map_opt, critic, x, y, lam):
    bx, by = x.shape[0], y.shape[0]
    tx, map_cache = map_model.forward(x, want_cache=True)
    fx, critic_cache = critic.forward(tx, want_cache=True)
    fy = critic.forward(y)
    penalty = float(fx.mean() - fy.mean())
    diff = tx - x
    cost = float(np.einsum("ij,ij->", diff, diff) / bx)
    _, dtx_critic = critic.backward(critic_cache, np.full((bx, 1), 1.0 / bx))
    dtx = (2.0 / bx) * diff + lam * dtx_critic
    pgrad, _ = map_model.backward(map_cache, dtx)
    autodiff_nn.optimizer_step(map_opt, map_model, pgrad,
                               context="adversarial/map")
    return cost, penalty


def train_adversarial(config: AdversarialConfig, *, iterations: int,
                      batch_x: int, batch_y: int,
                      rng_init: np.random.Generator,
                      rng_data: np.random.Generator,
                      recorder: SnapshotRecorder,
                      hidden_dims=(64, 64), activation: str = "tanh",
                      optimizer: str = "adam", learning_rate: float = 1e-3,
                      ) -> Tuple[autodiff_nn.Mlp, autodiff_nn.Mlp]:
    map_model = autodiff_nn.init_identity_map(hidden_dims, activation,
                                              rng_init)
    critic = autodiff_nn.init_zero_potential(hidden_dims, activation,
                                             rng_init)
    map_opt = autodiff_nn.OptimizerState(kind=optimizer,
                                         learning_rate=learning_rate)
    critic_opt = autodiff_nn.OptimizerState(
        kind=optimizer, learning_rate=learning_rate,
        clip_threshold=config.clip_threshold)
    if iterations == 0 and recorder.due(0):
        recorder.record(0, map_model, {"map_loss": 0.0, "cost_term": 0.0,
                                       "adv_term": 0.0})
    for t in range(1, iterations + 1):
        for _ in range(config.critic_steps_per_map_step):
            x = geometry.sample_unit_ball(batch_x, rng_data).points
            y = geometry.sample_four_balls(batch_y, rng_data).points
            _critic_ascent(critic, critic_opt, map_model, x, y, config.lam)
        x = geometry.sample_unit_ball(batch_x, rng_data).points
        y = geometry.sample_four_balls(batch_y, rng_data).points
        cost, penalty = _map_descent(map_model, map_opt, critic, x, y,
                                     config.lam)
        map_loss = cost + config.lam * penalty
        if not np.isfinite(map_loss):
            raise FloatingPointError(f"non-finite adversarial loss at step {t}")
        if recorder.due(t):
            recorder.record(t, map_model, {"map_loss": map_loss,
                                           "cost_term": cost,
                                           "adv_term": penalty})
    return map_model, critic
