"""Small fully connected networks with hand-rolled reverse-mode gradients.

Parameters live in one flat float64 vector (per layer: weight matrix in
row-major order, then bias).  The final layer is always linear.  Two factory
initializations are provided: identity maps (skip connection plus a zeroed
final layer) and zero potentials (zeroed final layer, scalar output).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import json

import numpy as np

CHECKPOINT_VERSION = 1

_ACTIVATIONS = ("tanh", "relu", "softplus")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "softplus":
        return np.logaddexp(0.0, z)
    raise ValueError(f"unknown activation {name!r}")


def _act_prime(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "softplus":
        # sigmoid, written via tanh for overflow safety
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    raise ValueError(f"unknown activation {name!r}")


class Mlp:
    """Feed-forward network over a flat parameter vector.

    layer_dims is the full width list (input, hidden..., output).  When
    skip_connection is set the network computes x + residual(x), which
    requires matching input and output widths.
    """

    def __init__(self, layer_dims, activation: str = "tanh",
                 skip_connection: bool = False,
                 params: Optional[np.ndarray] = None):
        self.layer_dims = [int(d) for d in layer_dims]
        if len(self.layer_dims) < 2:
            raise ValueError("need at least input and output dims")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation
        self.skip_connection = bool(skip_connection)
        if self.skip_connection and self.layer_dims[0] != self.layer_dims[-1]:
            raise ValueError("skip connection needs input dim = output dim")
        self._slices = []
        off = 0
        for din, dout in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            wsl = slice(off, off + din * dout)
            off += din * dout
            bsl = slice(off, off + dout)
            off += dout
            self._slices.append((wsl, bsl, din, dout))
        self.n_params = off
        if params is None:
            self.params = np.zeros(off)
        else:
            params = np.asarray(params, dtype=np.float64).ravel()
            if params.size != off:
                raise ValueError(
                    f"params length {params.size} != expected {off}")
            self.params = params.copy()

    def _weights(self, k: int):
        wsl, bsl, din, dout = self._slices[k]
        return self.params[wsl].reshape(din, dout), self.params[bsl]

    def forward(self, x: np.ndarray, want_cache: bool = False):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.layer_dims[0]:
            raise ValueError(
                f"input dim {x.shape[1]} != {self.layer_dims[0]}")
        a = x
        zs = []
        acts = [x]
        last = len(self._slices) - 1
        for k in range(len(self._slices)):
            w, b = self._weights(k)
            z = a @ w + b
            if k < last:
                a = _act(self.activation, z)
                zs.append(z)
                acts.append(a)
            else:
                a = z
        out = x + a if self.skip_connection else a
        if single:
            out = out[0]
        if want_cache:
            return out, (x, acts, zs)
        return out

    def backward(self, cache, grad_out: np.ndarray):
        """Gradient of sum_i loss_i given d loss / d output rows.

        Returns (param_grad, input_grad); param_grad aligns with params.
        """
        if cache is None:
            raise ValueError("backward needs the cache from forward")
        x, acts, zs = cache
        g = np.asarray(grad_out, dtype=np.float64)
        if g.ndim == 1:
            g = g[None, :]
        if g.shape != (x.shape[0], self.layer_dims[-1]):
            raise ValueError("grad_out shape mismatch")
        pgrad = np.zeros(self.n_params)
        last = len(self._slices) - 1
        for k in range(last, -1, -1):
            w, _ = self._weights(k)
            a_prev = acts[k]
            wsl, bsl, din, dout = self._slices[k]
            pgrad[wsl] = (a_prev.T @ g).ravel()
            pgrad[bsl] = g.sum(axis=0)
            g = g @ w.T
            if k > 0:
                g = g * _act_prime(self.activation, zs[k - 1])
        input_grad = g + grad_out if self.skip_connection else g
        return pgrad, input_grad


def _glorot_fill(model: Mlp, rng: np.random.Generator, zero_final: bool) -> None:
    last = len(model._slices) - 1
    for k, (wsl, bsl, din, dout) in enumerate(model._slices):
        if k == last and zero_final:
            model.params[wsl] = 0.0
            model.params[bsl] = 0.0
            continue
        bound = np.sqrt(6.0 / (din + dout))
        model.params[wsl] = rng.uniform(-bound, bound, size=din * dout)
        model.params[bsl] = 0.0


def make_mlp(layer_dims, activation: str = "tanh", rng=None,
             skip_connection: bool = False, zero_final: bool = False) -> Mlp:
    model = Mlp(layer_dims, activation, skip_connection)
    if rng is None:
        rng = np.random.default_rng(0)
    _glorot_fill(model, rng, zero_final)
    return model


def init_identity_map(hidden_dims=(64, 64), activation: str = "tanh",
                      rng=None, dim: int = 2) -> Mlp:
    """Map network computing exactly x at initialization."""
    dims = [dim, *hidden_dims, dim]
    return make_mlp(dims, activation, rng, skip_connection=True,
                    zero_final=True)


def init_zero_potential(hidden_dims=(64, 64), activation: str = "tanh",
                        rng=None, input_dim: int = 2) -> Mlp:
    """Scalar network computing exactly 0 at initialization."""
    dims = [input_dim, *hidden_dims, 1]
    return make_mlp(dims, activation, rng, zero_final=True)


def save_model(model: Mlp, path) -> None:
    rec = {
        "version": CHECKPOINT_VERSION,
        "layer_dims": model.layer_dims,
        "activation": model.activation,
        "skip_connection": model.skip_connection,
        "params": [repr(float(p)) for p in model.params],
    }
    with open(path, "w") as fh:
        json.dump(rec, fh)


def load_model(path) -> Mlp:
    with open(path) as fh:
        rec = json.load(fh)
    if rec.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {rec.get('version')}")
    params = np.array([float(p) for p in rec["params"]])
    return Mlp(rec["layer_dims"], rec["activation"], rec["skip_connection"],
               params=params)


@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_threshold: Optional[float] = None
    step_count: int = 0
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.clip_threshold is not None and self.clip_threshold <= 0:
            raise ValueError("clip_threshold must be positive")


def optimizer_step(state: OptimizerState, model: Mlp, grad: np.ndarray,
                   context: str = "loss") -> None:
    """One in-place update of model.params along -grad."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != model.params.shape:
        raise ValueError("gradient length mismatch")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError(f"non-finite gradient from {context}")
    if state.clip_threshold is not None:
        c = state.clip_threshold
        grad = np.clip(grad, -c, c)
    if state.kind == "sgd":
        model.params -= state.learning_rate * grad
        state.step_count += 1
        return
    if state.m is None:
        state.m = np.zeros_like(model.params)
        state.v = np.zeros_like(model.params)
    state.step_count += 1
    t = state.step_count
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    mhat = state.m / (1.0 - state.beta1 ** t)
    vhat = state.v / (1.0 - state.beta2 ** t)
    model.params -= state.learning_rate * mhat / (np.sqrt(vhat) + state.eps)
