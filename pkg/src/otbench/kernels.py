"""Hot numeric kernels: numba-jitted inner loops with a pure-numpy fallback.

The numba path is used when numba imports successfully; set
``OTBENCH_DISABLE_NUMBA=1`` in the environment to force the numpy path.
Both paths implement identical semantics (same update order, same
tie-breaking); results agree to float rounding.  ``benchmarks/kernel_bench.py``
times the two side by side.
"""

from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("OTBENCH_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _flag not in ("", "0", "false", "no")

NUMBA_ENABLED = False
if not _DISABLED:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass


# ---------------------------------------------------------------------------
# pairwise squared distances
# ---------------------------------------------------------------------------

def pairwise_sqdist_numpy(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """All-pairs squared Euclidean distances, shape (len(x), len(y))."""
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _pairwise_sqdist_loop(x, y):
    n, m = x.shape[0], y.shape[0]
    d = x.shape[1]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for k in range(d):
                t = x[i, k] - y[j, k]
                s += t * t
            out[i, j] = s
    return out


# ---------------------------------------------------------------------------
# k nearest neighbors (ascending distance, ties broken by smaller index)
# ---------------------------------------------------------------------------

def knn_numpy(x: np.ndarray, y: np.ndarray, k: int):
    """Distances and indices of the k nearest rows of y to each row of x."""
    d2 = pairwise_sqdist_numpy(x, y)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    dists = np.sqrt(np.take_along_axis(d2, order, axis=1))
    return dists, order


def _knn_loop(x, y, k):
    n, m = x.shape[0], y.shape[0]
    dists = np.empty((n, k))
    idx = np.empty((n, k), np.int64)
    d2 = np.empty(m)
    used = np.zeros(m, np.bool_)
    for i in range(n):
        for j in range(m):
            dx = x[i, 0] - y[j, 0]
            dy = x[i, 1] - y[j, 1]
            d2[j] = dx * dx + dy * dy
            used[j] = False
        for l in range(k):
            best = -1
            bestv = np.inf
            for j in range(m):
                # strict < keeps the smallest index among ties
                if not used[j] and d2[j] < bestv:
                    bestv = d2[j]
                    best = j
            used[best] = True
            idx[i, l] = best
            dists[i, l] = np.sqrt(bestv)
    return dists, idx


# ---------------------------------------------------------------------------
# log-domain Sinkhorn iteration loop
# ---------------------------------------------------------------------------

def _logsumexp(t, axis):
    m = t.max(axis=axis, keepdims=True)
    return np.squeeze(np.log(np.exp(t - m).sum(axis=axis, keepdims=True)) + m, axis=axis)


def sinkhorn_loop_numpy(c, log_a, log_b, eps, u, v, max_iters, tol):
    """Alternating log-domain dual updates; mutates u, v in place.

    Returns (iterations_used, marginal_error, converged) where marginal_error
    is the L1 deviation of the implied plan's row sums from a plus that of
    its column sums from b.
    """
    a = np.exp(log_a)
    b = np.exp(log_b)
    iters = 0
    err = np.inf
    for it in range(max_iters):
        u[:] = -eps * _logsumexp((v[None, :] - c) / eps + log_b[None, :], axis=1)
        v[:] = -eps * _logsumexp((u[:, None] - c) / eps + log_a[:, None], axis=0)
        p = np.exp((u[:, None] + v[None, :] - c) / eps + log_a[:, None] + log_b[None, :])
        err = np.abs(p.sum(axis=1) - a).sum() + np.abs(p.sum(axis=0) - b).sum()
        iters = it + 1
        if err <= tol:
            return iters, err, True
    return iters, err, False


def _sinkhorn_loop(c, log_a, log_b, eps, u, v, max_iters, tol):
    n, m = c.shape
    inv = 1.0 / eps
    a = np.exp(log_a)
    b = np.exp(log_b)
    row = np.empty(m)
    col = np.empty(n)
    csum = np.zeros(m)
    iters = 0
    err = np.inf
    for it in range(max_iters):
        for i in range(n):
            mx = -np.inf
            for j in range(m):
                t = (v[j] - c[i, j]) * inv + log_b[j]
                row[j] = t
                if t > mx:
                    mx = t
            s = 0.0
            for j in range(m):
                s += np.exp(row[j] - mx)
            u[i] = -eps * (np.log(s) + mx)
        for j in range(m):
            mx = -np.inf
            for i in range(n):
                t = (u[i] - c[i, j]) * inv + log_a[i]
                col[i] = t
                if t > mx:
                    mx = t
            s = 0.0
            for i in range(n):
                s += np.exp(col[i] - mx)
            v[j] = -eps * (np.log(s) + mx)
        err = 0.0
        for j in range(m):
            csum[j] = 0.0
        for i in range(n):
            rsum = 0.0
            for j in range(m):
                p = np.exp((u[i] + v[j] - c[i, j]) * inv + log_a[i] + log_b[j])
                rsum += p
                csum[j] += p
            err += abs(rsum - a[i])
        for j in range(m):
            err += abs(csum[j] - b[j])
        iters = it + 1
        if err <= tol:
            return iters, err, True
    return iters, err, False


if NUMBA_ENABLED:
    pairwise_sqdist_jit = njit(cache=True)(_pairwise_sqdist_loop)
    knn_jit = njit(cache=True)(_knn_loop)
    sinkhorn_loop_jit = njit(cache=True)(_sinkhorn_loop)


def pairwise_sqdist(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if NUMBA_ENABLED:
        return pairwise_sqdist_jit(x, y)
    return pairwise_sqdist_numpy(x, y)


def knn(x: np.ndarray, y: np.ndarray, k: int):
    if NUMBA_ENABLED:
        return knn_jit(x, y, int(k))
    return knn_numpy(x, y, int(k))


def sinkhorn_loop(c, log_a, log_b, eps, u, v, max_iters, tol):
    if NUMBA_ENABLED:
        return sinkhorn_loop_jit(c, log_a, log_b, eps, u, v, int(max_iters), tol)
    return sinkhorn_loop_numpy(c, log_a, log_b, eps, u, v, int(max_iters), tol)


def warmup() -> None:
    """Trigger jit compilation on tiny inputs (no-op on the numpy path)."""
    if not NUMBA_ENABLED:
        return
    x = np.zeros((2, 2))
    y = np.ones((3, 2))
    pairwise_sqdist_jit(x, y)
    knn_jit(x, y, 2)
    la = np.log(np.full(2, 0.5))
    lb = np.log(np.full(3, 1.0 / 3.0))
    sinkhorn_loop_jit(pairwise_sqdist_numpy(x, y), la, lb, 1.0,
                      np.zeros(2), np.zeros(3), 5, 1e-9)
