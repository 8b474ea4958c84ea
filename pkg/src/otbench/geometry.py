"""Point batches, the quadratic cost, and the two dataset samplers.

Points are rows of float64 arrays with columns (x0, x1).  The source
distribution is uniform on the closed unit disk; the target is an equal
mixture of four disks of radius 1/2 centered at (+-1, +-1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

SOURCE = "source"
TARGET = "target"
MAPPED = "mapped"

FOUR_BALL_CENTERS = np.array(
    [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]
)
FOUR_BALL_RADIUS = 0.5


@dataclass
class SampleBatch:
    points: np.ndarray  # (n, 2)
    role: str = SOURCE

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError(f"points must be (n, 2), got {self.points.shape}")
        if self.points.size and not np.all(np.isfinite(self.points)):
            raise ValueError("batch contains non-finite points")

    def __len__(self) -> int:
        return self.points.shape[0]


def squared_euclidean_cost(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = a - b
    return float(d @ d)


def cost_matrix(x, y) -> np.ndarray:
    """Dense matrix of squared Euclidean costs between two batches.

    Accepts SampleBatch or raw (n, 2) arrays; raises on empty input.
    """
    xp = x.points if isinstance(x, SampleBatch) else np.asarray(x, dtype=np.float64)
    yp = y.points if isinstance(y, SampleBatch) else np.asarray(y, dtype=np.float64)
    if xp.shape[0] == 0 or yp.shape[0] == 0:
        raise ValueError("cost_matrix requires non-empty batches")
    return kernels.pairwise_sqdist(np.ascontiguousarray(xp), np.ascontiguousarray(yp))


def _disk(n: int, rng: np.random.Generator, radius: float) -> np.ndarray:
    # radius sqrt(U) makes the density uniform over the disk area
    r = radius * np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def sample_unit_ball(n: int, rng: np.random.Generator) -> SampleBatch:
    """n i.i.d. points uniform on the closed unit disk."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return SampleBatch(_disk(n, rng, 1.0).reshape(n, 2), role=SOURCE)


def sample_four_balls(n: int, rng: np.random.Generator) -> SampleBatch:
    """n i.i.d. points from the uniform mixture of the four target disks."""
    if n < 0:
        raise ValueError("n must be >= 0")
    which = rng.integers(0, 4, size=n)
    offs = _disk(n, rng, FOUR_BALL_RADIUS)
    pts = FOUR_BALL_CENTERS[which] + offs
    return SampleBatch(pts.reshape(n, 2), role=TARGET)
