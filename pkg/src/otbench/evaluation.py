"""Evaluation protocol: reference map, error metric, snapshots, timing.

A run is scored against a persisted ground truth (B source points and their
reference images under a small-regularization discrete solve).  Trainers
call into a SnapshotRecorder at scheduled steps; the recorder computes the
mean squared deviation from the reference, tracks wall-clock time, emits a
point-cloud frame, and finally writes metrics.csv and report.json.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import discrete_solvers, geometry

GT_DEFAULT_B = 1000
GT_DEFAULT_EPSILON = 0.01
GT_DEFAULT_SEED = 20890

METRICS_FILENAME = "metrics.csv"
REPORT_FILENAME = "report.json"
GROUND_TRUTH_FILENAME = "ground_truth.csv"


@dataclass
class GroundTruth:
    x: np.ndarray   # (B, 2) source points
    tx: np.ndarray  # (B, 2) reference images
    epsilon_used: float
    seed: int
    B: int


def build_ground_truth(B: int = GT_DEFAULT_B,
                       epsilon: float = GT_DEFAULT_EPSILON,
                       seed: int = GT_DEFAULT_SEED) -> GroundTruth:
    """Sample B source/target points, solve discretely, project to a map."""
    if B < 1:
        raise ValueError("B must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    xb = geometry.sample_unit_ball(B, rng)
    yb = geometry.sample_four_balls(B, rng)
    cost = geometry.cost_matrix(xb, yb)
    w = np.full(B, 1.0 / B)
    sol = discrete_solvers.sinkhorn_log(
        cost, w, w, discrete_solvers.SinkhornConfig(epsilon=epsilon))
    if not sol.converged:
        raise RuntimeError(
            f"reference solve did not converge (error {sol.marginal_error:g})")
    tx = discrete_solvers.barycentric_map(sol.plan, w, yb.points)
    return GroundTruth(x=xb.points, tx=tx, epsilon_used=float(epsilon),
                       seed=int(seed), B=int(B))


def save_ground_truth(gt: GroundTruth, path: str) -> None:
    with open(path, "w") as fh:
        fh.write("id,x0,x1,tx0,tx1\n")
        for i in range(gt.B):
            fh.write(f"{i},{float(gt.x[i, 0])!r},{float(gt.x[i, 1])!r},"
                     f"{float(gt.tx[i, 0])!r},{float(gt.tx[i, 1])!r}\n")
    meta = {
        "epsilon": gt.epsilon_used,
        "seed": gt.seed,
        "B": gt.B,
        "format_version": 1,
    }
    with open(_meta_path(path), "w") as fh:
        json.dump(meta, fh, indent=2)


def load_ground_truth(path: str) -> GroundTruth:
    with open(_meta_path(path)) as fh:
        meta = json.load(fh)
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if rows.shape[0] != meta["B"]:
        raise ValueError("ground truth row count disagrees with meta file")
    return GroundTruth(x=rows[:, 1:3].copy(), tx=rows[:, 3:5].copy(),
                       epsilon_used=float(meta["epsilon"]),
                       seed=int(meta["seed"]), B=int(meta["B"]))


def ensure_ground_truth(path: str, B: int = GT_DEFAULT_B,
                        epsilon: float = GT_DEFAULT_EPSILON,
                        seed: int = GT_DEFAULT_SEED) -> GroundTruth:
    """Load the reference file if present, else build and persist it."""
    if os.path.exists(path):
        return load_ground_truth(path)
    gt = build_ground_truth(B=B, epsilon=epsilon, seed=seed)
    save_ground_truth(gt, path)
    return gt


def _meta_path(path: str) -> str:
    base = path[:-4] if path.endswith(".csv") else path
    return base + ".meta.json"


def as_map_fn(model_or_fn) -> Callable[[np.ndarray], np.ndarray]:
    if hasattr(model_or_fn, "forward"):
        return lambda pts: model_or_fn.forward(pts)
    return model_or_fn


def epsilon2(model_or_fn, gt: GroundTruth) -> float:
    """Mean squared deviation from the reference images over the B pairs."""
    fn = as_map_fn(model_or_fn)
    pred = np.asarray(fn(gt.x), dtype=np.float64)
    if pred.shape != gt.tx.shape:
        raise ValueError(f"mapped shape {pred.shape} != {gt.tx.shape}")
    diff = pred - gt.tx
    return float(np.mean(np.einsum("ij,ij->i", diff, diff)))


def snapshot_schedule(total_steps: int, n_snapshots: int) -> List[int]:
    """Evenly spaced step indices ending at total_steps.

    Uses ceil(total*s/n) for s = 1..n, deduplicated, so short runs get one
    snapshot per step and total_steps itself is always included.
    """
    if total_steps < 0 or n_snapshots < 1:
        raise ValueError("need total_steps >= 0 and n_snapshots >= 1")
    if total_steps == 0:
        return [0]
    steps = {-(-total_steps * s // n_snapshots) for s in range(1, n_snapshots + 1)}
    return sorted(steps)


@dataclass
class Snapshot:
    step: int
    t_over_T: float
    eps2: float
    wall_secs: float
    components: Dict[str, float] = field(default_factory=dict)


@dataclass
class EvalReport:
    snapshots: List[Snapshot]
    min_eps2: float
    t_min: int
    sigma_eps2_after_min: float
    secs_per_step: float
    secs_to_tmin: float
    extra: Dict[str, float] = field(default_factory=dict)


def finalize_report(snapshots: Sequence[Snapshot]) -> EvalReport:
    """Summary statistics over a snapshot trajectory.

    t_min is the first step attaining the minimum; the spread statistic is
    the population standard deviation over snapshots with step >= t_min.
    """
    if not snapshots:
        raise ValueError("need at least one snapshot")
    eps = np.array([s.eps2 for s in snapshots])
    steps = [s.step for s in snapshots]
    min_eps2 = float(eps.min())
    t_min = next(st for st, e in zip(steps, eps) if e == min_eps2)
    tail = eps[[i for i, st in enumerate(steps) if st >= t_min]]
    sigma = float(np.std(tail))
    last = snapshots[-1]
    secs_per_step = last.wall_secs / last.step if last.step > 0 else 0.0
    return EvalReport(
        snapshots=list(snapshots),
        min_eps2=min_eps2,
        t_min=int(t_min),
        sigma_eps2_after_min=sigma,
        secs_per_step=float(secs_per_step),
        secs_to_tmin=float(secs_per_step * t_min),
    )


def emit_frame(run_dir: str, snapshot_index: int, x: np.ndarray,
               tx: np.ndarray, y: np.ndarray) -> str:
    """Write frame_{index}.csv with src/map/tgt point rows.

    src and map rows share ids so a renderer can draw the displacement
    segment for each source point.
    """
    path = os.path.join(run_dir, f"frame_{snapshot_index:04d}.csv")
    x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
    tx = np.asarray(tx, dtype=np.float64).reshape(-1, 2)
    y = np.asarray(y, dtype=np.float64).reshape(-1, 2)
    if x.shape != tx.shape:
        raise ValueError("src and map clouds must pair up")
    with open(path, "w") as fh:
        fh.write("role,id,x0,x1\n")
        for i in range(x.shape[0]):
            fh.write(f"src,{i},{float(x[i, 0])!r},{float(x[i, 1])!r}\n")
        for i in range(tx.shape[0]):
            fh.write(f"map,{i},{float(tx[i, 0])!r},{float(tx[i, 1])!r}\n")
        for j in range(y.shape[0]):
            fh.write(f"tgt,{j},{float(y[j, 0])!r},{float(y[j, 1])!r}\n")
    return path


def write_metrics_csv(path: str, snapshots: Sequence[Snapshot]) -> None:
    if not snapshots:
        raise ValueError("no snapshots to write")
    keys = list(snapshots[0].components.keys())
    with open(path, "w") as fh:
        fh.write(",".join(["step", "t_over_T", "eps2", *keys, "wall_secs"]) + "\n")
        for s in snapshots:
            vals = [str(s.step), repr(float(s.t_over_T)), repr(float(s.eps2))]
            vals += [repr(float(s.components[k])) for k in keys]
            vals.append(repr(float(s.wall_secs)))
            fh.write(",".join(vals) + "\n")


def write_report_json(path: str, report: EvalReport) -> None:
    rec = {
        "min_eps2": report.min_eps2,
        "t_min": report.t_min,
        "sigma_eps2_after_min": report.sigma_eps2_after_min,
        "secs_per_step": report.secs_per_step,
        "secs_to_tmin": report.secs_to_tmin,
        "extra": report.extra,
    }
    with open(path, "w") as fh:
        json.dump(rec, fh, indent=2)


class SnapshotRecorder:
    """Collects scheduled snapshots for one training stage.

    The trainer asks due(step) inside its loop and calls record with the
    current map when it fires.  Frames are written against a fixed pair of
    display batches so successive images are comparable.
    """

    def __init__(self, gt: GroundTruth, total_steps: int, n_snapshots: int,
                 run_dir: Optional[str] = None,
                 frame_x: Optional[np.ndarray] = None,
                 frame_y: Optional[np.ndarray] = None,
                 schedule: Optional[List[int]] = None):
        self.gt = gt
        self.total_steps = int(total_steps)
        if schedule is None:
            schedule = snapshot_schedule(total_steps, n_snapshots)
        self.schedule = list(schedule)
        self._due = set(self.schedule)
        self.run_dir = run_dir
        self.frame_x = frame_x
        self.frame_y = frame_y
        self.snapshots: List[Snapshot] = []
        self._t0 = time.perf_counter()

    def due(self, step: int) -> bool:
        return step in self._due

    def record(self, step: int, model_or_fn, components: Dict[str, float]) -> Snapshot:
        wall = time.perf_counter() - self._t0
        fn = as_map_fn(model_or_fn)
        snap = Snapshot(
            step=int(step),
            t_over_T=step / self.total_steps if self.total_steps else 0.0,
            eps2=epsilon2(fn, self.gt),
            wall_secs=wall,
            components=dict(components),
        )
        self.snapshots.append(snap)
        if self.run_dir is not None and self.frame_x is not None:
            idx = len(self.snapshots) - 1
            emit_frame(self.run_dir, idx, self.frame_x, fn(self.frame_x),
                       self.frame_y)
        return snap

    def finalize(self, extra: Optional[Dict[str, float]] = None) -> EvalReport:
        report = finalize_report(self.snapshots)
        if extra:
            report.extra.update(extra)
        if self.run_dir is not None:
            write_metrics_csv(os.path.join(self.run_dir, METRICS_FILENAME),
                              self.snapshots)
            write_report_json(os.path.join(self.run_dir, REPORT_FILENAME),
                              report)
        return report
