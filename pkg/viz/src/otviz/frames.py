"""Frame CSV parsing and scatter rendering.

A frame file holds one point cloud snapshot as rows role,id,x0,x1 with
roles src (source samples), map (their images under the current map,
paired to src by id), and tgt (target samples).
"""

import csv
import logging
import os
import re
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.collections import LineCollection

log = logging.getLogger(__name__)

ROLES = ("src", "map", "tgt")
_FRAME_NAME = re.compile(r"^frame_(\d+)\.csv$")


class FrameFormatError(ValueError):
    """A frame CSV that does not follow the role,id,x0,x1 layout."""


@dataclass
class Style:
    """Render options; axes and colors stay fixed across frames."""

    xlim: Tuple[float, float] = (-2.0, 2.0)
    ylim: Tuple[float, float] = (-2.0, 2.0)
    point_size: float = 14.0
    segment_width: float = 0.6
    dpi: int = 120
    figsize: Tuple[float, float] = (4.0, 4.0)
    source_color: str = "blue"
    map_color: str = "red"
    target_color: str = "black"
    segment_color: str = "black"


@dataclass
class Frame:
    index: int
    src: np.ndarray  # (n, 2), ordered by id
    map: np.ndarray  # (n, 2), same id order as src
    tgt: np.ndarray  # (m, 2)


def list_frame_files(run_dir: str) -> List[str]:
    """Frame CSV paths sorted by frame index, not by listing order."""
    found = []
    for name in os.listdir(run_dir):
        m = _FRAME_NAME.match(name)
        if m:
            found.append((int(m.group(1)), os.path.join(run_dir, name)))
    return [path for _, path in sorted(found)]


def _frame_index(path: str) -> int:
    m = _FRAME_NAME.match(os.path.basename(path))
    return int(m.group(1)) if m else -1


def load_frame(path: str) -> Frame:
    points = {role: {} for role in ROLES}
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["role", "id", "x0", "x1"]:
                raise FrameFormatError(
                    f"{path}: expected header role,id,x0,x1, "
                    f"got {reader.fieldnames}")
            for lineno, row in enumerate(reader, start=2):
                try:
                    role = row["role"]
                    pid = int(row["id"])
                    xy = (float(row["x0"]), float(row["x1"]))
                except (TypeError, KeyError, ValueError) as exc:
                    raise FrameFormatError(
                        f"{path}:{lineno}: bad row {row}") from exc
                if role not in ROLES:
                    raise FrameFormatError(
                        f"{path}:{lineno}: unknown role {role!r}")
                if not all(np.isfinite(xy)):
                    raise FrameFormatError(
                        f"{path}:{lineno}: non-finite coordinates")
                if pid in points[role]:
                    raise FrameFormatError(
                        f"{path}:{lineno}: duplicate {role} id {pid}")
                points[role][pid] = xy
    except OSError as exc:
        raise FrameFormatError(f"{path}: {exc}") from exc
    if set(points["src"]) != set(points["map"]):
        raise FrameFormatError(f"{path}: src and map ids do not pair up")

    def cloud(role):
        ids = sorted(points[role])
        if not ids:
            return np.zeros((0, 2))
        return np.array([points[role][i] for i in ids], dtype=np.float64)

    return Frame(index=_frame_index(path), src=cloud("src"),
                 map=cloud("map"), tgt=cloud("tgt"))


def render_frame(frame: Frame, out_path: str,
                 style: Optional[Style] = None) -> str:
    """One fixed-axes scatter image: segments under tgt/src, map on top."""
    style = style or Style()
    fig, ax = plt.subplots(figsize=style.figsize, dpi=style.dpi)
    try:
        if frame.src.shape[0]:
            segments = np.stack([frame.src, frame.map], axis=1)
            ax.add_collection(LineCollection(
                segments, colors=style.segment_color,
                linewidths=style.segment_width, zorder=1))
        if frame.tgt.shape[0]:
            ax.scatter(frame.tgt[:, 0], frame.tgt[:, 1], s=style.point_size,
                       c=style.target_color, marker="o", linewidths=0,
                       antialiased=False, zorder=2)
        else:
            log.warning("%s: no target rows, rendering without the "
                        "target layer", out_path)
        # map drawn after src so images cover their sources when equal
        if frame.src.shape[0]:
            ax.scatter(frame.src[:, 0], frame.src[:, 1], s=style.point_size,
                       c=style.source_color, marker="o", linewidths=0,
                       antialiased=False, zorder=3)
            ax.scatter(frame.map[:, 0], frame.map[:, 1], s=style.point_size,
                       c=style.map_color, marker="o", linewidths=0,
                       antialiased=False, zorder=4)
        ax.set_xlim(*style.xlim)
        ax.set_ylim(*style.ylim)
        ax.set_aspect("equal")
        ax.set_xticks([])
        ax.set_yticks([])
        fig.tight_layout(pad=0.3)
        fig.savefig(out_path)
    finally:
        plt.close(fig)
    return out_path


def render_frames(run_dir: str, out_dir: Optional[str] = None,
                  style: Optional[Style] = None) -> List[str]:
    """Render every frame CSV in run_dir to out_dir as PNGs.

    Malformed frame files are reported and skipped; the run directory
    itself is only read.
    """
    if out_dir is None:
        out_dir = run_dir.rstrip("/\\") + "_viz"
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for path in list_frame_files(run_dir):
        try:
            frame = load_frame(path)
        except FrameFormatError as exc:
            log.error("skipping malformed frame: %s", exc)
            continue
        out_path = os.path.join(out_dir, f"frame_{frame.index:04d}.png")
        written.append(render_frame(frame, out_path, style))
    return written
