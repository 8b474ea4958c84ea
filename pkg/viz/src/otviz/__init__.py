"""Offline rendering for transport-map training runs.

Consumes the run-directory CSV formats (frame_####.csv point clouds and
metrics.csv convergence traces) and produces scatter frames, assembled
GIF movies, and convergence overlays.  Run directories are never
written to.
"""

from otviz.frames import (Frame, FrameFormatError, Style, list_frame_files,
                          load_frame, render_frame, render_frames)
from otviz.movie import assemble_movie
from otviz.convergence import load_series, plot_convergence

__all__ = [
    "Frame",
    "FrameFormatError",
    "Style",
    "list_frame_files",
    "load_frame",
    "render_frame",
    "render_frames",
    "assemble_movie",
    "load_series",
    "plot_convergence",
]
