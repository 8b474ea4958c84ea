"""Convergence overlays from metrics.csv traces."""

import csv
import logging
import os
from typing import List, Optional, Sequence, Tuple

import numpy as np

from otviz import frames as _frames  # noqa: F401  (forces the Agg backend)
import matplotlib.pyplot as plt

log = logging.getLogger(__name__)


def load_series(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """(normalized step, eps2) columns of one metrics file.

    The normalized column is stored by the trainer, so runs with
    different step budgets share the [0, 1] axis.
    """
    t, eps = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or \
                not {"t_over_T", "eps2"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: not a metrics file")
        for row in reader:
            t.append(float(row["t_over_T"]))
            eps.append(float(row["eps2"]))
    return np.asarray(t), np.asarray(eps)


def _label(path: str) -> str:
    parent = os.path.basename(os.path.dirname(os.path.abspath(path)))
    return parent or os.path.basename(path)


def plot_convergence(metrics_paths: Sequence[str], out_path: str,
                     log_scale: bool = False,
                     labels: Optional[Sequence[str]] = None) -> List[str]:
    """Overlay eps2 curves on the shared normalized axis; returns the
    labels actually plotted (empty traces are skipped with a warning)."""
    if labels is not None and len(labels) != len(metrics_paths):
        raise ValueError("one label per metrics file")
    fig, ax = plt.subplots(figsize=(5.0, 3.4), dpi=120)
    plotted = []
    try:
        for i, path in enumerate(metrics_paths):
            t, eps = load_series(path)
            if t.size == 0:
                log.warning("%s: empty metrics, skipped", path)
                continue
            label = labels[i] if labels is not None else _label(path)
            ax.plot(t, eps, label=label)
            plotted.append(label)
        if not plotted:
            raise ValueError("no plottable series")
        ax.set_xlim(0.0, 1.0)
        if log_scale:
            ax.set_yscale("log")
        ax.set_xlabel("t / T")
        ax.set_ylabel("eps2")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(out_path)
    finally:
        plt.close(fig)
    return plotted
