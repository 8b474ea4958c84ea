import numpy as np
import pytest

from helpers_viz import TARGETS, write_frame, write_metrics


@pytest.fixture(scope="session")
def synthetic_run(tmp_path_factory):
    """Five-frame run: sources drift from their start toward the targets."""
    run_dir = tmp_path_factory.mktemp("run_drift")
    rng = np.random.default_rng(7)
    src = rng.uniform(-0.8, 0.8, size=(12, 2))
    goal = TARGETS[rng.integers(0, 4, size=12)]
    for k in range(5):
        blend = k / 4.0
        write_frame(run_dir / f"frame_{k:04d}.csv", src,
                    (1 - blend) * src + blend * goal, TARGETS)
    write_metrics(run_dir / "metrics.csv", [1, 2, 3, 4, 5],
                  [1.0, 0.6, 0.35, 0.2, 0.18])
    return run_dir
