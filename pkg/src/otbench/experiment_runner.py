"""Named experiment registry, config resolution, and run orchestration.

A TrainRun is the fully resolved configuration of one experiment: registry
preset, then config-file fields, then explicit overrides (later wins).  The
resolved record is persisted verbatim as config.json inside the run
directory, alongside metrics.csv, report.json, frame files, and model
checkpoints.
"""

from __future__ import annotations

import copy
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import adversarial, autodiff_nn, evaluation, flow_heuristics, \
    geometry, regularized_dual, supervised

CONFIG_FILENAME = "config.json"


@dataclass
class TrainRun:
    experiment_name: str
    strategy: str  # flow | adversarial | dual | supervised
    iterations: int
    seed: int = 0
    batch_x: int = 256
    batch_y: int = 256
    snapshots: int = 50
    hidden_dims: List[int] = field(default_factory=lambda: [64, 64])
    activation: str = "tanh"
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    out_dir: str = ""
    ground_truth_path: str = ""
    gt_B: int = evaluation.GT_DEFAULT_B
    gt_epsilon: float = evaluation.GT_DEFAULT_EPSILON
    gt_seed: int = evaluation.GT_DEFAULT_SEED
    frame_points: int = 256
    implied_ref_size: int = 512
    params: Dict[str, object] = field(default_factory=dict)


def _flow(variant: str, iters: int, k: int = 1, tp: bool = False) -> dict:
    return {
        "strategy": "flow",
        "iterations": iters,
        "params": {"variant": variant, "k": k,
                   "with_transport_cost": tp},
    }


def _adv(lam: float, n: int, iters: int = 50_000,
         clip: Optional[float] = None) -> dict:
    # the trailing _N in the name means N-1 critic steps per map step
    return {
        "strategy": "adversarial",
        "iterations": iters,
        "params": {"lam": lam, "critic_steps_per_map_step": n - 1,
                   "clip_threshold": clip},
    }


def _dual(reg: str, agg: str, iters: int, eps: float = 0.1) -> dict:
    return {
        "strategy": "dual",
        "iterations": iters,
        "params": {"regularization": reg, "aggregation": agg,
                   "epsilon": eps, "map_iterations": iters},
    }


def _sup(kind: str, eps: float, inner: int, iters: int,
         map_iters: int = 0) -> dict:
    return {
        "strategy": "supervised",
        "iterations": iters,
        "params": {"kind": kind, "epsilon": eps, "inner_iterations": inner,
                   "dual_loss_form": "abs", "warm_start": True,
                   "map_iterations": map_iters},
    }


REGISTRY: Dict[str, dict] = {
    # feature-matching flows
    "covariance": _flow("covariance", 5000),
    "discr_1": _flow("discr", 100_000, k=1),
    "discr_5": _flow("discr", 40_000, k=5),
    "exp": _flow("gaussian_bumps", 30_000),
    "sym_discr_1": _flow("sym_discr", 50_000, k=1),
    "sym_discr_5": _flow("sym_discr", 50_000, k=5),
    "tp_covariance": _flow("covariance", 5000, tp=True),
    "tp_discr_1": _flow("discr", 50_000, k=1, tp=True),
    "tp_discr_5": _flow("discr", 30_000, k=5, tp=True),
    "tp_exp": _flow("gaussian_bumps", 30_000, tp=True),
    "tp_sym_discr_1": _flow("sym_discr", 50_000, k=1, tp=True),
    "tp_sym_discr_5": _flow("sym_discr", 50_000, k=5, tp=True),
    # adversarial
    "adv_l0.1_2": _adv(0.1, 2),
    "adv_l1_10": _adv(1.0, 10),
    "adv_l1_2": _adv(1.0, 2),
    "adv_l1_2_clip_0.01": _adv(1.0, 2, clip=0.01),
    "adv_l10_2": _adv(10.0, 2),
    "adv_l100_2": _adv(100.0, 2),
    # regularized duals with a second map-fitting stage
    "seguy_ent_mean_0.1": _dual("entropic", "mean", 10_000),
    "seguy_ent_sum_0.1": _dual("entropic", "sum", 10_000),
    "seguy_l2_mean_0.1": _dual("l2", "mean", 5000),
    "seguy_l2_sum_0.1": _dual("l2", "sum", 5000),
    # supervised reductions
    "supervised_dual_0.05": _sup("dual", 0.05, 100, 30_600, map_iters=10_000),
    "supervised_dual_0.1": _sup("dual", 0.1, 100, 20_800, map_iters=10_000),
    "supervised_map_iters_1000_0.05": _sup("map", 0.05, 1000, 51_000),
    "supervised_map_iters_200_0.05": _sup("map", 0.05, 200, 50_000),
    "supervised_prob": _sup("plan", 0.05, 1000, 51_000, map_iters=10_000),
}

_PARAM_KEYS = {
    "flow": {"variant", "k", "sigma", "grid_side", "grid_extent",
             "with_transport_cost"},
    "adversarial": {"lam", "critic_steps_per_map_step", "clip_threshold"},
    "dual": {"regularization", "aggregation", "epsilon", "map_iterations"},
    "supervised": {"kind", "epsilon", "inner_iterations", "dual_loss_form",
                   "warm_start", "map_iterations"},
}

_PARAM_DEFAULTS = {
    "flow": {"k": 1, "sigma": flow_heuristics.DEFAULT_BUMP_SIGMA,
             "grid_side": 9, "grid_extent": 2.0,
             "with_transport_cost": False},
    "adversarial": {"lam": 1.0, "critic_steps_per_map_step": 1,
                    "clip_threshold": None},
    "dual": {"regularization": "entropic", "aggregation": "mean",
             "epsilon": 0.1, "map_iterations": 10_000},
    "supervised": {"epsilon": 0.05, "inner_iterations": 100,
                   "dual_loss_form": "abs", "warm_start": True,
                   "map_iterations": 0},
}

_RUN_FIELDS = {f for f in TrainRun.__dataclass_fields__ if f != "params"}


class ConfigError(ValueError):
    pass


def _coerce(value: str):
    try:
        return json.loads(value)
    except (json.JSONDecodeError, ValueError):
        return value


def resolve_config(name: Optional[str] = None,
                   config_file: Optional[str] = None,
                   overrides: Optional[Dict[str, object]] = None) -> TrainRun:
    """Merge registry preset, config file, and overrides into a TrainRun."""
    merged: Dict[str, object] = {}
    params: Dict[str, object] = {}
    if name is not None:
        if name not in REGISTRY:
            valid = ", ".join(sorted(REGISTRY))
            raise ConfigError(f"unknown experiment {name!r}; valid names: {valid}")
        preset = copy.deepcopy(REGISTRY[name])
        params.update(preset.pop("params"))
        merged.update(preset)
        merged["experiment_name"] = name
    if config_file is not None:
        with open(config_file) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        params.update(data.pop("params", {}))
        merged.update(data)
    for key, value in (overrides or {}).items():
        if isinstance(value, str):
            value = _coerce(value)
        if key in _RUN_FIELDS:
            merged[key] = value
        else:
            params[key] = value
    if "strategy" not in merged:
        raise ConfigError("no strategy: give a registry name or a config file")
    strategy = merged["strategy"]
    if strategy not in _PARAM_KEYS:
        raise ConfigError(f"unknown strategy {strategy!r}")
    unknown = set(params) - _PARAM_KEYS[strategy]
    if unknown:
        raise ConfigError(
            f"unknown parameters for strategy {strategy!r}: {sorted(unknown)}")
    full_params = dict(_PARAM_DEFAULTS[strategy])
    full_params.update(params)
    if strategy == "flow" and "variant" not in full_params:
        raise ConfigError("flow runs need params.variant")
    if strategy == "supervised" and "kind" not in full_params:
        raise ConfigError("supervised runs need params.kind")
    merged.setdefault("experiment_name", merged.get("experiment_name", "custom"))
    merged["params"] = full_params
    try:
        run = TrainRun(**merged)
    except TypeError as exc:
        raise ConfigError(f"bad config field: {exc}") from None
    if run.iterations < 0:
        raise ConfigError("iterations must be >= 0")
    if strategy == "supervised":
        inner = int(run.params["inner_iterations"])
        outer = max(run.iterations // inner, 1 if run.iterations else 0)
        run.iterations = outer * inner  # keep T on an outer-step boundary
    if not run.out_dir:
        run.out_dir = os.path.join("runs", f"{run.experiment_name}_seed{run.seed}")
    if not run.ground_truth_path:
        run.ground_truth_path = os.path.join(run.out_dir,
                                             evaluation.GROUND_TRUTH_FILENAME)
    return run


def write_config(run: TrainRun, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(asdict(run), fh, indent=2)


def load_config(path: str) -> TrainRun:
    return resolve_config(config_file=path)


def _save(model, run_dir: str, name: str) -> None:
    autodiff_nn.save_model(model, os.path.join(run_dir, name))


def run(train_run: TrainRun) -> evaluation.EvalReport:
    """Execute one experiment and write all artifacts to its run directory."""
    run_dir = train_run.out_dir
    os.makedirs(run_dir, exist_ok=True)
    write_config(train_run, os.path.join(run_dir, CONFIG_FILENAME))
    gt = evaluation.ensure_ground_truth(
        train_run.ground_truth_path, B=train_run.gt_B,
        epsilon=train_run.gt_epsilon, seed=train_run.gt_seed)
    root = np.random.SeedSequence(train_run.seed)
    ss_init, ss_data, ss_frames = root.spawn(3)
    rng_init = np.random.default_rng(ss_init)
    rng_data = np.random.default_rng(ss_data)
    rng_frames = np.random.default_rng(ss_frames)
    frame_x = geometry.sample_unit_ball(train_run.frame_points, rng_frames).points
    frame_y = geometry.sample_four_balls(train_run.frame_points, rng_frames).points
    ref_y = geometry.sample_four_balls(train_run.implied_ref_size,
                                       rng_frames).points
    try:
        return _dispatch(train_run, gt, run_dir, rng_init, rng_data,
                         frame_x, frame_y, ref_y)
    except Exception as exc:
        diag = {"error": f"{type(exc).__name__}: {exc}"}
        with open(os.path.join(run_dir, evaluation.REPORT_FILENAME), "w") as fh:
            json.dump(diag, fh, indent=2)
        raise


def _shared_kwargs(train_run: TrainRun, rng_init, rng_data) -> dict:
    return dict(
        batch_x=train_run.batch_x, batch_y=train_run.batch_y,
        rng_init=rng_init, rng_data=rng_data,
        hidden_dims=tuple(train_run.hidden_dims),
        activation=train_run.activation, optimizer=train_run.optimizer,
        learning_rate=train_run.learning_rate)


def _dispatch(train_run, gt, run_dir, rng_init, rng_data, frame_x, frame_y,
              ref_y) -> evaluation.EvalReport:
    p = train_run.params
    shared = _shared_kwargs(train_run, rng_init, rng_data)
    extra: Dict[str, float] = {}

    if train_run.strategy == "flow":
        recorder = evaluation.SnapshotRecorder(
            gt, train_run.iterations, train_run.snapshots, run_dir,
            frame_x, frame_y)
        kind = flow_heuristics.FlowLossKind(
            variant=p["variant"], k=int(p["k"]), sigma=float(p["sigma"]),
            centers=flow_heuristics.default_bump_grid(
                int(p["grid_side"]), float(p["grid_extent"])),
            with_transport_cost=bool(p["with_transport_cost"]))
        model = flow_heuristics.train_flow(
            kind, iterations=train_run.iterations, recorder=recorder, **shared)
        _save(model, run_dir, "map_model.json")

    elif train_run.strategy == "adversarial":
        recorder = evaluation.SnapshotRecorder(
            gt, train_run.iterations, train_run.snapshots, run_dir,
            frame_x, frame_y)
        cfg = adversarial.AdversarialConfig(
            lam=float(p["lam"]),
            critic_steps_per_map_step=int(p["critic_steps_per_map_step"]),
            clip_threshold=p["clip_threshold"])
        model, critic = adversarial.train_adversarial(
            cfg, iterations=train_run.iterations, recorder=recorder, **shared)
        _save(model, run_dir, "map_model.json")
        _save(critic, run_dir, "critic_model.json")

    elif train_run.strategy == "dual":
        recorder = evaluation.SnapshotRecorder(
            gt, train_run.iterations, train_run.snapshots, run_dir,
            frame_x, frame_y)
        cfg = regularized_dual.DualConfig(
            regularization=p["regularization"], epsilon=float(p["epsilon"]),
            aggregation=p["aggregation"])
        u_model, v_model, _ = regularized_dual.train_dual(
            cfg, iterations=train_run.iterations, recorder=recorder,
            ref_y=ref_y, **shared)
        _save(u_model, run_dir, "u_potential.json")
        _save(v_model, run_dir, "v_potential.json")
        t0 = time.perf_counter()
        map_model, stats = regularized_dual.fit_map_from_potentials(
            u_model, v_model, cfg, iterations=int(p["map_iterations"]),
            **shared)
        extra.update(stats)
        extra["map_fit_secs"] = time.perf_counter() - t0
        extra["map_fit_steps"] = float(p["map_iterations"])
        extra["final_map_eps2"] = evaluation.epsilon2(map_model, gt)
        _save(map_model, run_dir, "map_model.json")

    elif train_run.strategy == "supervised":
        target = supervised.SupervisedTarget(
            kind=p["kind"], epsilon=float(p["epsilon"]),
            inner_iterations=int(p["inner_iterations"]),
            dual_loss_form=p["dual_loss_form"],
            warm_start=bool(p["warm_start"]))
        inner = target.inner_iterations
        outer = train_run.iterations // inner
        schedule = [o * inner for o in
                    evaluation.snapshot_schedule(outer, train_run.snapshots)]
        recorder = evaluation.SnapshotRecorder(
            gt, train_run.iterations, train_run.snapshots, run_dir,
            frame_x, frame_y, schedule=schedule)
        models = supervised.train_supervised(
            target, outer_steps=outer, recorder=recorder, ref_y=ref_y,
            **shared)
        extra["skipped_batches"] = float(models["skipped_batches"])
        extra["sinkhorn_iters_total"] = float(models["sinkhorn_iters_total"])
        if target.kind == "dual":
            _save(models["u_model"], run_dir, "u_potential.json")
            _save(models["v_model"], run_dir, "v_potential.json")
        elif target.kind == "map":
            _save(models["map_model"], run_dir, "map_model.json")
        else:
            _save(models["plan_model"], run_dir, "plan_model.json")
        map_iters = int(p["map_iterations"])
        if target.kind in ("dual", "plan") and map_iters > 0:
            t0 = time.perf_counter()
            if target.kind == "dual":
                cfg = regularized_dual.DualConfig(
                    regularization="entropic", epsilon=target.epsilon)
                map_model, stats = regularized_dual.fit_map_from_potentials(
                    models["u_model"], models["v_model"], cfg,
                    iterations=map_iters, **shared)
            else:
                map_model, stats = regularized_dual.fit_map_from_density(
                    supervised.plan_density_fn(models["plan_model"]),
                    iterations=map_iters, **shared)
            extra.update(stats)
            extra["map_fit_secs"] = time.perf_counter() - t0
            extra["map_fit_steps"] = float(map_iters)
            extra["final_map_eps2"] = evaluation.epsilon2(map_model, gt)
            _save(map_model, run_dir, "map_model.json")

    else:
        raise ConfigError(f"unknown strategy {train_run.strategy!r}")

    return recorder.finalize(extra)


def summarize(run_dirs: List[str], out_prefix: str = "summary"):
    """Collect per-run reports into CSV and aligned-text tables."""
    rows = []
    for d in run_dirs:
        rpath = os.path.join(d, evaluation.REPORT_FILENAME)
        cpath = os.path.join(d, CONFIG_FILENAME)
        if not (os.path.exists(rpath) and os.path.exists(cpath)):
            print(f"warning: skipping {d} (missing report or config)",
                  file=sys.stderr)
            continue
        with open(rpath) as fh:
            rep = json.load(fh)
        if "min_eps2" not in rep:
            print(f"warning: skipping {d} (incomplete report)",
                  file=sys.stderr)
            continue
        with open(cpath) as fh:
            cfg = json.load(fh)
        rows.append({
            "model": cfg["experiment_name"],
            "min_eps2": rep["min_eps2"],
            "sigma_eps2": rep["sigma_eps2_after_min"],
            "t_min": rep["t_min"],
            "T": cfg["iterations"],
            "secs_per_step": rep["secs_per_step"],
            "secs_to_tmin": rep["secs_to_tmin"],
        })
    if not rows:
        raise ValueError("no completed runs to summarize")
    perf_cols = ["model", "min_eps2", "sigma_eps2", "t_min", "T"]
    time_cols = ["model", "secs_per_step", "secs_to_tmin"]
    with open(out_prefix + ".csv", "w") as fh:
        fh.write(",".join(perf_cols) + "\n")
        for r in rows:
            fh.write(",".join(str(r[c]) for c in perf_cols) + "\n")
    with open(out_prefix + "_timings.csv", "w") as fh:
        fh.write(",".join(time_cols) + "\n")
        for r in rows:
            fh.write(",".join(str(r[c]) for c in time_cols) + "\n")
    with open(out_prefix + ".txt", "w") as fh:
        fh.write(_text_table(rows, perf_cols))
        fh.write("\n")
        fh.write(_text_table(rows, time_cols))
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def _text_table(rows, cols) -> str:
    table = [cols] + [[_fmt(r[c]) for c in cols] for r in rows]
    widths = [max(len(line[i]) for line in table) for i in range(len(cols))]
    lines = []
    for line in table:
        lines.append("  ".join(s.rjust(w) for s, w in zip(line, widths)))
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"
