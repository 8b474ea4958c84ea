import csv
import json
import os

import numpy as np
import pytest

from otbench import evaluation
from otbench import experiment_runner as er

EXPECTED_NAMES = {
    "covariance", "discr_1", "discr_5", "exp", "sym_discr_1", "sym_discr_5",
    "tp_covariance", "tp_discr_1", "tp_discr_5", "tp_exp", "tp_sym_discr_1",
    "tp_sym_discr_5",
    "adv_l0.1_2", "adv_l1_10", "adv_l1_2", "adv_l1_2_clip_0.01", "adv_l10_2",
    "adv_l100_2",
    "seguy_ent_mean_0.1", "seguy_ent_sum_0.1", "seguy_l2_mean_0.1",
    "seguy_l2_sum_0.1",
    "supervised_dual_0.05", "supervised_dual_0.1",
    "supervised_map_iters_1000_0.05", "supervised_map_iters_200_0.05",
    "supervised_prob",
}


def small_overrides(**extra):
    base = dict(batch_x=8, batch_y=8, snapshots=2, hidden_dims=[4],
                gt_B=24, gt_epsilon=0.05, frame_points=6,
                implied_ref_size=8)
    base.update(extra)
    return base


def test_registry_is_complete():
    assert set(er.REGISTRY) == EXPECTED_NAMES


def test_every_registry_entry_resolves():
    for name in er.REGISTRY:
        run = er.resolve_config(name)
        assert run.experiment_name == name
        assert run.strategy in er._PARAM_KEYS
        assert run.iterations > 0
        assert set(run.params) <= er._PARAM_KEYS[run.strategy]
        if run.strategy == "supervised":
            assert run.iterations % run.params["inner_iterations"] == 0
        assert run.out_dir == os.path.join("runs", f"{name}_seed0")
        assert run.ground_truth_path == os.path.join(run.out_dir,
                                                     "ground_truth.csv")


def test_adversarial_names_encode_critic_steps():
    assert er.REGISTRY["adv_l1_10"]["params"]["critic_steps_per_map_step"] == 9
    assert er.REGISTRY["adv_l1_2"]["params"]["critic_steps_per_map_step"] == 1
    assert er.REGISTRY["adv_l1_2_clip_0.01"]["params"]["clip_threshold"] == 0.01
    assert er.REGISTRY["adv_l100_2"]["params"]["lam"] == 100.0


def test_resolve_unknown_name():
    with pytest.raises(er.ConfigError, match="unknown experiment"):
        er.resolve_config("flows_covariance")


def test_resolve_requires_a_strategy():
    with pytest.raises(er.ConfigError, match="no strategy"):
        er.resolve_config(overrides={"iterations": 10})


def test_override_precedence_and_coercion():
    run = er.resolve_config("covariance",
                            overrides={"iterations": "250", "seed": 3,
                                       "k": "2", "learning_rate": "0.01"})
    assert run.iterations == 250
    assert run.seed == 3
    assert run.params["k"] == 2
    assert run.learning_rate == 0.01
    assert run.out_dir == os.path.join("runs", "covariance_seed3")


def test_unknown_param_key_rejected():
    with pytest.raises(er.ConfigError, match="unknown parameters"):
        er.resolve_config("covariance", overrides={"lam": 2.0})


def test_unknown_run_field_rejected():
    with pytest.raises(er.ConfigError, match="unknown parameters"):
        er.resolve_config("covariance", overrides={"iterationz": 5})


def test_config_file_merges_with_overrides(tmp_path):
    cfg = {"strategy": "flow", "iterations": 12, "experiment_name": "probe",
           "params": {"variant": "discr", "k": 4}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    run = er.resolve_config(config_file=str(path),
                            overrides={"iterations": 6})
    assert run.experiment_name == "probe"
    assert run.iterations == 6
    assert run.params["variant"] == "discr"
    assert run.params["k"] == 4
    assert run.params["with_transport_cost"] is False


def test_config_file_must_be_an_object(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("[1, 2]")
    with pytest.raises(er.ConfigError, match="JSON object"):
        er.resolve_config(config_file=str(path))


def test_flow_needs_variant():
    with pytest.raises(er.ConfigError, match="variant"):
        er.resolve_config(overrides={"strategy": "flow", "iterations": 1,
                                     "experiment_name": "x"})


def test_supervised_iterations_round_down_to_outer_boundary():
    run = er.resolve_config("supervised_dual_0.05",
                            overrides={"iterations": 150})
    assert run.iterations == 100
    run = er.resolve_config("supervised_dual_0.05", overrides={"iterations": 50})
    assert run.iterations == 100  # at least one outer step when nonzero
    run = er.resolve_config("supervised_dual_0.05", overrides={"iterations": 0})
    assert run.iterations == 0


def test_unexpected_config_file_field_reported(tmp_path):
    # top-level config keys go straight to the run record, so a typo there
    # surfaces as a constructor error rather than a parameter error
    path = tmp_path / "typo.json"
    path.write_text(json.dumps({"strategy": "flow", "iterations": 1,
                                "iterationz": 2,
                                "params": {"variant": "covariance"}}))
    with pytest.raises(er.ConfigError, match="bad config field"):
        er.resolve_config(config_file=str(path))


def test_write_and_load_config_roundtrip(tmp_path):
    run = er.resolve_config("adv_l1_2", overrides={"iterations": 9})
    path = str(tmp_path / "config.json")
    er.write_config(run, path)
    again = er.load_config(path)
    assert again == run


def test_run_flow_writes_all_artifacts(tmp_path):
    out = str(tmp_path / "flowrun")
    run = er.resolve_config(
        "covariance",
        overrides=small_overrides(iterations=6, out_dir=out, seed=1))
    report = er.run(run)
    assert np.isfinite(report.min_eps2)
    for fname in ("config.json", "ground_truth.csv", "ground_truth.meta.json",
                  "metrics.csv", "report.json", "map_model.json",
                  "frame_0000.csv", "frame_0001.csv"):
        assert os.path.exists(os.path.join(out, fname)), fname
    with open(os.path.join(out, "metrics.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["step"]) for r in rows] == [3, 6]
    cfg = json.loads(open(os.path.join(out, "config.json")).read())
    assert cfg["experiment_name"] == "covariance"
    assert cfg["iterations"] == 6


def test_run_dual_adds_stage_two_artifacts(tmp_path):
    out = str(tmp_path / "dualrun")
    run = er.resolve_config(
        "seguy_l2_sum_0.1",
        overrides=small_overrides(iterations=5, map_iterations=4,
                                  out_dir=out))
    report = er.run(run)
    for fname in ("u_potential.json", "v_potential.json", "map_model.json"):
        assert os.path.exists(os.path.join(out, fname)), fname
    for key in ("skipped_points", "final_fit_loss", "map_fit_secs",
                "map_fit_steps", "final_map_eps2"):
        assert key in report.extra, key
    assert report.extra["map_fit_steps"] == 4.0


def test_run_supervised_snapshots_on_outer_boundaries(tmp_path):
    out = str(tmp_path / "suprun")
    run = er.resolve_config(
        "supervised_map_iters_200_0.05",
        overrides=small_overrides(iterations=800, inner_iterations=200,
                                  snapshots=3, out_dir=out))
    er.run(run)
    with open(os.path.join(out, "metrics.csv")) as fh:
        steps = [int(r["step"]) for r in csv.DictReader(fh)]
    assert steps == [400, 600, 800]
    assert all(s % 200 == 0 for s in steps)


def test_run_failure_writes_error_report(tmp_path, monkeypatch):
    out = str(tmp_path / "boom")
    run = er.resolve_config(
        "covariance", overrides=small_overrides(iterations=3, out_dir=out))

    def explode(*a, **kw):
        raise FloatingPointError("non-finite flow loss at step 1")

    monkeypatch.setattr(er.flow_heuristics, "train_flow", explode)
    with pytest.raises(FloatingPointError):
        er.run(run)
    diag = json.loads(open(os.path.join(out, "report.json")).read())
    assert diag["error"].startswith("FloatingPointError")


def _metrics_without_wall(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return [{k: v for k, v in row.items() if k != "wall_secs"}
            for row in rows]


def test_same_seed_runs_are_identical_apart_from_timing(tmp_path):
    gt_path = str(tmp_path / "gt.csv")
    outs = [str(tmp_path / f"rep{i}") for i in (0, 1)]
    for out in outs:
        run = er.resolve_config(
            "tp_covariance",
            overrides=small_overrides(iterations=25, snapshots=4,
                                      out_dir=out, seed=7,
                                      ground_truth_path=gt_path))
        er.run(run)
    a = _metrics_without_wall(os.path.join(outs[0], "metrics.csv"))
    b = _metrics_without_wall(os.path.join(outs[1], "metrics.csv"))
    assert a == b


def test_different_seeds_differ(tmp_path):
    gt_path = str(tmp_path / "gt.csv")
    reports = []
    for seed in (0, 1):
        out = str(tmp_path / f"seed{seed}")
        run = er.resolve_config(
            "covariance",
            overrides=small_overrides(iterations=25, seed=seed, out_dir=out,
                                      ground_truth_path=gt_path))
        reports.append(er.run(run))
    assert reports[0].min_eps2 != reports[1].min_eps2


def test_summarize_collects_completed_runs(tmp_path, capsys):
    gt_path = str(tmp_path / "gt.csv")
    dirs = []
    for name in ("covariance", "tp_covariance"):
        out = str(tmp_path / name)
        run = er.resolve_config(
            name, overrides=small_overrides(iterations=4, out_dir=out,
                                            ground_truth_path=gt_path))
        er.run(run)
        dirs.append(out)
    missing = str(tmp_path / "not_there")
    prefix = str(tmp_path / "table")
    rows = er.summarize(dirs + [missing], out_prefix=prefix)
    assert [r["model"] for r in rows] == ["covariance", "tp_covariance"]
    assert "skipping" in capsys.readouterr().err
    with open(prefix + ".csv") as fh:
        got = list(csv.DictReader(fh))
    assert got[0]["model"] == "covariance"
    assert float(got[0]["min_eps2"]) == rows[0]["min_eps2"]
    with open(prefix + "_timings.csv") as fh:
        trows = list(csv.DictReader(fh))
    assert set(trows[0]) == {"model", "secs_per_step", "secs_to_tmin"}
    text = open(prefix + ".txt").read()
    assert "min_eps2" in text and "secs_per_step" in text


def test_summarize_requires_at_least_one_run(tmp_path):
    with pytest.raises(ValueError, match="no completed runs"):
        er.summarize([str(tmp_path / "nope")], out_prefix=str(tmp_path / "s"))
