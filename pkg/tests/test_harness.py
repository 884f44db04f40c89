# tests/test_harness.py
from __future__ import annotations

import csv
import math

import numpy as np
import orjson
import pytest

from pickplace.cli import EXIT_CONFIG, EXIT_OK, main
from pickplace.dataset import Episode
from pickplace.errors import ConfigError, LogicError
from pickplace.harness import (
    FAST_SUITES,
    evaluate_snapshot,
    load_run_config,
    run_bench,
    run_config_from_text,
    train_run,
)
from pickplace.harness.bench import overfit_deviation
from pickplace.harness.config import GOAL_MODES, MLP_KINDS, RunConfig
from pickplace.sim.motion import PickPlaceAction
from pickplace.spatial import Pose2, pixel_to_world, world_to_pixel
from pickplace.tasks import get_task
from pickplace.transporter import TransportModel, policy_act

TINY = {
    "iterations": 2,
    "snapshot_interval": 1,
    "eval_episodes": 1,
    "crop_size": 8,
    "feature_dim": 2,
    "width": 4,
    "demos": 2,
}


class TestRunConfig:
    def test_parse(self):
        cfg = run_config_from_text("# ring run\ntask=cable-ring\niterations=400\nsnapshot_interval=200\naugment=false\n")
        assert cfg.task == "cable-ring"
        assert cfg.iterations == 400 and cfg.snapshot_interval == 200
        assert cfg.augment is False
        assert cfg.model == "transporter-goal-split"
        assert cfg.train_seeds == 1

    def test_text_round_trip(self):
        cfg = RunConfig(task="bag-items-1", model="gt-mlp", iterations=600, lr=3e-4, n_rots=12)
        assert run_config_from_text(cfg.to_text()) == cfg

    @pytest.mark.parametrize(
        "text",
        [
            "task=cable-ring\niterations=300\nsnapshot_interval=200\n",
            "task=cable-ring\ncrop_size=33\n",
            "task=cable-ring\nimg_h=81\n",
            "task=cable-ring\nlearning_rate=0.1\n",
            "iterations=200\n",
            "task=cable-ring\nmodel=cnn\n",
            "task=cable-ring\nno equals sign\n",
        ],
    )
    def test_invalid(self, text):
        with pytest.raises(ConfigError):
            run_config_from_text(text)

    def test_eval_seeds(self):
        cfg = RunConfig(task="cable-ring", eval_episodes=3, eval_seed0=500)
        assert cfg.eval_seeds() == [500, 501, 502]

    def test_load_resolves_dataset(self, tmp_path):
        (tmp_path / "run.cfg").write_text("task=fabric-cover\ndataset=data/train\n")
        cfg = load_run_config(tmp_path / "run.cfg")
        assert cfg.dataset == str((tmp_path / "data" / "train").resolve())

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(tmp_path / "nope.cfg")

    def test_model_tables(self):
        assert set(GOAL_MODES.values()) == {"none", "stack", "split"}
        assert MLP_KINDS == {"gt-mlp", "gt-mlp-2step"}


def _cfg(root, out, **extra) -> RunConfig:
    return RunConfig(task="fabric-cover", dataset=str(root), out_dir=str(out), **{**TINY, **extra})


class TestTrainRun:
    def test_transporter_run_writes_logs(self, fabric_cover_dataset, tmp_path):
        root, _ = fabric_cover_dataset
        cfg = _cfg(root, tmp_path / "run", model="transporter")
        report = train_run(cfg)
        out = tmp_path / "run"
        with (out / "loss_log.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["iteration", "attention_loss", "transport_loss"]
        assert [r[0] for r in rows[1:]] == ["1", "2"]
        with (out / "eval_log.csv").open() as fh:
            evals = list(csv.reader(fh))
        assert [r[0] for r in evals[1:]] == ["0", "1", "2"]
        assert len(report.snapshots) == 3
        assert report.best_iteration in (0, 1, 2)
        assert load_run_config(out / "run.cfg") == cfg
        assert orjson.loads((out / "report.json").read_bytes())["task"] == "fabric-cover"

    def test_mlp_run(self, fabric_cover_dataset, tmp_path):
        root, _ = fabric_cover_dataset
        report = train_run(_cfg(root, tmp_path / "mlp", model="gt-mlp", batch_size_mlp=2, mdn_components=2))
        assert report.model == "gt-mlp"
        assert len(report.snapshots) == 3

    def test_eval_seeds_must_not_overlap(self, fabric_cover_dataset, tmp_path):
        root, _ = fabric_cover_dataset
        with pytest.raises(LogicError):
            train_run(_cfg(root, tmp_path / "x", eval_seed0=0, eval_episodes=50))

    def test_too_many_demos(self, fabric_cover_dataset, tmp_path):
        root, _ = fabric_cover_dataset
        with pytest.raises(ConfigError):
            train_run(_cfg(root, tmp_path / "x", demos=5))

    def test_wrong_task(self, fabric_cover_dataset, tmp_path):
        root, _ = fabric_cover_dataset
        cfg = _cfg(root, tmp_path / "x").model_copy(update={"task": "cable-ring"})
        with pytest.raises(ConfigError):
            train_run(cfg)

    def test_demonstrator_not_trainable(self, fabric_cover_dataset, tmp_path):
        root, _ = fabric_cover_dataset
        with pytest.raises(ConfigError):
            train_run(_cfg(root, tmp_path / "x", model="demonstrator"))


class TestEvaluate:
    def test_demonstrator_snapshot(self):
        summary = evaluate_snapshot(None, get_task("fabric-cover"), 2, 100_000, kind="demonstrator")
        assert summary.episodes == 2
        assert summary.seeds == [100_000, 100_001]
        assert 0.0 <= summary.success_rate <= 1.0
        assert all(r.steps <= 2 for r in summary.results)

    def test_checkpoint_needed(self):
        with pytest.raises(ConfigError):
            evaluate_snapshot(None, get_task("fabric-cover"), 1, 0, kind="transporter")

    def test_checkpoint_for_other_task(self, fabric_cover_dataset, tmp_path):
        root, _ = fabric_cover_dataset
        report = train_run(_cfg(root, tmp_path / "run", model="transporter", iterations=0, eval_episodes=0))
        with pytest.raises(ConfigError):
            evaluate_snapshot(report.snapshots[0].path, get_task("cable-ring"), 1, 0)


class TestBench:
    def test_fast_suites(self):
        results = run_bench([1, 6, 11])
        assert [r.name for r in results] == ["crosscorr-oracle", "state-dimensions", "hull-and-ring-assignment"]
        assert all(r.passed for r in results), [r.detail for r in results]

    def test_slow_suite_needs_full(self):
        assert 8 not in FAST_SUITES
        (res,) = run_bench([8])
        assert not res.passed and res.detail == "needs --full"


class TestOverfitDeviation:
    def test_own_actions_match_and_shifts_are_measured(self, small_calib):
        rng = np.random.default_rng(2)
        model = TransportModel("split", crop_size=4, n_rots=4, feature_dim=2, width=4, seed=1)
        obs = rng.random((*small_calib.shape, 6)).astype(np.float32)
        goal = rng.random((*small_calib.shape, 6)).astype(np.float32)
        a = policy_act(model, obs, goal, small_calib)
        ep = Episode("cable-line-notarget", 0, [obs, goal], a.as_array()[None])
        assert overfit_deviation(model, ep, small_calib) == (0, 0)

        u, v = world_to_pixel(a.place.xy, small_calib)
        v2 = v + 3 if v + 3 < small_calib.img_w else v - 3
        moved = pixel_to_world((u, v2), small_calib)
        off = PickPlaceAction(a.pick, Pose2(float(moved[0]), float(moved[1]), a.place.theta + math.pi))
        ep = Episode("cable-line-notarget", 0, [obs, goal], off.as_array()[None])
        assert overfit_deviation(model, ep, small_calib) == (3, 2)


class TestCli:
    def test_stats_missing_manifest(self, tmp_path):
        assert main(["stats", "--manifest", str(tmp_path)]) == EXIT_CONFIG

    def test_stats(self, fabric_cover_dataset, capsys):
        root, _ = fabric_cover_dataset
        assert main(["stats", "--manifest", str(root)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "\"episodes\": 2" in out and "\"task\": \"fabric-cover\"" in out

    def test_unknown_task(self):
        assert main(["eval", "--task", "cable-knot", "--model", "demonstrator", "--episodes", "1"]) == EXIT_CONFIG
