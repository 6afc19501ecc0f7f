"""Record stream, export and harness output tests."""
import json

import numpy as np
import pytest

from agiledrive.agents import EsConfig
from agiledrive.config import (ExperimentConfig, RunConfig, TrackSpec,
                               with_overrides)
from agiledrive.dynamics import ControlCommand
from agiledrive.env import EnvConfig
from agiledrive.harness import (evaluate_policy, run_baseline, run_matrix,
                                run_training)
from agiledrive.mppi import MppiConfig
from agiledrive.records import (RecordWriter, export_steps, export_traces,
                                read_records)

SMALL = with_overrides(
    ExperimentConfig(),
    run=RunConfig(agent="zero", episodes=5, seed=3),
    mppi_base=MppiConfig(n_samples=64, horizon=5),
    mppi_baseline=MppiConfig(n_samples=64, horizon=5, temperature=0.1),
    env=EnvConfig(max_steps=40),
)


class TestRecordStream:
    def test_header_and_grouping(self, tmp_path):
        path = tmp_path / "r.jsonl"
        with RecordWriter(path, header={"seed": 7}) as writer:
            writer.write_meta(0, [0.0] * 7)
            writer.write_step({"episode": 0, "step": 0, "mode": "FORWARD",
                               "state": [0.0] * 7, "action": [0.0, 0.0],
                               "base": [0.0, 0.0], "applied": [0.0, 0.0],
                               "reward": 0.5, "collided": 0})
            writer.write_meta(1, [1.0] * 7)
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        assert lines[0]["type"] == "header"
        assert lines[0]["seed"] == 7
        episodes = read_records(path)
        assert [e.episode for e in episodes] == [0, 1]
        assert len(episodes[0].steps) == 1
        assert len(episodes[1].steps) == 0

    def test_step_for_unknown_episode_rejected(self, tmp_path):
        path = tmp_path / "r.jsonl"
        with RecordWriter(path) as writer:
            writer.write_step({"episode": 5, "step": 0, "mode": "FORWARD",
                               "state": [0.0], "action": None,
                               "base": [0, 0], "applied": [0, 0],
                               "reward": 0.0, "collided": 0})
        with pytest.raises(ValueError):
            read_records(path)


@pytest.fixture(scope="module")
def training_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    summary = run_training(SMALL, out)
    return out, summary


class TestHarnessOutputs:
    def test_summary_fields(self, training_run):
        _, summary = training_run
        for key in ("episodes", "mean_return", "final20_mean_return",
                    "final20_std_return", "total_steps", "collisions",
                    "mean_reset_steps", "label", "seed", "digest",
                    "reset_timeouts", "wall_clock_s"):
            assert key in summary
        assert summary["episodes"] == 5
        assert summary["reset_timeouts"] == 0

    def test_csv_layout_and_roundtrip(self, training_run):
        out, summary = training_run
        lines = (out / "train_log.csv").read_text().splitlines()
        assert lines[0] == "episode,return,steps,collided,reset_steps"
        assert len(lines) == 1 + summary["episodes"]
        returns = []
        for line in lines[1:]:
            episode, ret, steps, collided, reset_steps = line.split(",")
            returns.append(float(ret))
            assert int(steps) > 0
            assert collided in ("0", "1")
        assert np.mean(returns) == pytest.approx(summary["mean_return"],
                                                 abs=1e-12)

    def test_summary_json_matches_return(self, training_run):
        out, summary = training_run
        stored = json.loads((out / "summary.json").read_text())
        assert stored == summary

    def test_records_stream_replayable(self, training_run):
        out, _ = training_run
        episodes = read_records(out / "records.jsonl")
        assert len(episodes) >= 5

    def test_seed_matched_runs_identical_csv(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        run_training(SMALL, a)
        run_training(SMALL, b)
        assert (a / "train_log.csv").read_bytes() == \
            (b / "train_log.csv").read_bytes()
        assert (a / "records.jsonl").read_bytes() == \
            (b / "records.jsonl").read_bytes()

    def test_baseline_uses_comparison_planner(self, tmp_path):
        summary = run_baseline(SMALL, tmp_path / "base", episodes=3)
        assert summary["label"] == "baseline"
        assert summary["w_b"] == 1.0
        assert summary["episodes"] == 3

    def test_es_training_writes_checkpoint(self, tmp_path):
        config = with_overrides(
            SMALL,
            run=RunConfig(agent="es", episodes=10, seed=1),
            es=EsConfig(population=4, noise_sigma=0.1, learning_rate=0.1),
        )
        out = tmp_path / "es"
        summary = run_training(config, out)
        assert summary["es_updates"] == 2
        payload = np.load(out / "checkpoint.npz")
        assert payload["theta"].shape[0] > 0
        eval_summary = evaluate_policy(config, out / "checkpoint.npz",
                                       tmp_path / "eval", episodes=2)
        assert eval_summary["episodes"] == 2

    def test_matrix_produces_all_cells(self, tmp_path):
        config = with_overrides(
            SMALL,
            run=RunConfig(agent="zero", episodes=4, seed=0),
            es=EsConfig(population=4, noise_sigma=0.1, learning_rate=0.1),
        )
        summaries = run_matrix(config, tmp_path / "matrix")
        assert set(summaries) == {"zero_wb0", "zero_wb1", "es_wb0",
                                  "es_wb1", "baseline"}
        stored = json.loads(
            (tmp_path / "matrix" / "matrix_summary.json").read_text())
        assert set(stored) == set(summaries)


class TestExports:
    def test_export_steps_csv(self, training_run, tmp_path):
        out, _ = training_run
        dest = tmp_path / "steps.csv"
        n = export_steps(out / "records.jsonl", "csv", dest)
        lines = dest.read_text().splitlines()
        assert lines[0].startswith("episode,step,forward_mode,x,y,yaw,v,")
        assert len(lines) == n + 1
        first = [float(v) for v in lines[1].split(",")]
        assert len(first) == len(lines[0].split(","))

    def test_export_steps_npz(self, training_run, tmp_path):
        out, _ = training_run
        dest = tmp_path / "steps.npz"
        n = export_steps(out / "records.jsonl", "npz", dest)
        payload = np.load(dest)
        assert payload["data"].shape == (n, 18)
        assert payload["columns"].shape == (18,)

    def test_export_steps_unknown_format(self, training_run, tmp_path):
        out, _ = training_run
        with pytest.raises(ValueError):
            export_steps(out / "records.jsonl", "parquet", tmp_path / "x")

    def test_export_traces_files(self, training_run, tmp_path):
        out, _ = training_run
        dest = tmp_path / "viz"
        count = export_traces(out / "records.jsonl", SMALL.track.build(),
                              dest)
        assert count >= 5
        traces = (dest / "traces.csv").read_text().splitlines()
        assert traces[0] == "episode,step,forward_mode,x,y"
        assert len(traces) > 1
        track_rows = (dest / "track.csv").read_text().splitlines()
        assert track_rows[0] == "ring,x,y"
        # one row per boundary vertex
        assert len(track_rows) == 1 + 2 * 96
        svg = (dest / "traces.svg").read_text()
        assert svg.startswith("<svg")
        assert svg.count("<polyline") >= 3
