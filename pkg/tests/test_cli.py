import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from scenesim.cli import main
from scenesim.ingest import write_tracking_csv
from scenesim.scenes import load_scene_archive

PHASES_SHORT = "warmup,repeat1,repeat2"


@pytest.fixture()
def runner():
    return CliRunner()


class TestSynth:
    def test_deterministic_archives(self, runner, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for out in (a, b):
            res = runner.invoke(
                main, ["synth", "--seed", "7", "--n", "20", "--desk", "--out", str(out)]
            )
            assert res.exit_code == 0, res.output
        assert a.read_text() == b.read_text()
        assert len(load_scene_archive(a)) == 20

    def test_missing_flag_usage_error(self, runner):
        res = runner.invoke(main, ["synth", "--seed", "1"])
        assert res.exit_code == 2

    def test_unknown_subcommand(self, runner):
        assert runner.invoke(main, ["frobnicate"]).exit_code == 2


class TestPipeline:
    def test_synth_pretrain_simulate_evaluate(self, runner, tmp_path):
        archive = tmp_path / "scenes.jsonl"
        ckpt = tmp_path / "model.json"
        out_dir = tmp_path / "study"
        res = runner.invoke(
            main, ["synth", "--seed", "3", "--n", "16", "--desk", "--out", str(archive)]
        )
        assert res.exit_code == 0, res.output
        res = runner.invoke(
            main,
            [
                "pretrain",
                "--dataset", str(archive),
                "--out", str(ckpt),
                "--pairs", "20",
                "--width", "8",
                "--embed-dim", "8",
                "--epochs", "1",
            ],
        )
        assert res.exit_code == 0, res.output

        cohort_file = tmp_path / "cohort.json"
        cohort_file.write_text(
            json.dumps(
                [
                    {"annotator_id": "c0", "beta": 0.4, "tau": 50.0, "base_skip_rate": 0.0},
                    {"annotator_id": "c1", "beta": 0.4, "latent": "archetype"},
                ]
            )
        )
        res = runner.invoke(
            main,
            [
                "simulate",
                "--dataset", str(archive),
                "--checkpoint", str(ckpt),
                "--out-dir", str(out_dir),
                "--cohort", str(cohort_file),
                "--tuple-size", "4",
                "--warmup-quota", "1",
                "--repeat-quota", "2",
                "--train-quota", "1",
                "--test-quota", "1",
                "--epochs", "1",
                "--d-ord", "2",
                "--bootstrap", "2",
            ],
        )
        assert res.exit_code == 0, res.output
        report = json.loads((out_dir / "report.json").read_text())
        assert set(report["consistencies"]) == {"c0", "c1"}

        # evaluate must reproduce the simulation-time report exactly.
        out_json = tmp_path / "replayed.json"
        res = runner.invoke(
            main, ["evaluate", "--logs-dir", str(out_dir), "--out", str(out_json)]
        )
        assert res.exit_code == 0, res.output
        assert out_json.read_text() == (out_dir / "report.json").read_text()

        exp_dir = tmp_path / "export"
        res = runner.invoke(
            main, ["export", "--logs-dir", str(out_dir), "--out-dir", str(exp_dir)]
        )
        assert res.exit_code == 0, res.output
        assert (exp_dir / "report.csv").read_text() == (out_dir / "report.csv").read_text()


class TestIngest:
    def test_ingest_csv(self, runner, tmp_path):
        # Reuse the clean-table helper from the ingest test suite.
        from test_ingest import make_clean_table

        csv_path = tmp_path / "tracking.csv"
        write_tracking_csv(make_clean_table(duration_s=20.0), csv_path)
        out = tmp_path / "scenes.jsonl"
        res = runner.invoke(
            main, ["ingest", "--csv", str(csv_path), "--out", str(out)]
        )
        assert res.exit_code == 0, res.output
        assert len(load_scene_archive(out)) > 0

    def test_bad_csv_exit_nonzero(self, runner, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("frame,agent_id,team,x,y\n0,a,home,not-a-number,2\n")
        res = runner.invoke(
            main, ["ingest", "--csv", str(bad), "--out", str(tmp_path / "o.jsonl")]
        )
        assert res.exit_code == 1
