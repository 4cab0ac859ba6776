"""
Command-line surface: tiny end-to-end runs through click's test runner.
"""
import json
import os
from pathlib import Path

import pytest
from click.testing import CliRunner

import cli as cli_module
from cli import cli


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def circuit_dir(runner, tmp_path):
    out = tmp_path / "circuits"
    result = runner.invoke(cli, ["generate-data", "--dataset", "circuits", "--num-graphs", "8",
                                 "--seed", "0", "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


class TestGenerateData:
    def test_writes_dataset_directory(self, circuit_dir):
        manifest = json.loads((circuit_dir / "manifest.json").read_text())
        assert manifest["name"] == "circuits"
        assert len(list((circuit_dir / "graphs").glob("*.txt"))) == 8
        assert len(list((circuit_dir / "arrays").glob("*.npz"))) == 8

    def test_unknown_dataset(self, runner):
        result = runner.invoke(cli, ["generate-data", "--dataset", "mnist"])
        assert result.exit_code != 0


class TestTrainEvaluate:
    def test_train_then_evaluate(self, runner, circuit_dir, tmp_path):
        with runner.isolated_filesystem(temp_dir=tmp_path) as cwd:
            result = runner.invoke(cli, ["train", "--model", "EIGN", "--dataset-dir", str(circuit_dir),
                                         "--hidden", "4", "--layers", "1", "--epochs", "1",
                                         "--checkpoint", "model.ckpt", "--out", "metrics.json"])
            assert result.exit_code == 0, result.output
            assert sorted(os.listdir(cwd)) == ["metrics.json", "model.ckpt"]
            report = json.loads(Path("metrics.json").read_text())
            assert report["selection_metric"] == "rmse"

            result = runner.invoke(cli, ["evaluate", "--checkpoint", "model.ckpt", "--dataset-dir", str(circuit_dir),
                                         "--split", "test", "--out", "eval.json"])
            assert result.exit_code == 0, result.output
            assert "rmse" in json.loads(Path("eval.json").read_text())
            assert sorted(os.listdir(cwd)) == ["eval.json", "metrics.json", "model.ckpt"]

    def test_missing_dataset_dir(self, runner, tmp_path):
        result = runner.invoke(cli, ["train", "--dataset-dir", str(tmp_path / "nowhere"), "--epochs", "1"])
        assert result.exit_code == 1
        assert "does not exist" in result.output

    def test_evaluate_rejects_foreign_file(self, runner, circuit_dir, tmp_path):
        ckpt = tmp_path / "orphan.ckpt"
        ckpt.write_bytes(b"\x00" * 16)
        result = runner.invoke(cli, ["evaluate", "--checkpoint", str(ckpt), "--dataset-dir", str(circuit_dir)])
        assert result.exit_code == 1
        assert "not an EIGN checkpoint" in result.output


class TestGridAndSweep:
    def test_grid_from_yaml(self, runner, circuit_dir, tmp_path):
        spec = tmp_path / "grid.yaml"
        spec.write_text("lr: [0.01]\nhidden: [4]\nlayers: [1, 2]\nrepeats: 1\n")
        table = tmp_path / "grid.csv"
        result = runner.invoke(cli, ["grid", "--dataset-dir", str(circuit_dir), "--grid", str(spec),
                                     "--epochs", "1", "--out", str(table)])
        assert result.exit_code == 0, result.output
        lines = table.read_text().splitlines()
        assert lines[0].startswith("lr,hidden,layers")
        assert len(lines) == 3

    def test_sweep_q(self, runner, circuit_dir, tmp_path):
        out = tmp_path / "sweep.json"
        result = runner.invoke(cli, ["sweep-q", "--dataset-dir", str(circuit_dir), "--multipliers", "0,1",
                                     "--hidden", "4", "--layers", "1", "--epochs", "1", "--out", str(out)])
        assert result.exit_code == 0, result.output
        rows = json.loads(out.read_text())
        assert [r["q_times_m"] for r in rows] == [0.0, 1.0]
        assert all(r["metric"] == "rmse" for r in rows)


class TestDumpLaplacian:
    def test_undirected_path(self, runner, tmp_path):
        graph = tmp_path / "path.txt"
        graph.write_text("3 2\n0 1 U\n1 2 U\n")
        out = tmp_path / "lap.txt"
        result = runner.invoke(cli, ["dump-laplacian", "--graph", str(graph), "--kind", "inv", "--out", str(out)])
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert len(lines) == 4
        assert lines[0] == "0 0 2 0"
        assert lines[-1] == "1 1 2 0"

    def test_bad_kind(self, runner, tmp_path):
        graph = tmp_path / "path.txt"
        graph.write_text("3 2\n0 1 U\n1 2 U\n")
        result = runner.invoke(cli, ["dump-laplacian", "--graph", str(graph), "--kind", "sideways"])
        assert result.exit_code == 1

    def test_missing_graph_file(self, runner, tmp_path):
        result = runner.invoke(cli, ["dump-laplacian", "--graph", str(tmp_path / "none.txt")])
        assert result.exit_code == 1


class TestCheckInvariants:
    def test_small_suite_passes(self, runner, tmp_path):
        out = tmp_path / "suite.json"
        result = runner.invoke(cli, ["--threads", "1", "check-invariants", "--trials", "4", "--seed", "0",
                                     "--out", str(out)])
        assert result.exit_code == 0, result.output
        payload = json.loads(out.read_text())
        assert payload["passed"]
        assert len(payload["reports"]) == 9


class TestReproduce:
    def test_missing_data_dir(self, runner, tmp_path):
        result = runner.invoke(cli, ["reproduce", "--table", "synthetic", "--data-dir", str(tmp_path / "absent"),
                                     "--out", str(tmp_path / "r.json")])
        assert result.exit_code == 1
        assert not (tmp_path / "r.json").exists()

    def test_without_out_prints_and_writes_nothing(self, runner, tmp_path, monkeypatch):
        monkeypatch.setattr(cli_module, "_reproduce_synthetic", lambda rep: ([], []))
        with runner.isolated_filesystem(temp_dir=tmp_path) as cwd:
            result = runner.invoke(cli, ["reproduce", "--table", "synthetic"])
            assert result.exit_code == 0, result.output
            assert '"table": "synthetic"' in result.output
            assert os.listdir(cwd) == []
