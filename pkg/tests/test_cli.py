"""Command-line workflow tests; everything runs headless in a temp directory."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from dabdesign.cli import main

SPEC = {
    "strategy": "SPS",
    "objective": "min_current_stress",
    "target_power": 150.0,
    "v_in": 200.0,
    "v_out": 160.0,
    "optimizer": "PSO",
}


def write_spec(tmp_path: Path, **overrides) -> Path:
    doc = dict(SPEC)
    doc.update(overrides)
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


class TestDesign:
    def test_design_writes_report(self, tmp_path):
        spec = write_spec(tmp_path)
        out = tmp_path / "out"
        assert main(["design", "--spec", str(spec), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["spec"]["strategy"] == "SPS"
        assert report["result"]["feasible"] is True
        assert (out / "landscape.csv").exists()
        assert (out / "waveform.csv").exists()

    def test_design_rejects_incomplete_spec(self, tmp_path, capsys):
        spec = write_spec(tmp_path, strategy=None)
        assert main(["design", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 2
        assert "missing" in capsys.readouterr().err

    def test_design_rejects_out_of_range(self, tmp_path, capsys):
        spec = write_spec(tmp_path, target_power=5000.0)
        assert main(["design", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 2
        assert "target_power" in capsys.readouterr().err

    def test_design_deterministic(self, tmp_path):
        spec = write_spec(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        main(["design", "--spec", str(spec), "--out", str(a)])
        main(["design", "--spec", str(spec), "--out", str(b)])
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


@pytest.mark.slow
class TestTrainEval:
    def test_train_then_eval(self, tmp_path):
        ckpt = tmp_path / "pair.json"
        data = tmp_path / "holdout"
        code = main(["train", "--data-size", "4", "--seed", "3", "--grid", "128",
                     "--epochs", "40", "--out", str(ckpt),
                     "--save-data", str(data)])
        assert code == 0
        assert ckpt.exists()
        doc = json.loads(ckpt.read_text())
        assert doc["meta"]["lambda_phys"] == 1.0
        assert (data / "manifest.json").exists()

        code = main(["eval", "--pair", str(ckpt), "--holdout", str(data),
                     "--json-out", str(tmp_path / "eval.json")])
        assert code == 0
        eval_doc = json.loads((tmp_path / "eval.json").read_text())
        assert len(eval_doc["per_point"]) == 4

    def test_train_no_physics_flag(self, tmp_path):
        ckpt = tmp_path / "baseline.json"
        code = main(["train", "--data-size", "3", "--seed", "3", "--grid", "128",
                     "--epochs", "25", "--out", str(ckpt)])
        assert code == 0
        code = main(["train", "--data-size", "3", "--seed", "3", "--grid", "128",
                     "--epochs", "25", "--no-physics", "--out", str(ckpt)])
        assert code == 0
        assert json.loads(ckpt.read_text())["meta"]["lambda_phys"] == 0.0


class TestEvalErrors:
    def test_empty_holdout_manifest_fails(self, tmp_path):
        data = tmp_path / "holdout"
        data.mkdir()
        (data / "manifest.json").write_text(json.dumps(
            {"provenance": "ideal", "grid": {"samples_per_period": 128,
                                             "dt": 7.8125e-08}, "points": []}))
        pair = tmp_path / "missing-pair.json"
        code = main(["eval", "--pair", str(pair), "--holdout", str(data)])
        assert code != 0


class TestExport:
    def test_export_unknown_session(self, tmp_path, capsys):
        code = main(["export", "--session", "nope",
                     "--data-dir", str(tmp_path / "data"),
                     "--out", str(tmp_path / "out")])
        assert code == 2

    def test_export_round_trip(self, tmp_path):
        from dabdesign.service import ApiConfig, create_app
        from fastapi.testclient import TestClient
        config = ApiConfig(data_dir=tmp_path / "data")
        client = TestClient(create_app(config))
        sid = client.post("/sessions", json={}).json()["session_id"]
        client.post(f"/sessions/{sid}/messages", json={"text": "use tps"})
        out = tmp_path / "exported"
        code = main(["export", "--session", sid,
                     "--data-dir", str(tmp_path / "data"), "--out", str(out)])
        assert code == 0
        doc = json.loads((out / "session.json").read_text())
        assert doc["session_id"] == sid
        assert doc["state"]["phase"] == "CollectObjective"
