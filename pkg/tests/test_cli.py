import hashlib
import json
from pathlib import Path

import pytest

from hornnet.cli import main

FIXTURE = Path(__file__).parent / "data" / "tiny_players.csv"

RULES = (
    "Final_score :- CT_concepts, CT_skills.\n"
    "CT_concepts :- Conditional, Loop.\n"
    "CT_skills :- Debug, Simulation, Function.\n"
)


def digest_dir(path: Path) -> dict:
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(path.iterdir())
        if p.is_file()
    }


@pytest.fixture
def rules_file(tmp_path):
    p = tmp_path / "ct.rules"
    p.write_text(RULES)
    return p


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "data"
    assert main(["synth", "--rows", "160", "--test-rows", "48", "--seed", "7", "--out", str(out)]) == 0
    return out


class TestSynth:
    def test_writes_csvs_and_manifest(self, synth_dir):
        assert (synth_dir / "train.csv").exists()
        assert (synth_dir / "test.csv").exists()
        manifest = json.loads((synth_dir / "manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert manifest["seed"] == 7
        assert set(manifest["outputs"]) == {"train.csv", "test.csv"}
        train_lines = (synth_dir / "train.csv").read_text().splitlines()
        assert len(train_lines) == 161  # header + rows

    def test_zero_rows_usage_error(self, tmp_path):
        assert main(["synth", "--rows", "0", "--out", str(tmp_path)]) == 2

    def test_reproducible_digests(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["synth", "--rows", "120", "--test-rows", "40", "--seed", "3", "--out", str(out)]) == 0
        assert digest_dir(a) == digest_dir(b)


class TestTrain:
    def test_nsai_training(self, tmp_path, synth_dir, rules_file):
        out = tmp_path / "model"
        code = main([
            "train", "--data", str(synth_dir / "train.csv"),
            "--rules", str(rules_file), "--seed", "7", "--out", str(out),
        ])
        assert code == 0
        assert (out / "model.npz").exists()
        report = json.loads((out / "train_report.json").read_text())
        assert report["model"] == "nsai"

    def test_smote_augmented_baseline(self, tmp_path, synth_dir):
        out = tmp_path / "model"
        code = main([
            "train", "--data", str(synth_dir / "train.csv"),
            "--augment", "smote", "--seed", "7", "--out", str(out),
        ])
        assert code == 0
        report = json.loads((out / "train_report.json").read_text())
        assert report["model"] == "baseline"
        counts = report["class_counts"]
        assert counts["High"] == counts["Low"]

    def test_nsai_without_rules_usage_error(self, tmp_path, synth_dir):
        code = main([
            "train", "--data", str(synth_dir / "train.csv"),
            "--model", "nsai", "--out", str(tmp_path / "m"),
        ])
        assert code == 2

    def test_manifest_rerun_reproduces_outputs(self, tmp_path, synth_dir, rules_file):
        a, b = tmp_path / "a", tmp_path / "b"
        argv = ["train", "--data", str(synth_dir / "train.csv"), "--rules", str(rules_file), "--seed", "4"]
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        assert digest_dir(a) == digest_dir(b)


class TestEvaluateExplainExtract:
    @pytest.fixture
    def trained(self, tmp_path, synth_dir, rules_file):
        out = tmp_path / "model"
        main(["train", "--data", str(synth_dir / "train.csv"), "--rules", str(rules_file), "--seed", "7", "--out", str(out)])
        return out / "model.npz"

    @pytest.fixture
    def baseline(self, tmp_path, synth_dir):
        out = tmp_path / "baseline"
        main(["train", "--data", str(synth_dir / "train.csv"), "--seed", "7", "--out", str(out)])
        return out / "model.npz"

    def test_evaluate_fixture_metrics(self, tmp_path, trained, synth_dir):
        out = tmp_path / "eval"
        code = main(["evaluate", "--model", str(trained), "--data", str(synth_dir / "test.csv"), "--out", str(out)])
        assert code == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert 0.0 <= metrics["accuracy"] <= 1.0
        assert (out / "metrics.txt").read_text().count("%") >= 1

    def test_extract_emits_rules_text(self, tmp_path, trained, synth_dir, capsys):
        out = tmp_path / "rules"
        code = main(["extract", "--model", str(trained), "--data", str(synth_dir / "train.csv"), "--out", str(out)])
        assert code == 0
        text = (out / "rules.txt").read_text()
        assert text.splitlines()[0].startswith("CT_concepts: ")
        assert "Final_score: " in text
        payload = json.loads((out / "rules.json").read_text())
        assert payload["fidelity"] >= 0.0

    def test_extract_on_baseline_is_runtime_error(self, tmp_path, baseline, synth_dir, capsys):
        code = main(["extract", "--model", str(baseline), "--data", str(synth_dir / "train.csv"), "--out", str(tmp_path / "x")])
        assert code == 1
        assert "explain" in capsys.readouterr().err

    def test_explain_outputs(self, tmp_path, baseline, synth_dir):
        out = tmp_path / "exp"
        code = main([
            "explain", "--model", str(baseline), "--data", str(synth_dir / "test.csv"),
            "--samples", "200", "--seed", "1", "--out", str(out),
        ])
        assert code == 0
        payload = json.loads((out / "global_explanation.json").read_text())
        assert set(payload["mean_abs"]) == set(json.loads((out / "global_explanation.json").read_text())["mean_signed"])
        assert (out / "mispredictions.txt").exists()


class TestCompare:
    def test_compare_runs_and_reproduces(self, tmp_path, rules_file):
        data = tmp_path / "d"
        main(["synth", "--rows", "120", "--test-rows", "40", "--seed", "2", "--out", str(data)])
        a, b = tmp_path / "ra", tmp_path / "rb"
        argv = [
            "compare", "--train", str(data / "train.csv"), "--test", str(data / "test.csv"),
            "--rules", str(rules_file), "--seed", "2", "--cv-folds", "3",
        ]
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        assert digest_dir(a) == digest_dir(b)
        report = json.loads((a / "report.json").read_text())
        assert set(report["test_metrics"]) == {"deep_nn", "deep_nn_smote", "deep_nn_autoencoder", "nsai"}


class TestFlagResolution:
    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HORNNET_ROWS", "64")
        out = tmp_path / "d"
        assert main(["synth", "--test-rows", "32", "--seed", "1", "--out", str(out)]) == 0
        assert len((out / "train.csv").read_text().splitlines()) == 65

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"rows": 72, "test_rows": 36}))
        out = tmp_path / "d"
        assert main(["synth", "--seed", "1", "--out", str(out), "--config", str(cfg)]) == 0
        assert len((out / "train.csv").read_text().splitlines()) == 73

    def test_flag_beats_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"rows": 72}))
        out = tmp_path / "d"
        assert main(["synth", "--rows", "96", "--test-rows", "36", "--seed", "1", "--out", str(out), "--config", str(cfg)]) == 0
        assert len((out / "train.csv").read_text().splitlines()) == 97

    def test_runtime_error_exit_code(self, tmp_path, capsys):
        code = main(["evaluate", "--model", str(tmp_path / "missing.npz"), "--data", str(FIXTURE), "--out", str(tmp_path)])
        assert code == 1
        assert "error" in capsys.readouterr().err
