"""End-to-end CLI behavior: outputs, determinism, error paths, exit codes."""

import json
import shutil

import numpy as np
import pytest

from relia.cli import main

TINY_CONFIG = {
    "sample_rate": 4000, "window_len": 256, "hop_len": 256, "n_mels": 20,
    "clip_seconds": 1.0, "fmin": 50.0, "fmax": 2000.0,
    "stem_channels": 6, "stages": [[1, 6, 1], [1, 12, 2]],
    "epochs": 2, "batch_size": 16, "seed": 11,
    "loss": "focal", "balance": "gauss", "snr_db": 20.0,
    "members": 2, "folds": 2, "quantile": 0.5,
    "synth_n_pos": 8, "synth_n_neg": 24, "synth_snr_db": 20.0,
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Shared config file + synthetic corpus + one trained run."""
    root = tmp_path_factory.mktemp("cli")
    config = root / "config.json"
    config.write_text(json.dumps(TINY_CONFIG))
    assert main(["synthetic", "--config", str(config), "--out", str(root / "corpus")]) == 0
    assert main([
        "train-ensemble", "--config", str(config),
        "--manifest", str(root / "corpus" / "manifest.csv"), "--out", str(root / "run"),
    ]) == 0
    return root, config


class TestSynthetic:
    def test_corpus_layout(self, workspace):
        root, _ = workspace
        corpus = root / "corpus"
        wavs = sorted(p.name for p in corpus.glob("*.wav"))
        assert len(wavs) == 32
        manifest = (corpus / "manifest.csv").read_text().strip().splitlines()
        assert manifest[0] == "file_name,label"
        assert len(manifest) == 33
        assert sum(1 for line in manifest[1:] if line.endswith(",p")) == 8


class TestFeaturize:
    def test_empty_manifest_exits_zero(self, tmp_path, workspace):
        _, config = workspace
        manifest = tmp_path / "empty.csv"
        manifest.write_text("file_name,label\n")
        code = main(["featurize", "--config", str(config), "--manifest", str(manifest),
                     "--out", str(tmp_path / "feats")])
        assert code == 0
        index = (tmp_path / "feats" / "index.csv").read_text().strip().splitlines()
        assert index == ["file_name,feature_file,label"]

    def test_idempotent_outputs(self, tmp_path, workspace):
        root, config = workspace
        manifest = str(root / "corpus" / "manifest.csv")
        out = tmp_path / "feats"
        assert main(["featurize", "--config", str(config), "--manifest", manifest, "--out", str(out)]) == 0
        first = {p.name: p.read_bytes() for p in out.iterdir()}
        assert main(["featurize", "--config", str(config), "--manifest", manifest, "--out", str(out)]) == 0
        second = {p.name: p.read_bytes() for p in out.iterdir()}
        assert first == second
        assert len([n for n in first if n.endswith(".melspec")]) == 32

    def test_corrupt_file_reported_and_nonzero_exit(self, tmp_path, workspace, capsys):
        root, config = workspace
        corpus = tmp_path / "corpus"
        corpus.mkdir()
        names = []
        for i, wav in enumerate(sorted((root / "corpus").glob("*.wav"))[:5]):
            target = corpus / wav.name
            shutil.copy(wav, target)
            names.append(wav.name)
        (corpus / names[2]).write_bytes(b"not a wav at all")
        manifest = corpus / "manifest.csv"
        manifest.write_text("file_name,label\n" + "\n".join(f"{n},n" for n in names) + "\n")
        out = tmp_path / "feats"
        code = main(["featurize", "--config", str(config), "--manifest", str(manifest), "--out", str(out)])
        assert code == 1
        assert len(list(out.glob("*.melspec"))) == 4
        err = capsys.readouterr().err
        assert names[2] in err


class TestTrainEnsemble:
    def test_output_files(self, workspace):
        root, _ = workspace
        run = root / "run"
        for fold in (0, 1):
            fold_dir = run / f"fold{fold}"
            assert (fold_dir / "member0.nnwt").is_file()
            assert (fold_dir / "member1.nnwt").is_file()
            assert (fold_dir / "history_member0.csv").is_file()
            assert (fold_dir / "ensemble.json").is_file()
        assert (run / "folds.csv").is_file()
        assert (run / "predictions.csv").is_file()

    def test_report_schema_and_fold_count(self, workspace):
        root, _ = workspace
        report = json.loads((root / "run" / "report.json").read_text())
        assert set(report) == {"auc", "fold_aucs", "fold_mean", "fold_std", "selective", "threshold_used"}
        assert len(report["fold_aucs"]) == 2
        assert report["fold_mean"] == pytest.approx(np.mean(report["fold_aucs"]))

    def test_predictions_cover_manifest(self, workspace):
        root, _ = workspace
        lines = (root / "run" / "predictions.csv").read_text().strip().splitlines()
        assert lines[0] == "file_name,prob_positive,uncertainty,decision"
        assert len(lines) == 33
        decisions = {line.split(",")[-1] for line in lines[1:]}
        assert decisions <= {"accept", "refer"}


class TestPredict:
    def test_single_member_has_zero_uncertainty(self, tmp_path, workspace):
        root, config = workspace
        run = tmp_path / "m1"
        assert main([
            "train-ensemble", "--config", str(config), "--members", "1", "--epochs", "1",
            "--manifest", str(root / "corpus" / "manifest.csv"), "--out", str(run),
        ]) == 0
        out = tmp_path / "pred"
        assert main([
            "predict", "--config", str(config), "--ensemble-dir", str(run / "fold0"),
            "--manifest", str(root / "corpus" / "manifest.csv"), "--out", str(out),
        ]) == 0
        lines = (out / "predictions.csv").read_text().strip().splitlines()
        assert len(lines) == 33
        for line in lines[1:]:
            assert float(line.split(",")[2]) == 0.0

    def test_rerun_is_bit_identical(self, tmp_path, workspace):
        root, config = workspace
        out = tmp_path / "pred"
        args = [
            "predict", "--config", str(config), "--ensemble-dir", str(root / "run" / "fold0"),
            "--manifest", str(root / "corpus" / "manifest.csv"), "--out", str(out),
        ]
        assert main(args) == 0
        first = (out / "predictions.csv").read_bytes()
        assert main(args) == 0
        assert (out / "predictions.csv").read_bytes() == first

    def test_validation_scale_row_count(self, tmp_path, workspace):
        """A 218-entry manifest produces exactly 218 prediction rows."""
        root, config = workspace
        cfg = dict(TINY_CONFIG, synth_n_pos=25, synth_n_neg=193, seed=21)
        big_config = tmp_path / "big.json"
        big_config.write_text(json.dumps(cfg))
        assert main(["synthetic", "--config", str(big_config), "--out", str(tmp_path / "val")]) == 0
        out = tmp_path / "pred"
        assert main([
            "predict", "--config", str(config), "--ensemble-dir", str(root / "run" / "fold0"),
            "--manifest", str(tmp_path / "val" / "manifest.csv"), "--out", str(out),
        ]) == 0
        lines = (out / "predictions.csv").read_text().strip().splitlines()
        assert len(lines) == 219  # header + 218 rows


class TestEvaluate:
    def test_report_written(self, tmp_path, workspace):
        root, config = workspace
        out = tmp_path / "eval"
        assert main([
            "evaluate", "--config", str(config),
            "--predictions", str(root / "run" / "predictions.csv"),
            "--manifest", str(root / "corpus" / "manifest.csv"), "--out", str(out),
        ]) == 0
        report = json.loads((out / "evaluation.json").read_text())
        assert 0.0 <= report["auc"] <= 1.0
        assert report["selective"]["n_low"] + report["selective"]["n_high"] == 32


class TestGrid:
    def test_six_row_summary(self, tmp_path, workspace):
        root, config = workspace
        out = tmp_path / "grid"
        assert main([
            "grid", "--config", str(config), "--members", "1", "--epochs", "1",
            "--manifest", str(root / "corpus" / "manifest.csv"), "--out", str(out),
        ]) == 0
        lines = (out / "grid_summary.csv").read_text().strip().splitlines()
        assert lines[0] == "loss,balance,fold_mean_auc,fold_std_auc"
        cells = [tuple(line.split(",")[:2]) for line in lines[1:]]
        assert cells == [
            ("ce", "none"), ("ce", "dup"), ("ce", "gauss"),
            ("focal", "none"), ("focal", "dup"), ("focal", "gauss"),
        ]
        for loss_token, balance_token in cells:
            assert (out / f"{loss_token}_{balance_token}" / "report.json").is_file()


class TestErrors:
    def test_missing_manifest_is_clean_error(self, workspace, capsys):
        _, config = workspace
        code = main(["train-ensemble", "--config", str(config), "--manifest", "/nonexistent.csv", "--out", "/tmp/x"])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"not_a_key": 1}))
        assert main(["synthetic", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
        assert "unknown config keys" in capsys.readouterr().err
