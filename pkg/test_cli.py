import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

import dataset_store as store
from detector import reconstruction_errors
from features import FEATURE_NAMES
from gw_shm import main

SMALL_CONFIG = {
    "name": "cli-small",
    "temperatures": [20, 30, 40],
    "paths": [
        {"path_id": "H1", "tx_rx_distance": 180.0, "orientation": "horizontal"},
        {"path_id": "V1", "tx_rx_distance": 160.0, "orientation": "vertical"},
    ],
    "conditions": [{"kind": "Baseline"}, {"kind": "TRF", "sizes": [20]}, {"kind": "LFA", "sizes": [20]}],
    "noise": {"snr_db": 20.0, "pink_fraction": 0.5, "copies": 4},
    "train": {"learning_rate": 0.01, "batch_size": 8, "epochs": 20},
    "search": {"learning_rate": [0.01], "batch_size": [8], "epochs": [2, 3], "iterations": 2},
    "kfold": 2,
    "seed": 99,
}


def _write_config(path: Path, **changes) -> str:
    data = dict(SMALL_CONFIG, **changes)
    path.write_text(json.dumps(data))
    return str(path)


def _run_pipeline(config: str, out: Path) -> None:
    common = ["--config", config, "--out", str(out)]
    assert main(["synth", "--augment"] + common) == 0
    assert main(["features"] + common) == 0
    assert main(["train"] + common) == 0
    assert main(["eval", "--svg"] + common) == 0
    assert main(["export"] + common) == 0


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    config = _write_config(base / "small.json")
    out = base / "out"
    _run_pipeline(config, out)
    return config, out


def test_synth_writes_clean_and_noisy_records(run):
    _, out = run
    manifest = store.load_manifest(out / "dataset")
    assert len(manifest.records) == 18 + 72
    assert manifest.counts() == {"Baseline": 6, "TRF": 6, "LFA": 6,
                                 "Baseline+noise": 24, "TRF+noise": 24, "LFA+noise": 24}


def test_features_use_the_noisy_copies(run):
    _, out = run
    frame = store.read_features_csv(out / "features.csv")
    assert len(frame) == 72
    assert (frame["noise_copy"] > 0).all()
    assert np.isfinite(store.feature_matrix(frame)).all()


def test_train_writes_model_artifacts(run):
    _, out = run
    model_dir = out / "model"
    ckpt = store.load_checkpoint(model_dir / "checkpoint.json")
    assert ckpt.seed == 99
    assert len(ckpt.loss_history) == 20
    assert ckpt.detector.model.parameter_count == 9696

    split = store.load_split(model_dir / "split.json")
    parts = pd.Series(list(split.values())).value_counts().to_dict()
    assert parts == {"train": 12, "val": 5, "test": 7}
    assert all(record_id.startswith("Baseline_") for record_id in split)


def test_eval_report_and_predictions(run):
    _, out = run
    report = json.loads((out / "eval_report.json").read_text())
    assert [c["case"] for c in report["cases"]] == ["Test Baseline", "TRF 20mm", "LFA 20mm"]
    for case in report["cases"]:
        assert 0.0 <= case["accuracy"] <= 100.0
        assert 0.0 <= case["f1"] <= 100.0

    predictions = pd.read_csv(out / "predictions.csv")
    assert len(predictions) == 7 + 24 + 24
    assert set(predictions["prediction"]) <= {"Healthy", "Damaged"}
    assert (out / "error_histogram.svg").exists()


def test_export_matches_training_image(run):
    _, out = run
    image = (out / "model" / "detector.gwae").read_bytes()
    assert len(image) < 64 * 1024
    exported = out / "copy.gwae"
    assert main(["export", "--out", str(out), "--image", str(exported)]) == 0
    assert exported.read_bytes() == image


def test_infer_healthy_row_exits_zero(run, capsys):
    _, out = run
    ckpt = store.load_checkpoint(out / "model" / "checkpoint.json")
    split = store.load_split(out / "model" / "split.json")
    frame = store.read_features_csv(out / "features.csv")
    train_rows = frame[frame["record_id"].map(split.get) == "train"]
    errors = reconstruction_errors(ckpt.detector.model, ckpt.detector.scaler.transform(store.feature_matrix(train_rows)))
    row = train_rows["record_id"].iloc[int(np.argmin(errors))]

    code = main(["infer", "--out", str(out), "--features", str(out / "features.csv"), "--row", row])
    assert code == 0
    record_id, error, prediction = capsys.readouterr().out.strip().split(", ")
    assert record_id == row
    assert prediction == "Healthy"
    assert float(error) == pytest.approx(float(np.min(errors)), rel=1e-4, abs=1e-9)


def test_infer_damaged_row_exits_three(run, tmp_path, capsys):
    _, out = run
    frame = store.read_features_csv(out / "features.csv").iloc[:1].copy()
    frame[FEATURE_NAMES] = np.where(np.arange(16) % 2 == 0, 1e6, -1e6).reshape(1, -1)
    crafted = tmp_path / "crafted.csv"
    frame.to_csv(crafted, index=False)

    code = main(["infer", "--image", str(out / "model" / "detector.gwae"), "--features", str(crafted)])
    assert code == 3
    assert capsys.readouterr().out.strip().endswith("Damaged")


def test_infer_from_record_file(run, capsys):
    _, out = run
    manifest = store.load_manifest(out / "dataset")
    entry = next(e for e in manifest.records if e.condition == "LFA" and e.noise_copy == 1)
    code = main(["infer", "--out", str(out), "--record", str(out / "dataset" / entry.file), "--bench", "5"])
    assert code in (0, 3)
    assert capsys.readouterr().out.startswith(entry.record_id + ", ")


def test_corrupt_image_exits_four(run, tmp_path, capsys):
    _, out = run
    image = bytearray((out / "model" / "detector.gwae").read_bytes())
    image[len(image) // 2] ^= 0xFF
    broken = tmp_path / "broken.gwae"
    broken.write_bytes(bytes(image))

    code = main(["infer", "--image", str(broken), "--features", str(out / "features.csv")])
    assert code == 4
    assert "error[bad-crc]" in capsys.readouterr().err


def test_training_without_baseline_rows(run, tmp_path, capsys):
    _, out = run
    frame = store.read_features_csv(out / "features.csv")
    damaged_only = tmp_path / "damaged.csv"
    frame[frame["condition"] != "Baseline"].to_csv(damaged_only, index=False)

    code = main(["train", "--out", str(tmp_path / "model-out"), "--features", str(damaged_only)])
    assert code == 2
    assert "error[no-baseline-rows]" in capsys.readouterr().err
    assert not (tmp_path / "model-out" / "model" / "checkpoint.json").exists()


def test_features_need_reference_baselines(tmp_path, capsys):
    config = _write_config(tmp_path / "no-ref.json", temperatures=[20, 40])
    out = tmp_path / "out"
    assert main(["synth", "--config", config, "--out", str(out)]) == 0
    assert main(["features", "--config", config, "--out", str(out)]) == 2
    assert "error[missing-baseline]" in capsys.readouterr().err
    assert main(["features", "--config", config, "--out", str(out), "--baseline-temperature", "40"]) == 0


def test_unwritable_output_directory(tmp_path, capsys):
    config = _write_config(tmp_path / "small.json")
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    code = main(["synth", "--config", config, "--out", str(blocker / "out")])
    assert code == 2
    assert "error[io-error]" in capsys.readouterr().err
    assert not (blocker.parent / "out" / "dataset" / "manifest.json").exists()


def test_bad_config_exits_two(tmp_path, capsys):
    config = tmp_path / "bad.json"
    config.write_text(json.dumps(dict(SMALL_CONFIG, train={"seed": 1})))
    assert main(["synth", "--config", str(config), "--out", str(tmp_path / "out")]) == 2
    assert "error[config-error]" in capsys.readouterr().err


def test_tuned_training_records_search_trials(run, tmp_path):
    config, out = run
    tuned = tmp_path / "tuned"
    code = main(["train", "--tune", "--config", config, "--out", str(tuned), "--features", str(out / "features.csv")])
    assert code == 0
    ckpt = store.load_checkpoint(tuned / "model" / "checkpoint.json")
    assert len(ckpt.search_trials) == 2
    assert ckpt.train_config.epochs in (2, 3)
    assert ckpt.train_config.seed == 99


def test_pipeline_is_byte_deterministic(run, tmp_path):
    config, out = run
    again = tmp_path / "again"
    _run_pipeline(config, again)
    for name in ("features.csv", "model/checkpoint.json", "model/detector.gwae", "model/split.json"):
        assert (again / name).read_bytes() == (out / name).read_bytes(), name


def test_eval_on_baseline_only_rows(run, tmp_path):
    _, out = run
    frame = store.read_features_csv(out / "features.csv")
    baseline_only = tmp_path / "baseline.csv"
    frame[frame["condition"] == "Baseline"].to_csv(baseline_only, index=False)

    code = main(["eval", "--out", str(tmp_path), "--features", str(baseline_only),
                 "--checkpoint", str(out / "model" / "checkpoint.json")])
    assert code == 0
    report = json.loads((tmp_path / "eval_report.json").read_text())
    assert [c["case"] for c in report["cases"]] == ["Test Baseline"]
    assert report["size_trends"] == {}


def test_eval_rejects_reordered_columns(run, tmp_path, capsys):
    _, out = run
    frame = store.read_features_csv(out / "features.csv")
    columns = list(frame.columns)
    columns[-1], columns[-2] = columns[-2], columns[-1]
    reordered = tmp_path / "reordered.csv"
    frame[columns].to_csv(reordered, index=False)

    code = main(["eval", "--out", str(tmp_path), "--features", str(reordered),
                 "--checkpoint", str(out / "model" / "checkpoint.json")])
    assert code == 2
    assert "error[schema-mismatch]" in capsys.readouterr().err
