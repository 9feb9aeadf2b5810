import json
import math
import subprocess
import sys

import numpy as np
import pytest

from detector_lab.data import FormatError, TrainConfig, load_labels
from detector_lab.pfm import read_pfm
from detector_lab.train import load_artifact, predict, save_artifact, train_orientation, train_tep


@pytest.fixture(scope="module")
def trained_models(train_dataset):
    tep = train_tep(TrainConfig(str(train_dataset), epochs=2, batch_size=16, seed=0))
    orient = train_orientation(TrainConfig(str(train_dataset), epochs=1,
                                           batch_size=16, seed=0))
    return tep, orient


@pytest.fixture(scope="module")
def heldout_predictions(trained_models, heldout_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("preds")
    tep, orient = trained_models
    preds = predict(str(heldout_dataset), tep, orient, str(out), seed=123)
    return preds, out


def test_heldout_tep_error_under_10px(heldout_predictions, heldout_dataset):
    preds, _ = heldout_predictions
    labels = {r["frame"]: r for r in load_labels(str(heldout_dataset))}
    errs = [math.hypot(p["tep_px"][0] - labels[p["frame"]]["tep_px"][0],
                       p["tep_px"][1] - labels[p["frame"]]["tep_px"][1])
            for p in preds]
    assert np.mean(errs) < 10.0


def test_prediction_schema(heldout_predictions):
    preds, out = heldout_predictions
    lines = (out / "predictions.jsonl").read_text().splitlines()
    assert len(lines) == len(preds)
    for line in lines:
        rec = json.loads(line)
        assert set(rec) == {"frame", "pfm_path", "tep_px", "r6d"}
        assert len(rec["r6d"]) == 6


def test_round_trip_preserves_frames_and_dims(heldout_predictions, heldout_dataset):
    preds, out = heldout_predictions
    labels = load_labels(str(heldout_dataset))
    assert [p["frame"] for p in preds] == [r["frame"] for r in labels]
    for p, r in zip(preds[:5], labels[:5]):
        pred_map = read_pfm(out / p["pfm_path"])
        label_map = read_pfm(f"{heldout_dataset}/{r['pfm_path']}")
        assert pred_map.shape == label_map.shape


def test_primary_pipeline_ingests_predictions(heldout_predictions, heldout_dataset,
                                              tmp_path):
    _, out = heldout_predictions
    res = subprocess.run(
        [sys.executable, "-m", "trocardock.cli", "eval-detection",
         "--predictions", str(out / "predictions.jsonl"),
         "--labels", f"{heldout_dataset}/labels.jsonl",
         "--out", str(tmp_path)],
        capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    scored = json.loads((tmp_path / "detection_summary.json").read_text())
    assert scored["n_frames"] == 200
    assert math.isfinite(scored["tep_err_mean_px"])


def test_artifact_kind_checked(trained_models, tmp_path):
    tep, _ = trained_models
    path = tmp_path / "tep.pt"
    save_artifact(tep, path)
    with pytest.raises(FormatError):
        load_artifact(path, "orientation")


class TestCli:
    def test_train_and_predict(self, small_dataset, tmp_path):
        from detector_lab.cli import main

        assert main(["train-tep", "--dataset", str(small_dataset),
                     "--out", str(tmp_path), "--epochs", "1", "--seed", "0"]) == 0
        assert main(["train-orient", "--dataset", str(small_dataset),
                     "--out", str(tmp_path), "--epochs", "1", "--seed", "0"]) == 0
        assert main(["predict", "--dataset", str(small_dataset),
                     "--out", str(tmp_path / "p"),
                     "--tep-model", str(tmp_path / "tep_model.pt"),
                     "--orient-model", str(tmp_path / "orient_model.pt")]) == 0
        assert (tmp_path / "p" / "predictions.jsonl").exists()

    def test_missing_dataset_is_data_error(self, tmp_path):
        from detector_lab.cli import main

        assert main(["train-tep", "--dataset", str(tmp_path / "nope"),
                     "--out", str(tmp_path)]) == 2

    def test_usage_error(self):
        from detector_lab.cli import main

        assert main(["no-such-command"]) == 1
