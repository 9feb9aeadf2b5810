import json

import numpy as np
import pytest

from detector_lab.data import (
    DatasetError,
    FormatError,
    OrientationDataset,
    TepDataset,
    TrainConfig,
    crop_around,
    load_labels,
    load_raster,
    synthesize_input,
)


class TestTrainConfig:
    def test_defaults_valid(self):
        cfg = TrainConfig("x")
        assert cfg.crop_size % 2 == 0

    def test_odd_crop_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig("x", crop_size=31)

    def test_negative_epochs_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig("x", epochs=-1)

    def test_zero_epochs_allowed(self):
        assert TrainConfig("x", epochs=0).epochs == 0


class TestLoadLabels:
    def test_parses(self, small_dataset):
        recs = load_labels(small_dataset)
        assert len(recs) == 10
        assert [r["frame"] for r in recs] == list(range(10))
        for r in recs:
            assert len(r["r6d"]) == 6
            assert len(r["tep_px"]) == 2

    def test_missing_dir(self, tmp_path):
        with pytest.raises(DatasetError):
            load_labels(tmp_path)

    def test_bad_json(self, tmp_path):
        (tmp_path / "labels.jsonl").write_text("{broken\n")
        with pytest.raises(FormatError):
            load_labels(tmp_path)

    def test_missing_keys(self, tmp_path):
        (tmp_path / "labels.jsonl").write_text(json.dumps({"frame": 0}) + "\n")
        with pytest.raises(FormatError):
            load_labels(tmp_path)


class TestSynthesizeInput:
    def test_deterministic_per_frame(self, small_dataset):
        rec = load_labels(small_dataset)[0]
        clean = load_raster(small_dataset, rec)
        a = synthesize_input(clean, rec, seed=5)
        b = synthesize_input(clean, rec, seed=5)
        np.testing.assert_array_equal(a, b)

    def test_seed_changes_clutter(self, small_dataset):
        rec = load_labels(small_dataset)[0]
        clean = load_raster(small_dataset, rec)
        a = synthesize_input(clean, rec, seed=5)
        b = synthesize_input(clean, rec, seed=6)
        assert not np.array_equal(a, b)

    def test_clutter_actually_competes(self, small_dataset):
        # at least some frames must have a corrupted global argmax, otherwise
        # the segmentation stage has nothing to learn
        moved = 0
        for rec in load_labels(small_dataset):
            clean = load_raster(small_dataset, rec)
            noisy = synthesize_input(clean, rec, seed=0)
            cv, cu = np.unravel_index(np.argmax(clean), clean.shape)
            nv, nu = np.unravel_index(np.argmax(noisy), noisy.shape)
            moved += (cv, cu) != (nv, nu)
        assert moved >= 1


class TestCrop:
    def test_center_pixel(self):
        img = np.arange(100, dtype=np.float32).reshape(10, 10)
        crop = crop_around(img, (4.2, 6.4), 4)
        # crop center (2, 2) must hold the rounded center pixel (u=4, v=6)
        assert crop[2, 2] == img[6, 4]

    def test_border_zero_padded(self):
        img = np.ones((10, 10), dtype=np.float32)
        crop = crop_around(img, (0, 0), 6)
        assert crop[0, 0] == 0.0
        assert crop[3, 3] == 1.0
        assert crop.shape == (6, 6)

    def test_within_one_pixel_of_estimate(self):
        img = np.zeros((20, 20), dtype=np.float32)
        img[7, 11] = 1.0
        crop = crop_around(img, (11.4, 7.4), 8)
        v, u = np.unravel_index(np.argmax(crop), crop.shape)
        assert abs(u - 4) <= 1 and abs(v - 4) <= 1


class TestDatasets:
    def test_tep_shapes(self, small_dataset):
        ds = TepDataset(small_dataset, seed=0)
        x, y = ds[0]
        assert x.shape == (1, 96, 96)
        assert y.shape == (1, 96, 96)
        assert float(y.max()) == 1.0

    def test_orientation_shapes(self, small_dataset):
        ds = OrientationDataset(small_dataset, crop_size=32, seed=0)
        x, r6d = ds[0]
        assert x.shape == (1, 32, 32)
        assert r6d.shape == (6,)

    def test_crop_too_large_rejected(self, small_dataset):
        with pytest.raises(ValueError):
            OrientationDataset(small_dataset, crop_size=128, seed=0)
