"""Dataset loading and input synthesis for the two-stage detector.

The simulator exports clean Gaussian-bump confidence maps plus a labels.jsonl
with per-frame TEP pixels and 6D orientations.  Training inputs are those
rasters corrupted with procedurally generated structured clutter (a stand-in
for background randomization) and a faint shaft streak along the projected
trocar axis, so orientation carries some visual signal.  Corruption is
deterministic per (seed, frame), which keeps overfit runs stable.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np
import torch
from torch.utils.data import Dataset

from .pfm import read_pfm

REQUIRED_LABEL_KEYS = {"frame", "pfm_path", "tep_px", "r6d"}

STREAK_VALUE = 0.55
STREAK_LENGTH = 14.0
CLUTTER_BLOBS = 4


class DatasetError(FileNotFoundError):
    pass


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    dataset_dir: str
    epochs: int = 5
    batch_size: int = 16
    learning_rate: float = 2e-3
    crop_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.crop_size % 2 != 0 or self.crop_size <= 0:
            raise ValueError("crop_size must be a positive even number")


def load_labels(dataset_dir):
    """Parse labels.jsonl; raises DatasetError / FormatError on problems."""
    path = os.path.join(dataset_dir, "labels.jsonl")
    if not os.path.isfile(path):
        raise DatasetError(f"no labels.jsonl in {dataset_dir}")
    records = []
    with open(path) as f:
        for ln, line in enumerate(f):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{ln + 1}: invalid JSON: {e}") from e
            missing = REQUIRED_LABEL_KEYS - set(rec)
            if missing:
                raise FormatError(f"{path}:{ln + 1}: missing keys {sorted(missing)}")
            records.append(rec)
    if not records:
        raise DatasetError(f"{path} is empty")
    return records


def load_raster(dataset_dir, rec):
    path = os.path.join(dataset_dir, rec["pfm_path"])
    if not os.path.isfile(path):
        raise DatasetError(f"missing raster {path}")
    return read_pfm(path)


def frame_rng(seed, frame):
    return np.random.default_rng([seed, frame])


def synthesize_input(clean, rec, seed):
    """Clean raster -> network input: shaft streak plus structured clutter.

    The streak follows the image-plane projection of the trocar axis (first
    three 6D components, camera frame); clutter is a handful of broad Gaussian
    blobs whose peaks rival the true bump, so a bare argmax is not enough.
    """
    h, w = clean.shape
    rng = frame_rng(seed, int(rec["frame"]))
    img = clean.astype(np.float32).copy()

    u0, v0 = rec["tep_px"]
    ax, ay = float(rec["r6d"][0]), float(rec["r6d"][1])
    norm = math.hypot(ax, ay)
    if norm > 1e-6:
        du, dv = ax / norm, ay / norm
        for step in range(1, int(STREAK_LENGTH) + 1):
            uu, vv = int(round(u0 + du * step)), int(round(v0 + dv * step))
            if 0 <= uu < w and 0 <= vv < h:
                img[vv, uu] = max(img[vv, uu], STREAK_VALUE * (1.0 - step / (2 * STREAK_LENGTH)))

    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(CLUTTER_BLOBS):
        cu = rng.uniform(0, w)
        cv = rng.uniform(0, h)
        sig = rng.uniform(3.0, 8.0)
        amp = rng.uniform(0.6, 1.1)
        img += amp * np.exp(-((xx - cu) ** 2 + (yy - cv) ** 2) / (2 * sig * sig)).astype(np.float32)
    img += rng.normal(0.0, 0.02, size=img.shape).astype(np.float32)
    return np.clip(img, 0.0, 1.5)


def crop_around(img, center, crop_size):
    """Square crop centered on `center` (u, v), zero-padded at the borders.

    The crop center lands on the rounded center pixel, so it tracks the
    stage-1 estimate to within a pixel.
    """
    half = crop_size // 2
    cu, cv = int(round(float(center[0]))), int(round(float(center[1])))
    h, w = img.shape
    out = np.zeros((crop_size, crop_size), dtype=np.float32)
    u0, v0 = cu - half, cv - half
    su0, sv0 = max(0, u0), max(0, v0)
    su1, sv1 = min(w, u0 + crop_size), min(h, v0 + crop_size)
    if su0 < su1 and sv0 < sv1:
        out[sv0 - v0:sv1 - v0, su0 - u0:su1 - u0] = img[sv0:sv1, su0:su1]
    return out


class TepDataset(Dataset):
    """(corrupted raster, clean raster) pairs for the segmentation stage."""

    def __init__(self, dataset_dir, seed=0, records=None):
        self.dataset_dir = dataset_dir
        self.seed = seed
        self.records = records if records is not None else load_labels(dataset_dir)
        first = load_raster(dataset_dir, self.records[0])
        self.shape = first.shape

    def __len__(self):
        return len(self.records)

    def __getitem__(self, idx):
        rec = self.records[idx]
        clean = load_raster(self.dataset_dir, rec)
        noisy = synthesize_input(clean, rec, self.seed)
        return (torch.from_numpy(noisy)[None], torch.from_numpy(clean)[None])


class OrientationDataset(Dataset):
    """(TEP-centered crop, ground-truth 6D) pairs for the regression stage."""

    def __init__(self, dataset_dir, crop_size, seed=0, records=None):
        self.dataset_dir = dataset_dir
        self.crop_size = crop_size
        self.seed = seed
        self.records = records if records is not None else load_labels(dataset_dir)
        first = load_raster(dataset_dir, self.records[0])
        if crop_size > min(first.shape):
            raise ValueError(f"crop_size {crop_size} exceeds raster size {first.shape}")

    def __len__(self):
        return len(self.records)

    def __getitem__(self, idx):
        rec = self.records[idx]
        clean = load_raster(self.dataset_dir, rec)
        noisy = synthesize_input(clean, rec, self.seed)
        crop = crop_around(noisy, rec["tep_px"], self.crop_size)
        r6d = torch.tensor(rec["r6d"], dtype=torch.float32)
        return torch.from_numpy(crop)[None], r6d
