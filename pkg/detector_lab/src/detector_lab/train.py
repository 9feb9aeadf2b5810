"""Training loops and prediction for the two-stage detector.

Stage 1 (segmentation): encoder-decoder with per-pixel sigmoid output, binary
cross-entropy against the clean Gaussian-bump targets.  Stage 2 (orientation):
CNN regressor on a TEP-centered crop, loss on the decoded Z axis only.

Model artifacts are plain dicts saved with torch.save: {"kind", "state",
"trained", "config"}.  A zero-epoch run still emits an artifact, marked
untrained, so downstream plumbing can be exercised without a training budget.
"""

from __future__ import annotations

import json
import os
import random

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader

from .data import (
    FormatError,
    OrientationDataset,
    TepDataset,
    TrainConfig,
    crop_around,
    load_labels,
    load_raster,
    synthesize_input,
)
from .losses import z_axis_loss
from .models import OrientationNet, TinyUNet
from .pfm import write_pfm


def _seed_everything(seed):
    random.seed(seed)
    np.random.seed(seed % 2 ** 32)
    torch.manual_seed(seed)


def _artifact(kind, model, trained, cfg: TrainConfig, history):
    return {
        "kind": kind,
        "state": model.state_dict(),
        "trained": trained,
        "config": {"epochs": cfg.epochs, "batch_size": cfg.batch_size,
                   "learning_rate": cfg.learning_rate, "crop_size": cfg.crop_size,
                   "seed": cfg.seed},
        "loss_history": history,
    }


def train_tep(cfg: TrainConfig, init_artifact=None):
    """Train the segmentation stage; returns a model artifact dict.

    Passing a previous artifact as `init_artifact` continues training from its
    weights (the pretrain-then-fine-tune split, here on two synthetic subsets).
    """
    _seed_everything(cfg.seed)
    dataset = TepDataset(cfg.dataset_dir, seed=cfg.seed)
    model = TinyUNet()
    if init_artifact is not None:
        if init_artifact.get("kind") != "tep":
            raise FormatError("init artifact is not a tep model")
        model.load_state_dict(init_artifact["state"])
    loader = DataLoader(dataset, batch_size=cfg.batch_size, shuffle=True,
                        num_workers=0)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    bce = nn.BCEWithLogitsLoss()
    history = []
    for _ in range(cfg.epochs):
        total, n = 0.0, 0
        for x, y in loader:
            opt.zero_grad()
            loss = bce(model(x), y)
            loss.backward()
            opt.step()
            total += float(loss.detach()) * x.shape[0]
            n += x.shape[0]
        history.append(total / n)
    return _artifact("tep", model, cfg.epochs > 0, cfg, history)


def train_orientation(cfg: TrainConfig, init_artifact=None):
    """Train the orientation stage; returns a model artifact dict."""
    _seed_everything(cfg.seed + 1)
    dataset = OrientationDataset(cfg.dataset_dir, cfg.crop_size, seed=cfg.seed)
    model = OrientationNet()
    if init_artifact is not None:
        if init_artifact.get("kind") != "orientation":
            raise FormatError("init artifact is not an orientation model")
        model.load_state_dict(init_artifact["state"])
    loader = DataLoader(dataset, batch_size=cfg.batch_size, shuffle=True,
                        num_workers=0)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    history = []
    for _ in range(cfg.epochs):
        total, n = 0.0, 0
        for x, r6d in loader:
            opt.zero_grad()
            loss = z_axis_loss(model(x), r6d)
            loss.backward()
            opt.step()
            total += float(loss.detach()) * x.shape[0]
            n += x.shape[0]
        history.append(total / n)
    return _artifact("orientation", model, cfg.epochs > 0, cfg, history)


def save_artifact(artifact, path):
    torch.save(artifact, path)


def load_artifact(path, kind):
    artifact = torch.load(path, weights_only=False)
    if artifact.get("kind") != kind:
        raise FormatError(f"{path}: expected a {kind!r} artifact, got "
                          f"{artifact.get('kind')!r}")
    model = TinyUNet() if kind == "tep" else OrientationNet()
    model.load_state_dict(artifact["state"])
    model.eval()
    return model, artifact


def _restore(artifact):
    kind = artifact["kind"]
    model = TinyUNet() if kind == "tep" else OrientationNet()
    model.load_state_dict(artifact["state"])
    model.eval()
    return model


def predict(dataset_dir, tep_artifact, orient_artifact, out_dir, seed=0):
    """Run both stages over a dataset; writes PFM heatmaps plus predictions.jsonl.

    Returns the list of prediction records.  Output schema matches the label
    schema ({frame, pfm_path, tep_px, r6d}) so the simulator's file-fed scorer
    can consume it directly.
    """
    records = load_labels(dataset_dir)
    tep_model = _restore(tep_artifact)
    orient_model = _restore(orient_artifact)
    crop_size = orient_artifact["config"]["crop_size"]

    maps_dir = os.path.join(out_dir, "maps")
    os.makedirs(maps_dir, exist_ok=True)
    preds = []
    jsonl_path = os.path.join(out_dir, "predictions.jsonl")
    with open(jsonl_path, "w") as f, torch.no_grad():
        for rec in records:
            clean = load_raster(dataset_dir, rec)
            noisy = synthesize_input(clean, rec, seed)
            x = torch.from_numpy(noisy)[None, None]
            heat = torch.sigmoid(tep_model(x))[0, 0].numpy()
            v, u = np.unravel_index(int(np.argmax(heat)), heat.shape)
            crop = crop_around(noisy, (u, v), crop_size)
            r6d = orient_model(torch.from_numpy(crop)[None, None])[0].tolist()
            rel = os.path.join("maps", f"frame_{rec['frame']:06d}.pfm")
            write_pfm(os.path.join(out_dir, rel), heat)
            pred = {"frame": rec["frame"], "pfm_path": rel,
                    "tep_px": [float(u), float(v)], "r6d": r6d}
            preds.append(pred)
            f.write(json.dumps(pred) + "\n")
    return preds
