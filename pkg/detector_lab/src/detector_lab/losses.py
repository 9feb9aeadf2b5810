"""Losses for the orientation stage.

The trocar is rotationally symmetric about its own Z axis, so the loss
compares only the decoded Z columns: any roll of the predicted frame about
that axis leaves the loss unchanged.
"""

from __future__ import annotations

import torch

EPS = 1e-8


def decode_z(r6d: torch.Tensor) -> torch.Tensor:
    """Unit Z axis from raw 6D values (batch, 6) -> (batch, 3)."""
    z = r6d[..., :3]
    return z / z.norm(dim=-1, keepdim=True).clamp_min(EPS)


def z_axis_loss(pred_r6d: torch.Tensor, gt_r6d: torch.Tensor) -> torch.Tensor:
    """Mean squared difference between the decoded unit Z axes."""
    return torch.mean((decode_z(pred_r6d) - decode_z(gt_r6d)) ** 2)
