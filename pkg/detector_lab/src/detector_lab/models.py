"""Toy-scale networks: an encoder-decoder for heatmaps, a small CNN regressor.

Channel counts and depths are deliberately tiny; the goal is a desk-scale
pipeline, not production-scale accuracy.
"""

from __future__ import annotations

import torch
from torch import nn


def _block(c_in, c_out):
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, 3, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(c_out, c_out, 3, padding=1),
        nn.ReLU(inplace=True),
    )


class TinyUNet(nn.Module):
    """Encoder-decoder with skip connections; outputs per-pixel logits.

    Input height and width must be divisible by 2**depth.
    """

    def __init__(self, base_channels=8, depth=2):
        super().__init__()
        self.depth = depth
        chans = [base_channels * 2 ** i for i in range(depth + 1)]
        self.enc = nn.ModuleList()
        c_prev = 1
        for c in chans:
            self.enc.append(_block(c_prev, c))
            c_prev = c
        self.pool = nn.MaxPool2d(2)
        self.up = nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False)
        self.dec = nn.ModuleList()
        for i in range(depth, 0, -1):
            self.dec.append(_block(chans[i] + chans[i - 1], chans[i - 1]))
        self.head = nn.Conv2d(chans[0], 1, 1)

    def forward(self, x):
        skips = []
        for i, block in enumerate(self.enc):
            x = block(x)
            if i < self.depth:
                skips.append(x)
                x = self.pool(x)
        for block in self.dec:
            x = self.up(x)
            x = block(torch.cat([x, skips.pop()], dim=1))
        return self.head(x)


class OrientationNet(nn.Module):
    """Convolutional feature extractor plus fully connected 6-value regressor."""

    def __init__(self, base_channels=16):
        super().__init__()
        c = base_channels
        self.features = nn.Sequential(
            nn.Conv2d(1, c, 3, stride=2, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(c, 2 * c, 3, stride=2, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(2 * c, 4 * c, 3, stride=2, padding=1), nn.ReLU(inplace=True),
            nn.AdaptiveAvgPool2d(2),
        )
        self.regress = nn.Sequential(
            nn.Flatten(),
            nn.Linear(4 * c * 4, 64), nn.ReLU(inplace=True),
            nn.Linear(64, 6),
        )

    def forward(self, x):
        return self.regress(self.features(x))
