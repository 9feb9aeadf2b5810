import math

import numpy as np
import torch

from detector_lab.losses import decode_z, z_axis_loss


def random_r6d(rng, n=1):
    return torch.tensor(rng.normal(size=(n, 6)), dtype=torch.float64)


def decode_full(r6d):
    """Full rotation matrix from 6 values: normalize Z, orthogonalize Y, X = Y x Z."""
    r6d = np.asarray(r6d, dtype=float)
    z = r6d[:3] / np.linalg.norm(r6d[:3])
    y = r6d[3:] - np.dot(r6d[3:], z) * z
    y /= np.linalg.norm(y)
    x = np.cross(y, z)
    return np.column_stack([x, y, z])


def roll_about_z(R, phi):
    c, s = math.cos(phi), math.sin(phi)
    Rz = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    return R @ Rz


def encode(R):
    return np.concatenate([R[:, 2], R[:, 1]])


def test_zero_loss_on_perfect_predictions():
    rng = np.random.default_rng(0)
    gt = random_r6d(rng, n=8)
    assert float(z_axis_loss(gt, gt)) == 0.0


def test_decode_z_is_unit():
    rng = np.random.default_rng(1)
    z = decode_z(random_r6d(rng, n=16))
    np.testing.assert_allclose(z.norm(dim=-1).numpy(), 1.0, atol=1e-12)


def test_roll_invariance():
    rng = np.random.default_rng(2)
    for _ in range(50):
        gt = random_r6d(rng)
        pred = random_r6d(rng)
        base = float(z_axis_loss(pred, gt))
        R = decode_full(pred[0].numpy())
        phi = rng.uniform(0, 2 * math.pi)
        rolled = torch.tensor(encode(roll_about_z(R, phi)),
                              dtype=torch.float64)[None]
        rolled_loss = float(z_axis_loss(rolled, gt))
        assert abs(rolled_loss - base) < 1e-6


def test_loss_tracks_axis_angle():
    # a pure tilt of the Z axis by theta costs 2(1 - cos theta)/3
    gt = torch.tensor([[0.0, 0.0, 1.0, 0.0, 1.0, 0.0]], dtype=torch.float64)
    theta = math.radians(30)
    pred = torch.tensor([[math.sin(theta), 0.0, math.cos(theta),
                          0.0, 1.0, 0.0]], dtype=torch.float64)
    expect = 2 * (1 - math.cos(theta)) / 3
    assert abs(float(z_axis_loss(pred, gt)) - expect) < 1e-12
