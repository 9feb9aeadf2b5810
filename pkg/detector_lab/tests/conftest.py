import json
import subprocess
import sys

import pytest

TOY_CAMERA = {"scene": {"camera": {"fx": 120.0, "fy": 120.0, "cx": 48.0,
                                   "cy": 48.0, "width": 96, "height": 96}}}


def export_dataset(out_dir, n, seed, config_path):
    """Generate a synthetic dataset through the simulator's public CLI."""
    res = subprocess.run(
        [sys.executable, "-m", "trocardock.cli", "export-dataset",
         "--config", str(config_path), "--n", str(n), "--seed", str(seed),
         "--out", str(out_dir)],
        capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    return out_dir


@pytest.fixture(scope="session")
def toy_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "toy.json"
    path.write_text(json.dumps(TOY_CAMERA))
    return path


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory, toy_config):
    """10 frames for overfit tests."""
    out = tmp_path_factory.mktemp("ds10")
    return export_dataset(out, 10, seed=1, config_path=toy_config)


@pytest.fixture(scope="session")
def train_dataset(tmp_path_factory, toy_config):
    """2000 frames for the desk-scale training run."""
    out = tmp_path_factory.mktemp("ds2000")
    return export_dataset(out, 2000, seed=10, config_path=toy_config)


@pytest.fixture(scope="session")
def heldout_dataset(tmp_path_factory, toy_config):
    """200 frames never seen in training."""
    out = tmp_path_factory.mktemp("ds200")
    return export_dataset(out, 200, seed=99, config_path=toy_config)
