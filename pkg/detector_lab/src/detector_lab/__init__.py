"""Toy two-stage trocar detector trained on synthetic confidence-map datasets."""

from . import data, losses, models, pfm, train

__version__ = "0.1.0"
