"""Deterministic simulator and library for autonomous trocar docking."""

from . import geometry, harness, perception, pfm, planner, simworld  # noqa: F401

__version__ = "0.1.0"
