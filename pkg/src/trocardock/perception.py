"""Confidence-map post-processing and temporal filtering.

Turns heatmap rasters into entry-point pixel estimates (threshold at 80% of
the map maximum, per-coordinate median of the candidates) and smooths streams
of per-frame estimates over 7-frame windows with quarter-sigma outlier
rejection for the pixel and eigen-averaged quaternions for the axis.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import geometry, pfm

CANDIDATE_FRACTION = 0.8
WINDOW_SIZE = 7
OUTLIER_SIGMA_FACTOR = 0.25

Z_HAT = np.array([0.0, 0.0, 1.0])


class PerceptionError(ValueError):
    pass


class NoDetectionError(PerceptionError):
    pass


class InsufficientHistoryError(PerceptionError):
    pass


@dataclass(frozen=True)
class TepEstimate:
    u: float
    v: float
    confidence: float = 1.0
    frame_index: int = 0


@dataclass(frozen=True)
class DetectionEstimate:
    tep: TepEstimate | None
    z_axis: np.ndarray | None  # unit vector, camera frame
    valid: bool
    frame_index: int = 0


def load_confidence_map(path):
    """File-fed mode: read a confidence map raster from a PFM file."""
    return pfm.read_pfm(path)


def extract_candidates(cmap):
    """Pixels whose value reaches 80% of the map maximum, as an (n, 2) [u, v] array.

    Raises NoDetectionError when the map is empty or has no positive response.
    """
    cmap = np.asarray(cmap, dtype=float)
    if cmap.ndim != 2 or cmap.size == 0:
        raise PerceptionError(f"expected a non-empty 2-D map, got shape {cmap.shape}")
    peak = float(cmap.max())
    if peak <= 0.0:
        raise NoDetectionError("confidence map has no positive response")
    vs, us = np.nonzero(cmap >= CANDIDATE_FRACTION * peak)
    return np.column_stack([us, vs])


def tep_from_candidates(cands, confidence=1.0, frame_index=0):
    """Per-coordinate median of candidate pixels (even counts average the middle pair)."""
    cands = np.asarray(cands, dtype=float)
    if cands.size == 0:
        raise NoDetectionError("no candidate pixels")
    cands = cands.reshape(-1, 2)
    u, v = np.median(cands[:, 0]), np.median(cands[:, 1])
    return TepEstimate(float(u), float(v), confidence=confidence, frame_index=frame_index)


def detect(cmap, frame_index=0):
    """Single-map pipeline: candidates -> median TEP."""
    cands = extract_candidates(cmap)
    peak = float(np.asarray(cmap).max())
    return tep_from_candidates(cands, confidence=peak, frame_index=frame_index)


class FilterWindow:
    """Rolling window of the most recent valid detections for one camera stream.

    Single-writer streaming state: push() sequentially from one thread.
    Invalid detections are ignored; frame indices must be strictly increasing.
    """

    def __init__(self, capacity=WINDOW_SIZE):
        self.capacity = capacity
        self.entries: deque[DetectionEstimate] = deque(maxlen=capacity)

    def push(self, det: DetectionEstimate):
        if not det.valid:
            return
        if self.entries and det.frame_index <= self.entries[-1].frame_index:
            raise PerceptionError("frame indices must be strictly increasing")
        self.entries.append(det)

    @property
    def full(self):
        return len(self.entries) == self.capacity

    def clear(self):
        self.entries.clear()


def temporal_filter_tep(window: FilterWindow):
    """Robust pixel estimate over a full window.

    Median point of the window, rejection of entries farther than a quarter of
    the population standard deviation of the distances-to-median, mean of the
    survivors.  Falls back to the median point when everything is rejected.
    """
    if not window.full:
        raise InsufficientHistoryError(
            f"window has {len(window.entries)}/{window.capacity} entries")
    pts = np.array([[e.tep.u, e.tep.v] for e in window.entries])
    med = np.median(pts, axis=0)
    dists = np.linalg.norm(pts - med, axis=1)
    sigma = float(dists.std())  # population std
    keep = dists <= OUTLIER_SIGMA_FACTOR * sigma
    if not keep.any():
        u, v = med
    else:
        u, v = pts[keep].mean(axis=0)
    return TepEstimate(float(u), float(v), frame_index=window.entries[-1].frame_index)


def axis_to_quaternion(axis):
    """Roll-free lift: the minimal rotation taking (0,0,1) to the given unit axis."""
    return geometry.quat_between(Z_HAT, geometry.normalize(axis))


def temporal_filter_orientation(window: FilterWindow):
    """Eigen-average the roll-free quaternion lifts of the window's axes."""
    if not window.full:
        raise InsufficientHistoryError(
            f"window has {len(window.entries)}/{window.capacity} entries")
    quats = [axis_to_quaternion(e.z_axis) for e in window.entries]
    q = geometry.average_quaternions(quats)
    return geometry.quat_rotate(q, Z_HAT)
