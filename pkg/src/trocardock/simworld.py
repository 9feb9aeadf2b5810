"""Randomized scenes, the 5-DoF robot model, detection synthesis and dataset export.

World frame: millimeters, eye centered at the origin.  The trocar sits on the
scleral sphere a configurable arc distance posterior to the limbus; its Z axis
points outward.  The robot is a 3-translation + 2-rotation micromanipulator:
the prismatic stage translates in the (fixed) home orientation while the wrist
tilts the endeffector about the home X and Y axes.  The camera rides on the
endeffector through a hand-eye transform.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import pfm
from .geometry import (
    CameraIntrinsics,
    RigidTransform,
    compose,
    invert,
    normalize,
    project,
    quat_between,
    quat_rotate,
    rot_to_6d,
    rot_x,
    rot_y,
)
from .perception import DetectionEstimate, TepEstimate

HEATMAP_RADIUS_PX = 15.0
HEATMAP_SIGMA_PX = 1.0
EYE_HIDDEN_FRACTION = 0.2

Z_HAT = np.array([0.0, 0.0, 1.0])


class ConfigError(ValueError):
    pass


class OffFrameError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    """Detection-noise stand-in for the neural detector, calibrated so that raw
    per-frame statistics land on ~3 px mean pixel error and ~80% / ~94.5% of
    axis errors below 10 / 15 degrees."""

    tep_jitter_std: float = 2.0            # px, isotropic Gaussian
    tep_outlier_prob: float = 0.004
    tep_outlier_range: float = 200.0       # px, uniform magnitude
    axis_tilt_std: float = 0.13636         # rad (~7.81 deg)
    detection_dropout_prob: float = 0.02

    def __post_init__(self):
        for p in (self.tep_outlier_prob, self.detection_dropout_prob):
            if not 0.0 <= p <= 1.0:
                raise ConfigError("probabilities must be in [0, 1]")
        if min(self.tep_jitter_std, self.axis_tilt_std, self.tep_outlier_range) < 0:
            raise ConfigError("noise magnitudes must be >= 0")

    @staticmethod
    def zero():
        return NoiseModel(0.0, 0.0, 0.0, 0.0, 0.0)


def _default_intrinsics():
    return CameraIntrinsics(fx=1000.0, fy=1000.0, cx=640.0, cy=360.0,
                            width=1280, height=720)


def _default_hand_eye():
    return RigidTransform(np.eye(3), np.array([0.0, -5.0, 0.0]))


def _default_tool_offset():
    return RigidTransform(np.eye(3), np.array([0.0, 0.0, 30.0]))


@dataclass(frozen=True)
class SceneConfig:
    eye_radius: float = 12.0
    limbus_radius: float = 6.0
    trocar_offset_arc: float = 3.5          # mm posterior to the limbus, along the sclera
    trocar_outer_radius: float = 0.45
    trocar_lumen_radius: float = 0.33
    trocar_length: float = 4.0
    instrument_tip_radius: float = 0.02
    trocar_tilt_max: float = math.radians(15.0)   # cone for axis-vs-normal perturbation
    camera: CameraIntrinsics = field(default_factory=_default_intrinsics)
    hand_eye: RigidTransform = field(default_factory=_default_hand_eye)
    hand_eye_error: RigidTransform = field(default_factory=RigidTransform.identity)
    tool_offset: RigidTransform = field(default_factory=_default_tool_offset)
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.eye_radius, self.limbus_radius, self.trocar_offset_arc,
               self.trocar_outer_radius, self.trocar_lumen_radius,
               self.trocar_length) <= 0:
            raise ConfigError("radii/lengths must be positive")
        if self.trocar_lumen_radius >= self.trocar_outer_radius:
            raise ConfigError("lumen radius must be smaller than outer radius")
        if self.limbus_radius >= self.eye_radius:
            raise ConfigError("limbus radius must be smaller than the eye radius")


@dataclass(frozen=True)
class Scene:
    trocar_pose: RigidTransform   # world frame; Z column = outward insertion axis
    eye_center: np.ndarray
    eye_rendered: bool

    @property
    def tep(self):
        return self.trocar_pose.translation

    @property
    def axis(self):
        """Outward unit axis of the trocar."""
        return self.trocar_pose.rotation[:, 2]


def sample_scene(cfg: SceneConfig, rng: np.random.Generator) -> Scene:
    """Randomized trocar placement on the scleral sphere.

    The limbus plane normal (gaze direction) is drawn uniformly on the sphere;
    the entry point sits at the configured arc distance posterior to the limbus
    circle, at a uniform azimuth.  The trocar axis is the surface normal tilted
    by a uniform angle within the configured cone.
    """
    eye_center = np.zeros(3)
    gaze = _random_unit(rng)
    # polar angle of the TEP measured from the gaze axis
    limbus_polar = math.asin(cfg.limbus_radius / cfg.eye_radius)
    polar = limbus_polar + cfg.trocar_offset_arc / cfg.eye_radius
    azimuth = rng.uniform(0.0, 2.0 * math.pi)
    # orthonormal frame around the gaze axis
    q_gaze = quat_between(Z_HAT, gaze)
    e1 = quat_rotate(q_gaze, np.array([1.0, 0.0, 0.0]))
    e2 = np.cross(gaze, e1)
    normal = (math.cos(polar) * gaze
              + math.sin(polar) * (math.cos(azimuth) * e1 + math.sin(azimuth) * e2))
    tep = eye_center + cfg.eye_radius * normal

    tilt = rng.uniform(0.0, cfg.trocar_tilt_max)
    tilt_azimuth = rng.uniform(0.0, 2.0 * math.pi)
    axis = _tilt_about_random_normal(normal, tilt, tilt_azimuth)

    eye_rendered = rng.random() >= EYE_HIDDEN_FRACTION
    rot = _frame_from_z(axis)
    return Scene(RigidTransform(rot, tep), eye_center, eye_rendered)


def _random_unit(rng):
    while True:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
        if n > 1e-9:
            return v / n


def _frame_from_z(z):
    """Right-handed completion with the given unit Z column (roll-free lift)."""
    q = quat_between(Z_HAT, z)
    x = quat_rotate(q, np.array([1.0, 0.0, 0.0]))
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def _tilt_about_random_normal(axis, angle, azimuth):
    """Rotate `axis` by `angle` about a direction perpendicular to it."""
    q = quat_between(Z_HAT, axis)
    e1 = quat_rotate(q, np.array([1.0, 0.0, 0.0]))
    e2 = np.cross(axis, e1)
    pivot = math.cos(azimuth) * e1 + math.sin(azimuth) * e2
    half = 0.5 * angle
    q_tilt = np.array([math.cos(half), *(math.sin(half) * pivot)])
    return quat_rotate(q_tilt, axis)


# ---------------------------------------------------------------------------
# Confidence-map synthesis
# ---------------------------------------------------------------------------

def render_confidence_map(scene: Scene, cam_pose: RigidTransform, K: CameraIntrinsics,
                          radius=HEATMAP_RADIUS_PX, sigma=HEATMAP_SIGMA_PX):
    """Gaussian bump around the projected entry point.

    Returns (map, fractional center pixel).  The bump itself is centered on the
    nearest integer pixel so the peak value is exactly 1 there; pixels farther
    than `radius` from the bump center are exactly 0.
    """
    p_cam = invert(cam_pose).apply(scene.tep)
    center = project(K, p_cam)  # raises BehindCameraError when z <= 0
    u, v = center
    if not (0 <= u < K.width and 0 <= v < K.height):
        raise OffFrameError(f"entry point projects outside the frame at ({u:.1f}, {v:.1f})")
    cu, cv = int(round(u)), int(round(v))
    cmap = np.zeros((K.height, K.width), dtype=np.float32)
    r = int(math.ceil(radius))
    u0, u1 = max(0, cu - r), min(K.width, cu + r + 1)
    v0, v1 = max(0, cv - r), min(K.height, cv + r + 1)
    uu, vv = np.meshgrid(np.arange(u0, u1), np.arange(v0, v1))
    d2 = (uu - cu) ** 2 + (vv - cv) ** 2
    patch = np.exp(-d2 / (2.0 * sigma * sigma))
    patch[d2 > radius * radius] = 0.0
    cmap[v0:v1, u0:u1] = patch
    return cmap, center


# ---------------------------------------------------------------------------
# Detection synthesis (neural-net stand-in)
# ---------------------------------------------------------------------------

def simulate_detection(scene: Scene, cam_pose: RigidTransform, K: CameraIntrinsics,
                       noise: NoiseModel, rng: np.random.Generator,
                       frame_index=0) -> DetectionEstimate:
    """Ground-truth projection corrupted by the calibrated noise model.

    Draw order (fixed for reproducibility): dropout, jitter, outlier swap,
    axis tilt.  Off-frame or dropped detections come back with valid=False.
    """
    dropped = rng.random() < noise.detection_dropout_prob

    try:
        p_cam = invert(cam_pose).apply(scene.tep)
        center = project(K, p_cam)
    except Exception:
        return DetectionEstimate(None, None, False, frame_index)

    px = center + rng.normal(0.0, 1.0, size=2) * noise.tep_jitter_std
    if rng.random() < noise.tep_outlier_prob:
        ang = rng.uniform(0.0, 2.0 * math.pi)
        mag = rng.uniform(0.0, noise.tep_outlier_range)
        px = center + mag * np.array([math.cos(ang), math.sin(ang)])

    axis_cam = cam_pose.rotation.T @ scene.axis
    tilt = rng.normal(0.0, 1.0) * noise.axis_tilt_std
    tilt_azimuth = rng.uniform(0.0, 2.0 * math.pi)
    axis_est = _tilt_about_random_normal(axis_cam, tilt, tilt_azimuth)

    in_frame = 0 <= px[0] < K.width and 0 <= px[1] < K.height
    valid = in_frame and not dropped
    tep = TepEstimate(float(px[0]), float(px[1]), frame_index=frame_index)
    return DetectionEstimate(tep, axis_est, valid, frame_index)


# ---------------------------------------------------------------------------
# 5-DoF robot
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JointLimits:
    translation: float = 15.0               # +/- mm per prismatic joint
    rotation: float = math.radians(30.0)    # +/- rad per rotary joint
    v_translation: float = 5.0              # mm/s per-joint velocity cap
    v_rotation: float = 1.0                 # rad/s


@dataclass(frozen=True)
class RobotState:
    home_pose: RigidTransform
    joint_values: np.ndarray = field(default_factory=lambda: np.zeros(5))
    limits: JointLimits = field(default_factory=JointLimits)
    within_workspace: bool = True

    @property
    def endeffector_pose(self) -> RigidTransform:
        x, y, z, a, b = self.joint_values
        rot = self.home_pose.rotation @ rot_x(a) @ rot_y(b)
        t = self.home_pose.translation + self.home_pose.rotation @ np.array([x, y, z])
        return RigidTransform(rot, t)


@dataclass(frozen=True)
class MotionCommand:
    """Velocities: linear (mm/s) in the prismatic-stage (home) frame, angular
    (rad/s) for the two wrist joints.  The translation stage does not roll with
    the wrist."""
    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @staticmethod
    def zero():
        return MotionCommand()


def robot_apply(state: RobotState, cmd: MotionCommand, dt: float) -> RobotState:
    """Integrate one control step with per-joint velocity and workspace clamping."""
    lim = state.limits
    v = np.clip(np.asarray(cmd.linear, dtype=float), -lim.v_translation, lim.v_translation)
    w = np.clip(np.asarray(cmd.angular, dtype=float), -lim.v_rotation, lim.v_rotation)
    raw = state.joint_values + np.concatenate([v, w]) * dt
    bounds = np.array([lim.translation] * 3 + [lim.rotation] * 2)
    clamped = np.clip(raw, -bounds, bounds)
    inside = bool(np.all(np.abs(raw) <= bounds + 1e-12))
    return replace(state, joint_values=clamped, within_workspace=inside)


def tool_tip_pose(state: RobotState, cfg: SceneConfig) -> RigidTransform:
    return compose(state.endeffector_pose, cfg.tool_offset)


def camera_pose(state: RobotState, cfg: SceneConfig) -> RigidTransform:
    """Actual camera pose, including the (mis)calibration perturbation."""
    return compose(compose(state.endeffector_pose, cfg.hand_eye), cfg.hand_eye_error)


def nominal_camera_pose(state: RobotState, cfg: SceneConfig) -> RigidTransform:
    """Camera pose as believed by the controller (calibrated hand-eye only)."""
    return compose(state.endeffector_pose, cfg.hand_eye)


# ---------------------------------------------------------------------------
# Dataset export
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetRecord:
    frame: int
    pfm_path: str
    tep_px: tuple
    r6d: tuple
    cam_pose: tuple
    eye_rendered: bool


def sample_view_pose(scene: Scene, K: CameraIntrinsics, rng: np.random.Generator,
                     min_dist=30.0, max_dist=60.0, max_off_axis=math.radians(25.0),
                     max_tries=200) -> RigidTransform:
    """Camera pose looking at the entry point from a randomized standoff.

    The viewing direction sits within a cone around the (inward) trocar axis so
    the trocar face is visible; rejection-samples until the TEP projects inside
    the frame with margin for the heatmap bump.
    """
    margin = HEATMAP_RADIUS_PX + 1
    for _ in range(max_tries):
        dist = rng.uniform(min_dist, max_dist)
        off = rng.uniform(0.0, max_off_axis)
        azim = rng.uniform(0.0, 2.0 * math.pi)
        view_dir = -_tilt_about_random_normal(scene.axis, off, azim)  # toward the eye
        cam_t = scene.tep - dist * view_dir
        rot = _frame_from_z(view_dir)
        # small principal-point offset so the TEP is not always centered
        jitter = rng.uniform(-0.3, 0.3, size=2)
        rot = rot @ rot_x(jitter[0]) @ rot_y(jitter[1])
        pose = RigidTransform(rot, cam_t)
        try:
            px = project(K, invert(pose).apply(scene.tep))
        except Exception:
            continue
        if margin <= px[0] < K.width - margin and margin <= px[1] < K.height - margin:
            return pose
    raise ConfigError("could not sample a view pose with the TEP in frame")


def export_dataset(cfg: SceneConfig, n_frames: int, out_dir, seed: int):
    """Write n_frames PFM confidence maps plus labels.jsonl; deterministic in seed."""
    from .rng import make_rng

    maps_dir = os.path.join(out_dir, "maps")
    os.makedirs(maps_dir, exist_ok=True)
    records = []
    labels_path = os.path.join(out_dir, "labels.jsonl")
    with open(labels_path, "w") as lf:
        for i in range(n_frames):
            rng = make_rng(seed, stream=i)
            scene = sample_scene(cfg, rng)
            cam = sample_view_pose(scene, cfg.camera, rng)
            cmap, center = render_confidence_map(scene, cam, cfg.camera)
            rel = os.path.join("maps", f"frame_{i:06d}.pfm")
            pfm.write_pfm(os.path.join(out_dir, rel), cmap)
            r_cam_trocar = cam.rotation.T @ scene.trocar_pose.rotation
            rec = DatasetRecord(
                frame=i,
                pfm_path=rel,
                tep_px=(float(center[0]), float(center[1])),
                r6d=tuple(rot_to_6d(r_cam_trocar).tolist()),
                cam_pose=tuple(cam.to_flat()),
                eye_rendered=scene.eye_rendered,
            )
            records.append(rec)
            lf.write(json.dumps({
                "frame": rec.frame,
                "pfm_path": rec.pfm_path,
                "tep_px": list(rec.tep_px),
                "r6d": list(rec.r6d),
                "cam_pose": list(rec.cam_pose),
                "eye_rendered": rec.eye_rendered,
            }) + "\n")
    return records
