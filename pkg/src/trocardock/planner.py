"""Docking state machine: orient, get on the camera-TEP ray, approach, insert.

The planner only sees filtered detections (pixel + axis, camera frame), the
believed camera pose, the tool tip pose and the robot joint state.  Depth along
the detection ray is not observable monocularly; a per-frame scene-scale hint
supplies it (see FrameContext.tep_depth_hint) and can be swapped for any
monotone estimator.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraIntrinsics, RigidTransform, backproject_ray
from .perception import DetectionEstimate
from .simworld import MotionCommand, RobotState, Scene, SceneConfig


class PlannerError(RuntimeError):
    pass


class DockingPhase(enum.Enum):
    ORIENTING = "orienting"
    RAY_ALIGNING = "ray_aligning"
    APPROACHING = "approaching"
    INSERTING = "inserting"
    HOLDING = "holding"
    DONE = "done"
    FAILED = "failed"


ACTIVE_PHASES = (DockingPhase.ORIENTING, DockingPhase.RAY_ALIGNING,
                 DockingPhase.APPROACHING, DockingPhase.INSERTING)


@dataclass(frozen=True)
class PlannerConfig:
    orient_tolerance: float = math.radians(1.0)
    ray_tolerance: float = 0.5               # mm
    approach_gain: float = 1.0               # 1/s
    v_max: float = 2.0                       # mm/s
    v_min: float = 0.2                       # mm/s
    insertion_depth: float = 2.0             # mm past the TEP plane
    insertion_margin: float = 0.3            # mm commanded overshoot along the axis
    success_lateral_tolerance: float = 0.31  # mm (lumen radius - tip radius)
    success_angle_tolerance: float = math.radians(10.0)
    arrive_tolerance: float = 0.05           # mm, approach -> insert handoff
    done_tolerance: float = 1e-4             # mm, insert -> done
    insert_settle_frames: int = 7            # still frames before locking insertion
    orient_gain: float = 4.0                 # 1/s on wrist joint errors
    align_gain: float = 4.0                  # 1/s on perpendicular offsets
    w_max: float = 0.5                       # rad/s

    def __post_init__(self):
        if self.v_min > self.v_max:
            raise ValueError("v_min must not exceed v_max")
        if min(self.orient_tolerance, self.ray_tolerance, self.arrive_tolerance) <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class FrameContext:
    """Per-frame world information handed to the planner by the loop driver."""
    camera_pose: RigidTransform       # believed (calibrated) camera pose, world frame
    tip_pose: RigidTransform          # tool tip pose, world frame
    intrinsics: CameraIntrinsics
    tep_depth_hint: float             # mm along the detection ray to the TEP plane


def estimate_remaining_distance(tip_position, ray_origin, ray_direction, depth_hint):
    """Signed distance from the tip's projection on the ray to the hint point.

    Monotonically decreasing along a straight approach; 0 at the hint point.
    """
    tip_position = np.asarray(tip_position, dtype=float)
    along = float(np.dot(tip_position - ray_origin, ray_direction))
    if along < 0:
        raise PlannerError("tip projects behind the camera center")
    return depth_hint - along


def check_success(tip_pose: RigidTransform, scene: Scene, cfg: PlannerConfig,
                  scene_cfg: SceneConfig | None = None):
    """Docking outcome: axis alignment, lateral clearance at the TEP plane, depth.

    Returns (success, metrics) with lateral offset in mm and axis angle in rad.
    """
    axis = scene.axis                      # outward
    insertion_dir = -axis
    tool_forward = tip_pose.rotation[:, 2]
    angle = math.acos(float(np.clip(np.dot(tool_forward, insertion_dir), -1.0, 1.0)))
    rel = tip_pose.translation - scene.tep
    depth = float(np.dot(rel, insertion_dir))
    lateral = float(np.linalg.norm(rel - np.dot(rel, axis) * axis))
    success = (angle < cfg.success_angle_tolerance
               and lateral < cfg.success_lateral_tolerance
               and depth >= cfg.insertion_depth - 1e-6)
    return success, {"lateral_mm": lateral, "angle_rad": angle, "depth_mm": depth}


@dataclass(frozen=True)
class InsertionLock:
    """Frozen at the Approaching->Inserting handoff: the insertion is an
    open-loop Z advance to a fixed target with a fixed wrist attitude, since
    the docked trocar is no longer reliably observable."""
    target: np.ndarray        # world point insertion_depth past the TEP plane
    wrist: np.ndarray         # (a, b) wrist joint targets


class Planner:
    """One instance per trial; strictly sequential stepping.

    Keeps the phase to resume after a detection-loss hold (one valid frame
    resumes) and the insertion lock.  All motion commands are expressed for
    `simworld.robot_apply`: linear velocity in the home/stage frame, angular
    velocity on the two wrist joints.
    """

    def __init__(self, cfg: PlannerConfig, dt: float):
        self.cfg = cfg
        self.dt = dt
        self.phase = DockingPhase.ORIENTING
        self._resume_phase = DockingPhase.ORIENTING
        self._lock: InsertionLock | None = None
        self._settled = 0

    def step(self, robot: RobotState, det: DetectionEstimate, frames: FrameContext):
        """Advance the state machine one frame; returns (MotionCommand, phase)."""
        pending_insert = self.phase == DockingPhase.INSERTING or (
            self.phase == DockingPhase.HOLDING
            and self._resume_phase == DockingPhase.INSERTING)
        if pending_insert and self._lock is None:
            # hold still so the temporal filters settle on a static view, then
            # freeze the insertion target (fix the head, then move in Z)
            if not det.valid:
                if self.phase != DockingPhase.HOLDING:
                    self._resume_phase = self.phase
                self.phase = DockingPhase.HOLDING
                return MotionCommand.zero(), self.phase
            self.phase = DockingPhase.INSERTING
            if self._settled < self.cfg.insert_settle_frames:
                self._settled += 1
                return MotionCommand.zero(), self.phase
            self._lock = make_insertion_lock(robot, det, self.cfg, frames)
        cmd, phase = plan_step(robot, det, self.phase, self.cfg, frames,
                               dt=self.dt, resume_phase=self._resume_phase,
                               lock=self._lock)
        if phase == DockingPhase.HOLDING and self.phase != DockingPhase.HOLDING:
            self._resume_phase = self.phase
        self.phase = phase
        return cmd, phase


def make_insertion_lock(robot: RobotState, det: DetectionEstimate,
                        cfg: PlannerConfig, frames: FrameContext) -> InsertionLock:
    cam = frames.camera_pose
    axis_world = cam.rotation @ np.asarray(det.z_axis, dtype=float)
    ray_dir = cam.rotation @ backproject_ray(frames.intrinsics, (det.tep.u, det.tep.v))
    tep_point = cam.translation + frames.tep_depth_hint * ray_dir
    # the commanded advance carries a small margin so estimation error in the
    # axis direction cannot leave the tip short of the required depth
    target = tep_point - (cfg.insertion_depth + cfg.insertion_margin) * axis_world
    wrist = _wrist_targets(robot, -axis_world)
    return InsertionLock(target, wrist)


def plan_step(robot: RobotState, det: DetectionEstimate, phase: DockingPhase,
              cfg: PlannerConfig, frames: FrameContext, dt: float,
              resume_phase: DockingPhase = DockingPhase.ORIENTING,
              lock: InsertionLock | None = None):
    """Single planning step (pure function; `Planner` wraps the hold bookkeeping)."""
    if phase in (DockingPhase.DONE, DockingPhase.FAILED):
        return MotionCommand.zero(), phase

    if not det.valid:
        return MotionCommand.zero(), DockingPhase.HOLDING

    if phase == DockingPhase.HOLDING:
        phase = resume_phase

    if phase not in ACTIVE_PHASES:
        raise PlannerError(f"inconsistent phase {phase} with a valid detection")

    cam = frames.camera_pose
    tip = frames.tip_pose
    home_rot = robot.home_pose.rotation

    # detection geometry in the world frame
    axis_world = cam.rotation @ np.asarray(det.z_axis, dtype=float)
    insertion_dir = -axis_world
    ray_origin = cam.translation
    ray_dir = cam.rotation @ backproject_ray(frames.intrinsics, (det.tep.u, det.tep.v))

    tool_forward = tip.rotation[:, 2]
    angle_err = math.acos(float(np.clip(np.dot(tool_forward, insertion_dir), -1.0, 1.0)))
    angular = _wrist_command(robot, insertion_dir, cfg, dt)

    p = tip.translation
    foot = ray_origin + np.dot(p - ray_origin, ray_dir) * ray_dir
    perp = foot - p
    perp_dist = float(np.linalg.norm(perp))

    if phase == DockingPhase.ORIENTING:
        if angle_err < cfg.orient_tolerance:
            return MotionCommand(np.zeros(3), angular), DockingPhase.RAY_ALIGNING
        return MotionCommand(np.zeros(3), angular), phase

    if phase == DockingPhase.RAY_ALIGNING:
        if perp_dist < cfg.ray_tolerance:
            return MotionCommand(np.zeros(3), angular), DockingPhase.APPROACHING
        v_world = _servo_velocity(perp, cfg.align_gain, cfg.v_max, dt)
        return MotionCommand(home_rot.T @ v_world, angular), phase

    if phase == DockingPhase.APPROACHING:
        if not robot.within_workspace:
            return MotionCommand.zero(), DockingPhase.FAILED
        remaining = estimate_remaining_distance(p, ray_origin, ray_dir,
                                                frames.tep_depth_hint)
        if remaining < cfg.arrive_tolerance:
            return MotionCommand(np.zeros(3), angular), DockingPhase.INSERTING
        speed = float(np.clip(cfg.approach_gain * remaining, cfg.v_min, cfg.v_max))
        v_world = speed * ray_dir + _servo_velocity(perp, cfg.align_gain, cfg.v_max, dt)
        return MotionCommand(home_rot.T @ v_world, angular), phase

    # INSERTING: drive to the locked point insertion_depth past the TEP plane
    if lock is None:
        lock = make_insertion_lock(robot, det, cfg, frames)
    err = lock.target - p
    wrist_err = lock.wrist - robot.joint_values[3:5]
    # workspace saturation mid-insertion: the tip is as deep as it can go
    if np.linalg.norm(err) < cfg.done_tolerance or not robot.within_workspace:
        return MotionCommand.zero(), DockingPhase.DONE
    angular = _wrist_rate(wrist_err, cfg, dt)
    v_world = _servo_velocity(err, cfg.align_gain, cfg.v_max, dt)
    return MotionCommand(home_rot.T @ v_world, angular), phase


def _servo_velocity(err, gain, v_max, dt):
    """Proportional velocity toward zero error, capped at v_max.

    Within one frame of the target (dist <= v_max*dt) the commanded velocity
    lands exactly on it, so closed-loop positioning converges in finite steps.
    """
    err = np.asarray(err, dtype=float)
    dist = float(np.linalg.norm(err))
    if dist == 0.0:
        return np.zeros(3)
    if dist <= v_max * dt:
        speed = dist / dt
    else:
        speed = min(gain * dist, v_max)
    return (speed / dist) * err


def _wrist_targets(robot: RobotState, target_dir):
    """Closed-form IK for the two wrist joints given a target tool direction.

    With R_ee = R_home Rx(a) Ry(b) and the tool forward along the endeffector Z,
    the direction in the home frame is (sin b, -sin a cos b, cos a cos b).
    Targets are clamped to the joint range.
    """
    d = robot.home_pose.rotation.T @ np.asarray(target_dir, dtype=float)
    b_t = math.asin(float(np.clip(d[0], -1.0, 1.0)))
    a_t = math.atan2(-d[1], d[2])
    lim = robot.limits.rotation
    return np.clip(np.array([a_t, b_t]), -lim, lim)


def _wrist_rate(err, cfg: PlannerConfig, dt: float):
    w = np.clip(cfg.orient_gain * np.asarray(err), -cfg.w_max, cfg.w_max)
    # no-overshoot: do not step past the target within one frame
    step_cap = np.abs(err) / dt
    return np.clip(w, -step_cap, step_cap)


def _wrist_command(robot: RobotState, target_dir, cfg: PlannerConfig, dt: float):
    err = _wrist_targets(robot, target_dir) - robot.joint_values[3:5]
    return _wrist_rate(err, cfg, dt)
