"""Trial driver, Monte-Carlo batches, detection evaluation and report files.

Everything is deterministic in (config, seed): per-trial randomness comes from
an independent Philox stream keyed by (seed, trial index), so serial and
parallel batch runs produce byte-identical outputs.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .geometry import CameraIntrinsics, RigidTransform, invert, project
from .perception import DetectionEstimate, FilterWindow, TepEstimate, \
    temporal_filter_orientation, temporal_filter_tep
from .planner import DockingPhase, FrameContext, Planner, PlannerConfig, check_success
from .rng import make_rng
from .simworld import (
    JointLimits,
    NoiseModel,
    RobotState,
    Scene,
    SceneConfig,
    _frame_from_z,
    _tilt_about_random_normal,
    camera_pose,
    nominal_camera_pose,
    robot_apply,
    sample_scene,
    sample_view_pose,
    simulate_detection,
    tool_tip_pose,
)


class HarnessError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitialPoseSampler:
    """Randomized start: tip within a standoff shell around the entry point,
    approach direction and tool axis within cones about the trocar axis."""
    min_dist: float = 5.0
    max_dist: float = 12.0
    approach_cone: float = math.radians(20.0)
    max_axis_misalign: float = math.radians(22.0)


@dataclass(frozen=True)
class TrialConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    limits: JointLimits = field(default_factory=JointLimits)
    initial_pose: InitialPoseSampler = field(default_factory=InitialPoseSampler)
    frame_rate: float = 30.0
    max_sim_time: float = 60.0

    def __post_init__(self):
        if self.frame_rate <= 0 or self.max_sim_time <= 0:
            raise HarnessError("frame_rate and max_sim_time must be positive")


@dataclass(frozen=True)
class TrialReport:
    success: bool
    sim_time: float
    final_lateral_mm: float
    final_angle_rad: float
    final_depth_mm: float
    phase_history: tuple
    seed: int
    stream: int
    reason: str
    n_frames: int
    tep_err_mean_px: float
    axis_frac_10deg: float
    axis_frac_15deg: float
    n_detections: int

    def to_dict(self):
        d = asdict(self)
        d["phase_history"] = [[t, p] for t, p in self.phase_history]
        return d


@dataclass(frozen=True)
class BatchSummary:
    n_trials: int
    success_rate: float
    sim_time_mean: float
    sim_time_std: float
    tep_err_mean_px: float
    tep_err_median_px: float
    tep_err_std_px: float
    axis_frac_10deg: float
    axis_frac_15deg: float

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# Single trial
# ---------------------------------------------------------------------------

def _sample_initial_state(scene: Scene, cfg: TrialConfig, rng, max_tries=100):
    sc = cfg.scene
    for _ in range(max_tries):
        approach = _tilt_about_random_normal(
            scene.axis, rng.uniform(0.0, cfg.initial_pose.approach_cone),
            rng.uniform(0.0, 2.0 * math.pi))
        dist = rng.uniform(cfg.initial_pose.min_dist, cfg.initial_pose.max_dist)
        tip0 = scene.tep + dist * approach
        forward = _tilt_about_random_normal(
            -scene.axis, rng.uniform(0.0, cfg.initial_pose.max_axis_misalign),
            rng.uniform(0.0, 2.0 * math.pi))
        home_rot = _frame_from_z(forward)
        ee_t = tip0 - home_rot @ sc.tool_offset.translation
        home = RigidTransform(home_rot, ee_t)
        state = RobotState(home, limits=cfg.limits)
        # the believed camera must see the entry point with margin, both at the
        # start pose and once the wrist has aligned with the trocar axis
        if _tep_visible(state, scene, sc) and _tep_visible(
                _aligned_state(state, scene), scene, sc):
            return state
    raise HarnessError("could not sample an initial pose with the TEP in view")


def _aligned_state(state: RobotState, scene: Scene) -> RobotState:
    from dataclasses import replace as dc_replace

    from .planner import _wrist_targets
    wrist = _wrist_targets(state, -scene.axis)
    joints = state.joint_values.copy()
    joints[3:5] = wrist
    return dc_replace(state, joint_values=joints)


def _tep_visible(state: RobotState, scene: Scene, sc: SceneConfig, margin=40.0):
    try:
        px = project(sc.camera, invert(nominal_camera_pose(state, sc)).apply(scene.tep))
    except Exception:
        return False
    return (margin <= px[0] < sc.camera.width - margin
            and margin <= px[1] < sc.camera.height - margin)


def run_trial(cfg: TrialConfig, seed: int, stream: int = 0,
              trajectory_path=None) -> TrialReport:
    """One closed-loop docking trial: simulate -> perceive -> plan -> apply."""
    rng = make_rng(seed, stream)
    scene = sample_scene(cfg.scene, rng)
    state = _sample_initial_state(scene, cfg, rng)

    dt = 1.0 / cfg.frame_rate
    n_max = int(round(cfg.max_sim_time * cfg.frame_rate))
    planner = Planner(cfg.planner, dt)
    window = FilterWindow()
    K = cfg.scene.camera

    err_sum, n_det = 0.0, 0
    n_lt10, n_lt15 = 0, 0
    phase_history = [(0.0, planner.phase.value)]
    traj = [] if trajectory_path is not None else None

    t = 0.0
    frame = 0
    phase = planner.phase
    while frame < n_max:
        true_cam = camera_pose(state, cfg.scene)
        believed_cam = nominal_camera_pose(state, cfg.scene)
        tip = tool_tip_pose(state, cfg.scene)

        det = simulate_detection(scene, true_cam, K, cfg.noise, rng, frame)
        window.push(det)

        if det.valid:
            gt_px = project(K, invert(true_cam).apply(scene.tep))
            err_sum += float(np.hypot(det.tep.u - gt_px[0], det.tep.v - gt_px[1]))
            ang = _axis_error(det.z_axis, true_cam, scene)
            n_lt10 += ang < math.radians(10.0)
            n_lt15 += ang < math.radians(15.0)
            n_det += 1

        filt = _filtered_detection(window, det, K, frame)
        hint = float(np.linalg.norm(scene.tep - believed_cam.translation))
        frames_ctx = FrameContext(believed_cam, tip, K, hint)
        cmd, phase = planner.step(state, filt, frames_ctx)

        if phase.value != phase_history[-1][1]:
            phase_history.append((t, phase.value))
        if traj is not None:
            traj.append(_traj_row(t, phase, tip, cmd, filt, believed_cam, K))
        if phase in (DockingPhase.DONE, DockingPhase.FAILED):
            break

        state = robot_apply(state, cmd, dt)
        t += dt
        frame += 1

    tip = tool_tip_pose(state, cfg.scene)
    ok, metrics = check_success(tip, scene, cfg.planner)
    if phase == DockingPhase.DONE:
        success = ok
        reason = "docked" if ok else "missed"
    elif phase == DockingPhase.FAILED:
        success, reason = False, "workspace"
    else:
        success, reason = False, "timeout"

    if traj is not None:
        with open(trajectory_path, "w") as f:
            for row in traj:
                f.write(json.dumps(row) + "\n")

    return TrialReport(
        success=success,
        sim_time=t,
        final_lateral_mm=metrics["lateral_mm"],
        final_angle_rad=metrics["angle_rad"],
        final_depth_mm=metrics["depth_mm"],
        phase_history=tuple(phase_history),
        seed=seed,
        stream=stream,
        reason=reason,
        n_frames=frame,
        tep_err_mean_px=err_sum / n_det if n_det else float("nan"),
        axis_frac_10deg=n_lt10 / n_det if n_det else float("nan"),
        axis_frac_15deg=n_lt15 / n_det if n_det else float("nan"),
        n_detections=n_det,
    )


def _axis_error(z_axis_cam, cam_pose, scene):
    true_axis_cam = cam_pose.rotation.T @ scene.axis
    d = float(np.clip(np.dot(z_axis_cam, true_axis_cam), -1.0, 1.0))
    return math.acos(d)


def _filtered_detection(window, det, K, frame):
    """Planner input: temporally filtered pixel + axis, valid only when the
    current frame is valid, the window is full and the pixel is in bounds."""
    if not (det.valid and window.full):
        return DetectionEstimate(None, None, False, frame)
    tep = temporal_filter_tep(window)
    if not (0 <= tep.u < K.width and 0 <= tep.v < K.height):
        return DetectionEstimate(None, None, False, frame)
    axis = temporal_filter_orientation(window)
    return DetectionEstimate(TepEstimate(tep.u, tep.v, frame_index=frame), axis, True, frame)


def _traj_row(t, phase, tip, cmd, det, cam, K):
    from .geometry import backproject_ray
    dist_to_ray = None
    if det.valid:
        d = cam.rotation @ backproject_ray(K, (det.tep.u, det.tep.v))
        rel = tip.translation - cam.translation
        dist_to_ray = float(np.linalg.norm(rel - np.dot(rel, d) * d))
    return {
        "t": t,
        "phase": phase.value,
        "tip_pose": tip.to_flat(),
        "cam_pose": cam.to_flat(),
        "command": {"linear": np.asarray(cmd.linear).tolist(),
                    "angular": np.asarray(cmd.angular).tolist()},
        "det_valid": bool(det.valid),
        "dist_to_ray": dist_to_ray,
    }


# ---------------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------------

def _trial_worker(args):
    cfg, seed, stream = args
    return run_trial(cfg, seed, stream)


def run_batch(cfg: TrialConfig, n: int, seed: int, jobs: int = 1):
    """n independent seeded trials; returns (BatchSummary, reports)."""
    if n < 1:
        raise HarnessError("n must be >= 1")
    tasks = [(cfg, seed, i) for i in range(n)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_trial_worker, tasks, chunksize=8))
    else:
        reports = [_trial_worker(t) for t in tasks]
    return summarize(reports), reports


def summarize(reports) -> BatchSummary:
    """Aggregate per-trial reports.

    Pixel/axis statistics are detection-weighted aggregates of the per-trial
    per-frame values; the median is taken across per-trial means.
    """
    times = np.array([r.sim_time for r in reports])
    means = np.array([r.tep_err_mean_px for r in reports])
    weights = np.array([r.n_detections for r in reports], dtype=float)
    ok = weights > 0
    w = weights[ok]
    tep_mean = float(np.sum(means[ok] * w) / w.sum()) if w.sum() else float("nan")
    f10 = np.array([r.axis_frac_10deg for r in reports])
    f15 = np.array([r.axis_frac_15deg for r in reports])
    return BatchSummary(
        n_trials=len(reports),
        success_rate=float(np.mean([r.success for r in reports])),
        sim_time_mean=float(times.mean()),
        sim_time_std=float(times.std()),
        tep_err_mean_px=tep_mean,
        tep_err_median_px=float(np.median(means[ok])) if ok.any() else float("nan"),
        tep_err_std_px=float(means[ok].std()) if ok.any() else float("nan"),
        axis_frac_10deg=float(np.sum(f10[ok] * w) / w.sum()) if w.sum() else float("nan"),
        axis_frac_15deg=float(np.sum(f15[ok] * w) / w.sum()) if w.sum() else float("nan"),
    )


CSV_FIELDS = ["stream", "seed", "success", "sim_time", "final_lateral_mm",
              "final_angle_rad", "final_depth_mm", "reason", "n_frames",
              "tep_err_mean_px", "axis_frac_10deg", "axis_frac_15deg",
              "n_detections"]


def write_batch_outputs(out_dir, summary: BatchSummary, reports):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(summary.to_dict(), f, indent=2)
        f.write("\n")
    with open(os.path.join(out_dir, "trials.jsonl"), "w") as f:
        for r in reports:
            f.write(json.dumps(r.to_dict()) + "\n")
    with open(os.path.join(out_dir, "trials.csv"), "w", newline="") as f:
        wr = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        wr.writeheader()
        for r in reports:
            d = r.to_dict()
            wr.writerow({k: d[k] for k in CSV_FIELDS})


# ---------------------------------------------------------------------------
# Perception-only evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectionSummary:
    n_frames: int
    tep_err_mean_px: float
    tep_err_median_px: float
    tep_err_std_px: float
    axis_frac_10deg: float
    axis_frac_15deg: float
    filtered_tep_err_mean_px: float
    filtered_axis_frac_10deg: float

    def to_dict(self):
        return asdict(self)


def evaluate_detection(cfg: TrialConfig, n_frames: int, seed: int) -> DetectionSummary:
    """Raw per-frame detection statistics plus 7-frame-filtered statistics.

    Frames are drawn as static 7-frame sequences (one randomized scene and
    viewpoint per sequence) so the temporal filters are exercised too.
    """
    if n_frames < 1:
        raise HarnessError("n_frames must be >= 1")
    window_len = 7
    n_seqs = (n_frames + window_len - 1) // window_len
    errs, angs = [], []
    f_errs, f_angs = [], []
    K = cfg.scene.camera
    total = 0
    for s in range(n_seqs):
        rng = make_rng(seed, s)
        scene = sample_scene(cfg.scene, rng)
        cam = sample_view_pose(scene, K, rng)
        gt_px = project(K, invert(cam).apply(scene.tep))
        true_axis_cam = cam.rotation.T @ scene.axis
        window = FilterWindow()
        for k in range(window_len):
            det = simulate_detection(scene, cam, K, cfg.noise, rng, k)
            window.push(det)
            if det.valid and total < n_frames:
                errs.append(np.hypot(det.tep.u - gt_px[0], det.tep.v - gt_px[1]))
                angs.append(_axis_error(det.z_axis, cam, scene))
            total += 1
        if window.full:
            tep = temporal_filter_tep(window)
            f_errs.append(np.hypot(tep.u - gt_px[0], tep.v - gt_px[1]))
            axis = temporal_filter_orientation(window)
            f_angs.append(math.acos(float(np.clip(np.dot(axis, true_axis_cam), -1, 1))))
    errs = np.array(errs)
    angs = np.array(angs)
    f_errs = np.array(f_errs)
    f_angs = np.array(f_angs)
    return DetectionSummary(
        n_frames=int(errs.size),
        tep_err_mean_px=float(errs.mean()),
        tep_err_median_px=float(np.median(errs)),
        tep_err_std_px=float(errs.std()),
        axis_frac_10deg=float(np.mean(angs < math.radians(10.0))),
        axis_frac_15deg=float(np.mean(angs < math.radians(15.0))),
        filtered_tep_err_mean_px=float(f_errs.mean()) if f_errs.size else float("nan"),
        filtered_axis_frac_10deg=float(np.mean(f_angs < math.radians(10.0)))
        if f_angs.size else float("nan"),
    )


def evaluate_prediction_files(pred_jsonl, labels_jsonl, base_dir=None):
    """File-fed mode: score externally produced predictions against labels.

    Predicted heatmaps (PFM) are run through the candidate/median extraction;
    predicted 6D orientations are decoded and compared on the Z axis.
    """
    from . import perception
    from .geometry import sixd_to_rot

    base = base_dir or os.path.dirname(os.path.abspath(pred_jsonl))
    labels = {}
    with open(labels_jsonl) as f:
        for line in f:
            rec = json.loads(line)
            labels[rec["frame"]] = rec
    errs, angs = [], []
    with open(pred_jsonl) as f:
        for line in f:
            rec = json.loads(line)
            gt = labels[rec["frame"]]
            cmap = perception.load_confidence_map(os.path.join(base, rec["pfm_path"]))
            tep = perception.detect(cmap)
            errs.append(np.hypot(tep.u - gt["tep_px"][0], tep.v - gt["tep_px"][1]))
            z_pred = sixd_to_rot(rec["r6d"])[:, 2]
            z_gt = sixd_to_rot(gt["r6d"])[:, 2]
            angs.append(math.acos(float(np.clip(np.dot(z_pred, z_gt), -1, 1))))
    errs, angs = np.array(errs), np.array(angs)
    return {
        "n_frames": int(errs.size),
        "tep_err_mean_px": float(errs.mean()),
        "tep_err_median_px": float(np.median(errs)),
        "axis_err_mean_deg": float(np.degrees(angs.mean())),
        "axis_frac_10deg": float(np.mean(angs < math.radians(10.0))),
    }


# ---------------------------------------------------------------------------
# Hand-eye error sweep
# ---------------------------------------------------------------------------

def sweep_handeye(cfg: TrialConfig, offsets, n_per_point: int, seed: int, jobs: int = 1):
    """Success rate as a function of lateral hand-eye miscalibration (mm)."""
    points = []
    for off in offsets:
        err = RigidTransform(np.eye(3), np.array([float(off), 0.0, 0.0]))
        scene_cfg = replace(cfg.scene, hand_eye_error=err)
        cfg_j = replace(cfg, scene=scene_cfg)
        # common random numbers: identical trial streams at every offset, so the
        # sweep compares paired trials and isolates the miscalibration effect
        tasks = [(cfg_j, seed, i) for i in range(n_per_point)]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                reports = list(pool.map(_trial_worker, tasks, chunksize=8))
        else:
            reports = [_trial_worker(t) for t in tasks]
        points.append({"offset_mm": float(off),
                       "success_rate": float(np.mean([r.success for r in reports]))})
    return points
