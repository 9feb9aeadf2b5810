"""JSON (de)serialization of the trial configuration.

One document with sections "scene", "noise", "planner", "limits",
"initial_pose" plus scalar keys "frame_rate" and "max_sim_time"; every key is
optional and falls back to the dataclass default.  Transforms are 12 floats
(row-major rotation then translation, mm); angles are radians.
"""

from __future__ import annotations

import dataclasses
import json

from .geometry import CameraIntrinsics, RigidTransform
from .harness import InitialPoseSampler, TrialConfig
from .planner import PlannerConfig
from .simworld import JointLimits, NoiseModel, SceneConfig


class ConfigFileError(ValueError):
    pass


def _from_section(cls, data: dict, special=()):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigFileError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {k: v for k, v in data.items() if k not in special}
    return cls(**kwargs)


def scene_config_from_dict(d: dict) -> SceneConfig:
    d = dict(d)
    for key in ("hand_eye", "hand_eye_error", "tool_offset"):
        if key in d:
            d[key] = RigidTransform.from_flat(d[key])
    if "camera" in d:
        d["camera"] = CameraIntrinsics(**d["camera"])
    return _from_section(SceneConfig, d)


def trial_config_from_dict(d: dict) -> TrialConfig:
    d = dict(d)
    kwargs = {}
    if "scene" in d:
        kwargs["scene"] = scene_config_from_dict(d.pop("scene"))
    for key, cls in (("noise", NoiseModel), ("planner", PlannerConfig),
                     ("limits", JointLimits), ("initial_pose", InitialPoseSampler)):
        if key in d:
            kwargs[key] = _from_section(cls, d.pop(key))
    for key in ("frame_rate", "max_sim_time"):
        if key in d:
            kwargs[key] = d.pop(key)
    if d:
        raise ConfigFileError(f"unknown top-level keys: {sorted(d)}")
    return TrialConfig(**kwargs)


def trial_config_to_dict(cfg: TrialConfig) -> dict:
    scene = dataclasses.asdict(cfg.scene)
    scene["camera"] = dataclasses.asdict(cfg.scene.camera)
    for key in ("hand_eye", "hand_eye_error", "tool_offset"):
        scene[key] = getattr(cfg.scene, key).to_flat()
    return {
        "scene": scene,
        "noise": dataclasses.asdict(cfg.noise),
        "planner": dataclasses.asdict(cfg.planner),
        "limits": dataclasses.asdict(cfg.limits),
        "initial_pose": dataclasses.asdict(cfg.initial_pose),
        "frame_rate": cfg.frame_rate,
        "max_sim_time": cfg.max_sim_time,
    }


def load_trial_config(path) -> TrialConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigFileError(f"cannot read config file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigFileError(f"invalid JSON in {path}: {e}") from e
    return trial_config_from_dict(data)
