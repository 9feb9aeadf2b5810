"""Command-line entry point.

Subcommands: trial, batch, eval-detection, export-dataset, sweep-handeye.
Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from . import harness, simworld


def _add_common(p):
    p.add_argument("--config", help="JSON config file (defaults used when omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--format", choices=["json", "csv"], default="json",
                   help="stdout summary format")


def build_parser():
    ap = argparse.ArgumentParser(prog="trocardock",
                                 description="Autonomous trocar docking simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trial", help="run a single closed-loop docking trial")
    _add_common(p)
    p.add_argument("--trajectory", action="store_true",
                   help="write trajectory.jsonl to the output directory")

    p = sub.add_parser("batch", help="run a Monte-Carlo batch of trials")
    _add_common(p)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("eval-detection", help="perception-only error statistics")
    _add_common(p)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--predictions", help="prediction JSONL (file-fed mode)")
    p.add_argument("--labels", help="labels JSONL for file-fed mode")

    p = sub.add_parser("export-dataset", help="write synthetic confidence-map dataset")
    _add_common(p)
    p.add_argument("--n", type=int, default=2000)

    p = sub.add_parser("sweep-handeye", help="success rate vs hand-eye offset")
    _add_common(p)
    p.add_argument("--n", type=int, default=50, help="trials per sweep point")
    p.add_argument("--max-offset", type=float, default=0.5)
    p.add_argument("--points", type=int, default=6)
    p.add_argument("--jobs", type=int, default=1)
    return ap


def _load_config(args) -> harness.TrialConfig:
    if args.config:
        return cfgmod.load_trial_config(args.config)
    return harness.TrialConfig()


def _emit(data, fmt):
    if fmt == "csv":
        keys = list(data.keys())
        print(",".join(keys))
        print(",".join(str(data[k]) for k in keys))
    else:
        print(json.dumps(data, indent=2))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1

    try:
        cfg = _load_config(args)
        os.makedirs(args.out, exist_ok=True)

        if args.command == "trial":
            traj = os.path.join(args.out, "trajectory.jsonl") if args.trajectory else None
            report = harness.run_trial(cfg, args.seed, trajectory_path=traj)
            with open(os.path.join(args.out, "trial.json"), "w") as f:
                json.dump(report.to_dict(), f, indent=2)
            _emit(report.to_dict() | {"phase_history": "..."}, args.format)

        elif args.command == "batch":
            summary, reports = harness.run_batch(cfg, args.n, args.seed, jobs=args.jobs)
            harness.write_batch_outputs(args.out, summary, reports)
            _emit(summary.to_dict(), args.format)

        elif args.command == "eval-detection":
            if args.predictions:
                if not args.labels:
                    print("--labels is required with --predictions", file=sys.stderr)
                    return 1
                result = harness.evaluate_prediction_files(args.predictions, args.labels)
            else:
                result = harness.evaluate_detection(cfg, args.n, args.seed).to_dict()
            with open(os.path.join(args.out, "detection_summary.json"), "w") as f:
                json.dump(result, f, indent=2)
            _emit(result, args.format)

        elif args.command == "export-dataset":
            records = simworld.export_dataset(cfg.scene, args.n, args.out, args.seed)
            _emit({"n_frames": len(records), "out": args.out}, args.format)

        elif args.command == "sweep-handeye":
            offsets = np.linspace(0.0, args.max_offset, args.points)
            points = harness.sweep_handeye(cfg, offsets, args.n, args.seed,
                                           jobs=args.jobs)
            with open(os.path.join(args.out, "sweep.json"), "w") as f:
                json.dump(points, f, indent=2)
            _emit({"points": points}, args.format)

        return 0
    except cfgmod.ConfigFileError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
