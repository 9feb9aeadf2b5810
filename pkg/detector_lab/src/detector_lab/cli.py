"""Command-line entry point: train-tep, train-orient, predict."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .data import DatasetError, FormatError, TrainConfig
from .train import (
    load_artifact,
    predict,
    save_artifact,
    train_orientation,
    train_tep,
)


def build_parser():
    ap = argparse.ArgumentParser(prog="detector-lab",
                                 description="Toy two-stage trocar detector")
    sub = ap.add_subparsers(dest="command", required=True)

    for name in ("train-tep", "train-orient"):
        p = sub.add_parser(name, help=f"train the {name.split('-')[1]} stage")
        p.add_argument("--dataset", required=True)
        p.add_argument("--out", default=".")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--epochs", type=int, default=5)
        p.add_argument("--batch-size", type=int, default=16)
        p.add_argument("--lr", type=float, default=2e-3)
        p.add_argument("--crop-size", type=int, default=32)
        p.add_argument("--init", help="continue training from a saved model")

    p = sub.add_parser("predict", help="run both stages over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tep-model", required=True)
    p.add_argument("--orient-model", required=True)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1

    try:
        os.makedirs(args.out, exist_ok=True)
        if args.command in ("train-tep", "train-orient"):
            cfg = TrainConfig(dataset_dir=args.dataset, epochs=args.epochs,
                              batch_size=args.batch_size, learning_rate=args.lr,
                              crop_size=args.crop_size, seed=args.seed)
            if args.command == "train-tep":
                init = load_artifact(args.init, "tep")[1] if args.init else None
                artifact = train_tep(cfg, init_artifact=init)
                path = os.path.join(args.out, "tep_model.pt")
            else:
                init = (load_artifact(args.init, "orientation")[1]
                        if args.init else None)
                artifact = train_orientation(cfg, init_artifact=init)
                path = os.path.join(args.out, "orient_model.pt")
            save_artifact(artifact, path)
            print(json.dumps({"model": path, "trained": artifact["trained"],
                              "loss_history": artifact["loss_history"]}))
        else:
            _, tep_art = load_artifact(args.tep_model, "tep")
            _, orient_art = load_artifact(args.orient_model, "orientation")
            preds = predict(args.dataset, tep_art, orient_art, args.out,
                            seed=args.seed)
            print(json.dumps({"n_frames": len(preds), "out": args.out}))
        return 0
    except (DatasetError, FormatError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
