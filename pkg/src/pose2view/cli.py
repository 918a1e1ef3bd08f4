"""Command-line surface: dataset generation, training, eval, synthesis, serving.

Every verb exits 0 on success; domain errors print a machine-readable JSON
object on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import ExperimentConfig, load_config
from .errors import Pose2ViewError
from .pipeline import Experiment, nearest_poses
from .pose import Pose, interpolate_trajectory, trajectory_request_from_json
from .toyscene import generate_toy_scene, materialize_toy_dataset


def _add_config_arg(p):
    p.add_argument("--config", required=True, help="experiment config JSON")


def cmd_toy_gen(args):
    spec = generate_toy_scene(seed=args.seed, n_primitives=args.n_primitives,
                              image_size=args.image_size)
    pose_list = materialize_toy_dataset(spec, args.n_train, args.n_test,
                                        args.sampler_seed, args.out)
    print(json.dumps({"pose_list": pose_list, "out_dir": args.out,
                      "n_train": args.n_train, "n_test": args.n_test}))
    if args.emit_config:
        cfg = ExperimentConfig.toy_default(out_dir=args.emit_experiment_dir
                                           or os.path.join(args.out, "experiment"),
                                           image_size=args.image_size,
                                           seed=args.seed,
                                           n_train=args.n_train, n_test=args.n_test)
        with open(args.emit_config, "w") as fh:
            fh.write(cfg.to_json())
        print(json.dumps({"config": args.emit_config}))


def cmd_train_gennet(args):
    config = load_config(args.config)
    ckpt = Experiment(config).run_stage1(resume=not args.fresh)
    print(json.dumps({"stage": "gennet", "epochs": ckpt.step,
                      "checkpoint": Experiment(config).checkpoint_path(Experiment.STAGE1)}))


def cmd_train_refinenet(args):
    config = load_config(args.config)
    exp = Experiment(config)
    ckpt = exp.run_stage2(no_perceptual=args.no_perceptual)
    stage = Experiment.STAGE2_WO_PL if args.no_perceptual else Experiment.STAGE2_PL
    print(json.dumps({"stage": "refinenet", "variant": ckpt.extra["variant"],
                      "epochs": ckpt.step, "checkpoint": exp.checkpoint_path(stage)}))


def cmd_eval(args):
    config = load_config(args.config)
    exp = Experiment(config)
    report = exp.run_eval()
    print(report.to_table())
    print(json.dumps({"report": os.path.join(config.out_dir, "eval", "report.json")}))


def cmd_trajectory(args):
    config = load_config(args.config)
    exp = Experiment(config)
    with open(args.keyposes) as fh:
        keyposes, frames_per_segment = trajectory_request_from_json(fh.read())
    if args.frames_per_segment is not None:
        frames_per_segment = args.frames_per_segment
    traj = interpolate_trajectory(keyposes, frames_per_segment)
    paths = exp.render_trajectory(traj, args.out, stage=args.stage)
    print(json.dumps({"frames": len(paths), "out_dir": args.out}))


def cmd_nearest(args):
    config = load_config(args.config)
    exp = Experiment(config)
    vals = [float(v) for v in args.pose.split(",")]
    if len(vals) != 7:
        raise Pose2ViewError("pose must be 7 comma-separated reals (x,y,z,w,qx,qy,qz)")
    query = Pose.from_vector(vals)
    split = exp.load_split()
    hits = nearest_poses(query, split.train, k=args.k, alpha=args.alpha)
    print(json.dumps({"nearest": [
        {"t": [float(v) for v in s.pose.translation],
         "q": [float(v) for v in s.pose.rotation],
         "image": s.image_ref if isinstance(s.image_ref, str) else None,
         "sequence_id": s.sequence_id,
         "distance": d}
        for s, d in hits]}, indent=2))


def cmd_serve(args):
    from .service import serve_experiment

    serve_experiment(args.checkpoint_dir, host=args.host, port=args.port,
                     stage=args.stage, max_inflight=args.max_inflight)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pose2view",
        description="Two-stage synthesis of scene images from 6-DoF camera poses")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toy-gen", help="materialize a procedural toy dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--sampler-seed", type=int, default=7)
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--n-test", type=int, default=50)
    p.add_argument("--n-primitives", type=int, default=5)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--emit-config", help="also write a ready-to-train experiment config")
    p.add_argument("--emit-experiment-dir", help="out_dir recorded in the emitted config")
    p.set_defaults(func=cmd_toy_gen)

    p = sub.add_parser("train-gennet", help="stage 1: train the coarse generator")
    _add_config_arg(p)
    p.add_argument("--fresh", action="store_true", help="ignore existing checkpoints")
    p.set_defaults(func=cmd_train_gennet)

    p = sub.add_parser("train-refinenet", help="stage 2: train the adversarial refiner")
    _add_config_arg(p)
    p.add_argument("--no-perceptual", action="store_true",
                   help="ablation: drop style and content terms")
    p.set_defaults(func=cmd_train_refinenet)

    p = sub.add_parser("eval", help="metric table over the test split")
    _add_config_arg(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("trajectory", help="render an interpolated keypose trajectory")
    _add_config_arg(p)
    p.add_argument("--keyposes", required=True, help="trajectory JSON file")
    p.add_argument("--out", required=True, help="frame output directory")
    p.add_argument("--stage", choices=("coarse", "refined"), default="coarse")
    p.add_argument("--frames-per-segment", type=int, default=None,
                   help="override the value in the keyposes file")
    p.set_defaults(func=cmd_trajectory)

    p = sub.add_parser("nearest", help="top-k training poses nearest a query pose")
    _add_config_arg(p)
    p.add_argument("--pose", required=True, help="x,y,z,w,qx,qy,qz")
    p.add_argument("-k", type=int, default=3)
    p.add_argument("--alpha", type=float, default=1.0)
    p.set_defaults(func=cmd_nearest)

    p = sub.add_parser("serve", help="HTTP inference service")
    p.add_argument("--checkpoint-dir", required=True,
                   help="experiment output directory holding config + checkpoints")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--stage", choices=("auto", "coarse", "refined"), default="auto")
    p.add_argument("--max-inflight", type=int, default=2)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except Pose2ViewError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "OSError", "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
