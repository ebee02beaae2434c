"""Command-line entry point: ``python -m raycal <command> ...``.

Commands::

    sim         render a synthetic dataset
    train       run the curriculum on a dataset
    eval-odom   odometry error report (TSV)
    eval-calib  learned intrinsics, Δr̄ and the distortion grid
    render      novel views and temporal difference frames
    gradcheck   finite-difference check of every differentiable op

Exit status is 0 on success, 1 for invalid input (bad flags, config keys,
malformed files) and 2 for failures while running.
"""

import argparse
import sys
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .config import TrainConfig, load_config
from .curriculum import Checkpoint, infer_odometry, train_run
from .errors import RaycalError
from .evaluation import evaluate_odometry, render_views, scale_ratios, write_calibration
from .geometry import SE3Pose, relative_pose
from .gradsuite import run_suite
from .simscene import read_camera, read_manifest, make_dataset, write_ppm


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p, *names):
    if "config" in names:
        p.add_argument("--config", type=Path, help="key = value file with TrainConfig fields")
    if "dataset" in names:
        p.add_argument("--dataset", type=Path, required=True, help="dataset directory")
    if "checkpoint" in names:
        p.add_argument("--checkpoint", type=Path, required=True, help="checkpoint file")
    if "seed" in names:
        p.add_argument("--seed", type=int, default=None, help="random seed")
    if "out" in names:
        p.add_argument("--out", type=Path, default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="raycal", description="Self-calibrating light-field odometry.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sim", help="render a synthetic dataset")
    _common(p, "seed", "out", "config")
    p.add_argument("--frames", type=int, default=40)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--distorted", action="store_true", help="use k1=0.1, k2=0.01")
    p.add_argument("--labelled-fraction", type=float, default=1.0)

    p = sub.add_parser("train", help="train on a dataset")
    _common(p, "dataset", "config", "seed", "out")
    p.add_argument("--checkpoint", type=Path, default=None, help="resume from this checkpoint")

    p = sub.add_parser("eval-odom", help="odometry report")
    _common(p, "dataset", "checkpoint", "out", "config", "seed")

    p = sub.add_parser("eval-calib", help="calibration report")
    _common(p, "checkpoint", "out", "config", "seed")
    p.add_argument("--dataset", type=Path, default=None, help="dataset whose camera.txt is the reference")

    p = sub.add_parser("render", help="novel views of a frame pair")
    _common(p, "dataset", "checkpoint", "out", "config", "seed")
    p.add_argument("--pair", type=int, default=0, help="index i of the pair (i, i+1)")
    p.add_argument("--views", type=int, default=5, help="number of query poses between the two frames")

    p = sub.add_parser("gradcheck", help="run the gradient check suite")
    _common(p, "seed", "out", "config")
    return parser


def _config(args) -> TrainConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else TrainConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _out(args, default: str) -> Path:
    out = args.out if args.out is not None else Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_sim(args) -> int:
    out = args.out if args.out is not None else Path("dataset")
    seed = args.seed if args.seed is not None else 0
    m = make_dataset(out, n_frames=args.frames, seed=seed, width=args.width, height=args.height,
                     distorted=args.distorted, labelled_fraction=args.labelled_fraction)
    print(f"wrote {len(m)} frames to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    manifest = read_manifest(args.dataset)
    out = _out(args, "run")

    def progress(trainer, reports):
        last = reports[-1] if reports else None
        if last is not None:
            print(f"epoch {trainer.epoch} {last.stage.name} total {last.total:.6g} f {last.f:.4f}", flush=True)

    result = train_run(manifest, cfg, out, resume=args.checkpoint, progress=progress)
    print(f"final checkpoint: {out / 'final.ckpt'} (epoch {result.checkpoint.epoch})")
    return 0


def cmd_eval_odom(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    model = ckpt.model()
    manifest = read_manifest(args.dataset)
    report, preds, gts = evaluate_odometry(model, manifest)
    out = _out(args, "eval")
    (out / "odometry.tsv").write_text(report.to_tsv())
    (out / "odometry_pairs.tsv").write_text(report.per_pair_tsv())
    ratios = scale_ratios(preds, gts)
    sys.stdout.write(report.to_tsv())
    if ratios.size:
        print(f"median |t_pred|/|t_gt|: {np.median(ratios):.4f}")
    return 0


def cmd_eval_calib(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    model = ckpt.model()
    truth = read_camera(args.dataset / "camera.txt") if args.dataset is not None else None
    out = _out(args, "eval")
    report = write_calibration(out, model, truth)
    sys.stdout.write(report.to_tsv())
    return 0


def cmd_render(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    model = ckpt.model()
    manifest = read_manifest(args.dataset)
    i = args.pair
    if not 0 <= i < len(manifest) - 1:
        raise UsageError(f"--pair must lie in [0, {len(manifest) - 2}]")
    if args.views < 2:
        raise UsageError("--views must be at least 2")
    fi = manifest.load_image(i).transpose(2, 0, 1)
    fj = manifest.load_image(i + 1).transpose(2, 0, 1)
    a, b = manifest.frames[i], manifest.frames[i + 1]
    end = relative_pose(a.pose, b.pose) if a.t is not None and b.t is not None else None
    if end is None:
        end = infer_odometry(fi, fj, model)
    # query poses slide from frame i to frame i+1 (slerp on rotation)
    slerp = Slerp([0.0, 1.0], Rotation.from_matrix([np.eye(3), end.R]))
    queries = [SE3Pose(slerp([s]).as_matrix()[0], s * end.t) for s in np.linspace(0.0, 1.0, args.views)]
    images, diffs = render_views(model, fi, fj, queries)
    out = _out(args, "render")
    for k, img in enumerate(images):
        write_ppm(out / f"view_{k:02d}.ppm", img)
    for k, d in enumerate(diffs):
        write_ppm(out / f"diff_{k:02d}.ppm", 0.5 + 0.5 * d)
    target = manifest.load_image(i)
    print(f"rendered {len(images)} views; MSE of view 0 vs frame {i}: {np.mean((images[0] - target) ** 2):.6g}")
    return 0


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    results = run_suite(seed)
    worst = 0.0
    lines = ["case\tchecked\tskipped\tmax_rel_dev\tpassed"]
    for name, r in results:
        worst = max(worst, r.max_rel_dev)
        lines.append(f"{name}\t{r.checked}\t{len(r.skipped)}\t{r.max_rel_dev:.3e}\t{r.passed}")
    text = "\n".join(lines) + "\n"
    if args.out is not None:
        _out(args, "").joinpath("gradcheck.tsv").write_text(text)
    sys.stdout.write(text)
    ok = all(r.passed for _, r in results)
    print(f"max relative deviation: {worst:.3e} ({'pass' if ok else 'FAIL'})")
    return 0 if ok else 2


COMMANDS = {"sim": cmd_sim, "train": cmd_train, "eval-odom": cmd_eval_odom,
            "eval-calib": cmd_eval_calib, "render": cmd_render, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        # configuration, parse, contract and validation errors all derive from ValueError
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RaycalError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
