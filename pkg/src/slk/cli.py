"""``slk`` command line: validate, eval, sweep, simulate, solve-translation, bins, bev.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import kitti_io
from .bin_codec import DOF_NAMES, DofSchedules
from .evaluation import Difficulty, Interp, evaluate, sweep_iou
from .geometry import bev_svg
from .kitti_io import KittiParseError
from .synth import OracleNoise, SceneConfig, ablation_arms, depth_error_histogram, depth_errors
from .synth import generate_dataset, predict_dataset
from .translation import NoPhysicalSolution, solve_translation

log = logging.getLogger("slk")

LABEL_DIR = "label_2"
CALIB_DIR = "calib"
PRED_DIR = "pred"


class SlkError(Exception):
    """A domain error reported to the user with exit code 1."""


@dataclass
class RunConfig:
    labels: Path | None = None
    calib: Path | None = None
    preds: Path | None = None
    out: Path | None = None
    class_name: str = "Car"
    iou: float = 0.7
    interp: Interp = Interp.INTERP40
    bins: Path | None = None
    seed: int = 0
    threads: int = 1

    def check(self, *required: str) -> "RunConfig":
        if not 0.0 <= self.iou <= 1.0:
            raise SlkError(f"--iou must lie in [0, 1], got {self.iou}")
        for name in required:
            p = getattr(self, name)
            if p is None:
                raise SlkError(f"--{name} is required")
            if not Path(p).is_dir():
                raise SlkError(f"{name} directory not found: {p}")
        if self.bins is not None and not Path(self.bins).is_file():
            raise SlkError(f"bin config not found: {self.bins}")
        return self

    def schedules(self) -> DofSchedules:
        if self.bins is None:
            return DofSchedules()
        try:
            return DofSchedules.load(self.bins)
        except ValueError as exc:
            raise SlkError(f"{self.bins}: {exc}") from None


def _color(text: str, code: str) -> str:
    if os.environ.get("SLK_NO_COLOR") or not sys.stdout.isatty():
        return text
    return f"\033[{code}m{text}\033[0m"


def _run_config(args) -> RunConfig:
    get = lambda k, d=None: getattr(args, k, d)  # noqa: E731
    return RunConfig(
        labels=Path(args.labels) if get("labels") else None,
        calib=Path(args.calib) if get("calib") else None,
        preds=Path(args.preds) if get("preds") else None,
        out=Path(args.out) if get("out") else None,
        class_name=get("class_name", "Car"),
        iou=get("iou", 0.7),
        interp=Interp(get("interp", 40)),
        bins=Path(args.bins) if get("bins") else None,
        seed=get("seed", 0),
        threads=get("threads") or (os.cpu_count() or 1),
    )


def _load_eval_inputs(cfg: RunConfig):
    labels = kitti_io.load_label_dir(cfg.labels)
    if not labels:
        raise SlkError(f"no label files in {cfg.labels}")
    preds = kitti_io.load_prediction_dir(cfg.preds)
    missing = [f for f in labels if f not in preds]
    if missing:
        # KITTI convention: a missing prediction file means no detections
        log.warning("%d frames without a prediction file; treated as empty", len(missing))
        for f in missing:
            preds[f] = []
    if cfg.calib is not None:
        for f in labels:
            if not kitti_io.frame_path(cfg.calib, f).is_file():
                raise SlkError(f"calibration missing for frame {f:06d} in {cfg.calib}")
    return labels, preds


# subcommands -------------------------------------------------------------------

def cmd_validate(args) -> int:
    cfg = _run_config(args).check("labels")
    errors, warnings = [], []
    checks = [(cfg.labels, kitti_io.read_labels), (cfg.preds, kitti_io.read_predictions),
              (cfg.calib, kitti_io.read_calib)]
    counts = {}
    for directory, reader in checks:
        if directory is None:
            continue
        if not directory.is_dir():
            errors.append(f"{directory}: not a directory")
            continue
        frames = kitti_io.list_frames(directory)
        counts[str(directory)] = len(frames)
        if not frames:
            warnings.append(f"{directory}: no frame files")
        for f in frames:
            path = kitti_io.frame_path(directory, f)
            try:
                objs = reader(path)
            except KittiParseError as exc:
                errors.append(str(exc))
                continue
            if isinstance(objs, list):
                warnings.extend(f"{path}: {msg}" for msg in kitti_io.validate_objects(objs))
    for w in warnings:
        print(_color("warning", "33") + f": {w}", file=sys.stderr)
    for e in errors:
        print(e)
    summary = ", ".join(f"{d}: {n} files" for d, n in counts.items())
    print(f"{summary}; {len(errors)} errors, {len(warnings)} warnings")
    return 1 if errors else 0


def cmd_eval(args) -> int:
    cfg = _run_config(args).check("labels", "preds")
    labels, preds = _load_eval_inputs(cfg)
    report = evaluate(labels, preds, cfg.iou, class_name=cfg.class_name, interp=cfg.interp, threads=cfg.threads)
    text = report.format_text()
    head, _, rest = text.partition("\n")
    print(_color(head, "1"))
    print(rest, end="")
    if cfg.out is not None:
        cfg.out.mkdir(parents=True, exist_ok=True)
        (cfg.out / "result.txt").write_text(report.format_result_file())
    return 0


def cmd_sweep(args) -> int:
    cfg = _run_config(args).check("labels", "preds")
    labels, preds = _load_eval_inputs(cfg)
    curves = sweep_iou(labels, preds, class_name=cfg.class_name, interp=cfg.interp, threads=cfg.threads)
    out = cfg.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    for diff, curve in curves.items():
        path = out / f"sweep_{diff.value.lower()}.csv"
        path.write_text("iou,ap\n" + "".join(f"{t:.2f},{ap!r}\n" for t, ap in curve))
        print(f"{diff.value:<9} AP@0.50={_at(curve, 0.5):.4f} AP@0.70={_at(curve, 0.7):.4f} -> {path}")
    return 0


def _at(curve, t):
    return next(ap for thr, ap in curve if abs(thr - t) < 1e-9)


def cmd_simulate(args) -> int:
    cfg = _run_config(args)
    if cfg.out is None:
        raise SlkError("--out is required")
    cfg.check()
    if args.frames < 1:
        raise SlkError("--frames must be positive")
    scene = SceneConfig(seed=cfg.seed, depth_range=(args.min_depth, args.max_depth))
    noise = OracleNoise.uniform(args.p_hit, args.spread, args.softness, args.jitter)
    arm = ablation_arms()[args.arm]
    if cfg.bins is not None:
        arm = replace(arm, schedules=cfg.schedules())
    labels, calibs = generate_dataset(scene, args.frames)
    preds = predict_dataset(labels, calibs, noise, arm, seed=cfg.seed, threads=cfg.threads)
    kitti_io.write_tree(cfg.out / LABEL_DIR, labels)
    kitti_io.write_calib_tree(cfg.out / CALIB_DIR, calibs)
    kitti_io.write_tree(cfg.out / PRED_DIR, preds)
    errs = depth_errors(labels, preds)
    edges, counts = depth_error_histogram(errs)
    (cfg.out / "depth_errors.csv").write_text(
        "lower,upper,count\n" + "".join(f"{lo:.2f},{hi:.2f},{c}\n" for lo, hi, c in zip(edges[:-1], edges[1:], counts))
    )
    n = sum(len(v) for v in labels.values())
    print(f"wrote {args.frames} frames, {n} objects to {cfg.out}")
    if errs.size:
        print(f"depth error (gt - pred): mean {errs.mean():+.3f} m, mean |.| {np.abs(errs).mean():.3f} m")
    return 0


def cmd_solve_translation(args) -> int:
    try:
        obj = kitti_io.parse_label_file(args.line)
    except KittiParseError:
        obj = kitti_io.parse_prediction_file(args.line)
    if len(obj) != 1:
        raise SlkError("expected exactly one label line")
    obj = obj[0]
    calib = kitti_io.read_calib(args.calib)
    try:
        sol = solve_translation(obj.box2d, obj.dims, obj.rotation_y, calib.projection, literal_rhs=args.literal)
    except NoPhysicalSolution as exc:
        raise SlkError(str(exc)) from None
    tx, ty, tz = sol.t
    print(f"T = {tx:.4f} {ty:.4f} {tz:.4f}")
    print(f"residual = {sol.residual:.6g}")
    print(f"reprojection_error_px = {sol.reprojection_error:.6g}")
    print("configuration = " + " ".join(str(c) for c in sol.configuration))
    return 0


def cmd_bins(args) -> int:
    cfg = _run_config(args).check()
    scheds = cfg.schedules()
    names = [args.dof] if args.dof else list(DOF_NAMES)
    for name in names:
        s = getattr(scheds, name)
        print(f"# {name}: {s.kind.value} lower={s.lower:g} count={s.count} step={s.step:g}")
        print(f"{'bin':>4} {'lower':>12} {'upper':>12} {'center':>12}")
        for i in range(s.count):
            lo, hi, c = s.edges[i], s.edges[i + 1], s.centers[i]
            print(f"{i:>4} {_num(lo):>12} {_num(hi):>12} {_num(c):>12}")
    if args.dump:
        sys.stdout.write(scheds.to_config())
    return 0


def _num(x: float) -> str:
    return f"{x:.6f}".rstrip("0").rstrip(".") if math.isfinite(x) else str(x)


def cmd_bev(args) -> int:
    cfg = _run_config(args).check("labels")
    path = kitti_io.frame_path(cfg.labels, args.frame)
    if not path.is_file():
        raise SlkError(f"frame {args.frame:06d} not found in {cfg.labels}")
    gts = [o for o in kitti_io.read_labels(path) if not o.is_dontcare and o.class_name == cfg.class_name]
    preds = []
    if cfg.preds is not None:
        ppath = kitti_io.frame_path(cfg.preds, args.frame)
        if not ppath.is_file():
            raise SlkError(f"frame {args.frame:06d} not found in {cfg.preds}")
        preds = [o for o in kitti_io.read_predictions(ppath) if o.class_name == cfg.class_name]
    svg = bev_svg([g.box3d for g in gts], [p.box3d for p in preds], title=f"frame {args.frame:06d}")
    out = cfg.out or Path(f"{args.frame:06d}.svg")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    print(f"wrote {out}")
    return 0


# parser ---------------------------------------------------------------------------

def _probability(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("must lie in [0, 1]")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slk", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, labels=True, preds=False, calib=False, out=False, evaluation=False):
        if labels:
            sp.add_argument("--labels", help="directory of NNNNNN.txt label files")
        if preds:
            sp.add_argument("--preds", help="directory of NNNNNN.txt prediction files")
        if calib:
            sp.add_argument("--calib", help="directory of NNNNNN.txt calibration files")
        if out:
            sp.add_argument("--out")
        if evaluation:
            sp.add_argument("--class", dest="class_name", default="Car")
            sp.add_argument("--iou", type=_probability, default=0.7)
            sp.add_argument("--interp", type=int, choices=(11, 40), default=40)
        sp.add_argument("--threads", type=int, default=None)

    sp = sub.add_parser("validate", help="parse every file and report errors")
    common(sp, preds=True, calib=True)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("eval", help="3D AP per difficulty")
    common(sp, preds=True, calib=True, out=True, evaluation=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sweep", help="AP over IoU thresholds 0.00..1.00")
    common(sp, preds=True, calib=True, out=True, evaluation=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("simulate", help="synthetic scenes plus oracle predictions")
    common(sp, labels=False, out=True)
    sp.add_argument("--frames", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--bins")
    sp.add_argument("--p-hit", type=_probability, default=0.9)
    sp.add_argument("--spread", type=float, default=0.5)
    sp.add_argument("--softness", type=float, default=0.2)
    sp.add_argument("--jitter", type=float, default=2.0, help="RoI center jitter, pixels")
    sp.add_argument("--min-depth", type=float, default=5.0)
    sp.add_argument("--max-depth", type=float, default=60.0)
    sp.add_argument("--arm", choices=sorted(ablation_arms()), default="final")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("solve-translation", help="translation from a label line and a calib file")
    sp.add_argument("--line", required=True)
    sp.add_argument("--calib", required=True, help="calibration file")
    sp.add_argument("--literal", action="store_true", help="use the (v0 - x_min) right-hand-side variant")
    sp.set_defaults(func=cmd_solve_translation)

    sp = sub.add_parser("bins", help="print bin edges and centers")
    sp.add_argument("--bins")
    sp.add_argument("--dof", choices=DOF_NAMES)
    sp.add_argument("--dump", action="store_true", help="also print the schedule config")
    sp.set_defaults(func=cmd_bins)

    sp = sub.add_parser("bev", help="bird's-eye view SVG of one frame")
    common(sp, preds=True, out=True)
    sp.add_argument("--frame", type=int, required=True)
    sp.add_argument("--class", dest="class_name", default="Car")
    sp.set_defaults(func=cmd_bev)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (SlkError, KittiParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
