"""Command-line entry point: ``dsvox <subcommand> ...``.

Exit status: 0 success, 1 usage or configuration error, 2 unreadable or
malformed input, 3 numerical abort during training.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .dataset import (
    SceneDataset,
    camera_from_json,
    gen_dataset,
    read_dataset,
    write_dataset,
    write_depth,
    write_ppm,
)
from .experiments import DEFAULT_PRESET, compare, history_csv, table_csv
from .field import load_checkpoint, save_checkpoint
from .metrics import write_metrics_csv
from .scene import SCENES
from .sfm import ColmapParseError, extract_keypoint_depths, parse_colmap, write_keypoint_csv
from .train import DEPTH_MODES, ConfigError, NumericalError, TrainConfig, evaluate, render_view, train

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _nonneg(text):
    x = float(text)
    if not x >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return x


def _positive_int(text):
    x = int(text)
    if x < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return x


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dsvox", description="Depth-supervised voxel radiance fields.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", help="write a synthetic dataset to disk")
    s.add_argument("--scene", default="sphere-plane", choices=sorted(SCENES))
    s.add_argument("--views", type=_positive_int, default=2)
    s.add_argument("--test-views", type=_positive_int, default=3)
    s.add_argument("--resolution", type=_positive_int, default=64)
    s.add_argument("--sfm", default="noiseless",
                   help="noiseless, simulated, or a COLMAP model directory")
    s.add_argument("--noise", type=_nonneg, default=0.0, help="3D point noise for --sfm simulated")
    s.add_argument("--n-points", type=_positive_int, default=DEFAULT_PRESET.n_points)
    s.add_argument("--sigma-floor", type=_nonneg, default=DEFAULT_PRESET.sigma_floor)
    s.add_argument("--dense", action="store_true", help="mark the dataset for dense depth")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train a field on a dataset")
    t.add_argument("--data", help="dataset directory (default: synthesize --scene)")
    t.add_argument("--scene", default="sphere-plane", choices=sorted(SCENES))
    t.add_argument("--config", help="JSON file with TrainConfig fields")
    t.add_argument("--lambda-depth", type=_nonneg)
    t.add_argument("--depth-mode", choices=DEPTH_MODES)
    t.add_argument("--views", type=_positive_int, help="use only the first N training views")
    t.add_argument("--iters", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)

    r = sub.add_parser("render", help="render a checkpoint from a camera")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--camera", required=True,
                   help="JSON camera (fx, fy, cx, cy, width, height, cam_to_world)")
    r.add_argument("--near", type=float, default=3.0)
    r.add_argument("--far", type=float, default=13.0)
    r.add_argument("--samples", type=_positive_int, default=DEFAULT_PRESET.n_samples)
    r.add_argument("--out", required=True, help="output prefix; writes PREFIX.ppm and PREFIX.dsdm")

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset's test views")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--samples", type=_positive_int, default=DEFAULT_PRESET.n_samples)
    e.add_argument("--experiment", default="eval")
    e.add_argument("--out", help="metrics CSV path (default: stdout)")

    c = sub.add_parser("colmap-export", help="COLMAP model -> keypoint depth CSV")
    c.add_argument("--model", required=True)
    c.add_argument("--format", choices=("binary", "text"))
    c.add_argument("--sigma-scale", type=_nonneg)
    c.add_argument("--sigma-floor", type=_nonneg, default=1e-3)
    c.add_argument("--out", required=True)

    m = sub.add_parser("compare", help="train kl/mse/none and tabulate iterations to threshold")
    m.add_argument("--views", type=_positive_int, default=2)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--iters", type=_positive_int, default=DEFAULT_PRESET.iters)
    m.add_argument("--eval-every", type=_positive_int, default=DEFAULT_PRESET.eval_every)
    m.add_argument("--scene", default=DEFAULT_PRESET.scene, choices=sorted(SCENES))
    m.add_argument("--lambda-depth", type=_nonneg, default=DEFAULT_PRESET.lambda_depth)
    m.add_argument("--out", help="directory for table.csv and metrics.csv")
    return p


def _subset(ds: SceneDataset, views: int) -> SceneDataset:
    if views > len(ds.train):
        raise ConfigError(f"--views {views} but the dataset has {len(ds.train)} training views")
    kp = [k for k in ds.keypoints if k.image_id <= views]
    return SceneDataset(ds.train[:views], ds.test, kp, ds.near, ds.far, ds.bbox_min,
                        ds.bbox_max, ds.scene, ds.dense, ds.sigma_dense)


def _cmd_synth(a):
    ds = gen_dataset(a.scene, a.views, a.test_views, a.resolution, sfm=a.sfm, noise_3d=a.noise,
                     n_points=a.n_points, seed=a.seed, dense=a.dense, sigma_floor=a.sigma_floor,
                     sigma_dense=DEFAULT_PRESET.sigma_dense)
    write_dataset(ds, a.out)
    print(f"wrote {len(ds.train)} train / {len(ds.test)} test views, "
          f"{len(ds.keypoints)} keypoints to {a.out}")


def _train_config(a) -> TrainConfig:
    base = DEFAULT_PRESET.train_config("kl", 0).to_dict()
    if a.config:
        base.update(json.loads(Path(a.config).read_text()))
    cfg = TrainConfig.from_dict(base)
    over = {"lambda_depth": a.lambda_depth, "depth_mode": a.depth_mode, "iters": a.iters,
            "seed": a.seed}
    over = {k: v for k, v in over.items() if v is not None}
    return replace(cfg, **over)


def _cmd_train(a):
    cfg = _train_config(a)
    if a.data:
        ds = read_dataset(a.data)
        if a.views is not None:
            ds = _subset(ds, a.views)
    else:
        ds = replace(DEFAULT_PRESET, scene=a.scene).dataset(a.views or 2, cfg.seed)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    result = train(ds, cfg, out, experiment=cfg.depth_mode)
    rows = [{"experiment": cfg.depth_mode, "views": len(ds.train), "iter": h.iter,
             "psnr": h.psnr, "ssim": h.ssim, "depth_err_pct": h.depth_err_pct}
            for h in result.history]
    write_metrics_csv(rows, out / "metrics.csv")
    if result.history:
        h = result.history[-1]
        print(f"iter {h.iter}: psnr={h.psnr:.3f} ssim={h.ssim:.4f} depth_err={h.depth_err_pct:.3f}%")
    else:
        save_checkpoint(result.field, out / "checkpoint.dsvf")


def _cmd_render(a):
    field = load_checkpoint(a.checkpoint)
    cam = camera_from_json(json.loads(Path(a.camera).read_text()))
    if not 0 < a.near < a.far:
        raise ConfigError("need 0 < near < far")
    img, depth, _ = render_view(field, cam, a.near, a.far, a.samples)
    write_ppm(f"{a.out}.ppm", img)
    write_depth(f"{a.out}.dsdm", depth)


def _cmd_eval(a):
    field = load_checkpoint(a.checkpoint)
    ds = read_dataset(a.data)
    cfg = TrainConfig(n_samples=a.samples, resolution=field.resolution)
    rec = evaluate(field, ds, replace(cfg, near=ds.near, far=ds.far))
    row = {"experiment": a.experiment, "views": len(ds.train), "iter": rec.iter,
           "psnr": rec.psnr, "ssim": rec.ssim, "depth_err_pct": rec.depth_err_pct}
    write_metrics_csv([row], a.out if a.out else sys.stdout)


def _cmd_colmap_export(a):
    model = parse_colmap(a.model, a.format)
    kps = []
    for image_id in sorted(model.images):
        kps.extend(extract_keypoint_depths(model, image_id, a.sigma_scale, a.sigma_floor))
    write_keypoint_csv(kps, a.out)
    print(f"wrote {len(kps)} keypoints from {len(model.images)} images to {a.out}")


def _cmd_compare(a):
    preset = replace(DEFAULT_PRESET, scene=a.scene, iters=a.iters,
                     eval_every=min(a.eval_every, a.iters), lambda_depth=a.lambda_depth)
    res = compare(a.views, a.seed, preset)
    table = table_csv(res["table"])
    sys.stdout.write(table)
    if a.out:
        out = Path(a.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "table.csv").write_text(table)
        (out / "metrics.csv").write_text(history_csv(res["runs"].values()))


_COMMANDS = {"synth": _cmd_synth, "train": _cmd_train, "render": _cmd_render,
             "eval": _cmd_eval, "colmap-export": _cmd_colmap_export, "compare": _cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        _COMMANDS[a.cmd](a)
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"{parser.format_usage()}configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ColmapParseError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
