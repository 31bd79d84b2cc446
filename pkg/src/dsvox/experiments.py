"""Few-view comparison presets: depth-supervised vs color-only training.

A run is identified by ``(views, depth_mode, seed)`` under an
:class:`ExperimentPreset`. The dataset seed and the training seed are the
same number so a single integer pins the whole run.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, replace

import numpy as np

from .dataset import SceneDataset, gen_dataset
from .metrics import METRIC_CSV_HEADER
from .train import TrainConfig, TrainResult, train


@dataclass(frozen=True)
class ExperimentPreset:
    scene: str = "sphere-plane"
    n_test: int = 3
    image_size: int = 64
    grid: int = 48
    n_samples: int = 64
    rays_per_batch: int = 256
    keypoint_ray_fraction: float = 0.5
    iters: int = 5000
    eval_every: int = 250
    lr: float = 0.03
    lambda_depth: float = 10.0
    n_points: int = 1500
    sigma_floor: float = 0.15
    sigma_dense: float = 0.15

    def train_config(self, depth_mode: str, seed: int, **overrides) -> TrainConfig:
        cfg = TrainConfig(
            lambda_depth=self.lambda_depth, depth_mode=depth_mode, n_samples=self.n_samples,
            rays_per_batch=self.rays_per_batch, keypoint_ray_fraction=self.keypoint_ray_fraction,
            iters=self.iters, lr=self.lr, seed=seed, eval_every=self.eval_every,
            resolution=(self.grid,) * 3,
        )
        return replace(cfg, **overrides) if overrides else cfg

    def dataset(self, views: int, seed: int) -> SceneDataset:
        return gen_dataset(self.scene, views, self.n_test, self.image_size, sfm="noiseless",
                           n_points=self.n_points, seed=seed, sigma_floor=self.sigma_floor,
                           sigma_dense=self.sigma_dense)


DEFAULT_PRESET = ExperimentPreset()
COMPARE_MODES = ("kl", "mse", "none")


@dataclass
class RunRecord:
    views: int
    depth_mode: str
    seed: int
    history: list

    @property
    def final(self):
        return self.history[-1]

    def rows(self, experiment: str | None = None) -> list:
        name = experiment or self.depth_mode
        return [{"experiment": name, "views": self.views, "iter": h.iter, "psnr": h.psnr,
                 "ssim": h.ssim, "depth_err_pct": h.depth_err_pct} for h in self.history]


def run_one(views: int, depth_mode: str, seed: int, preset: ExperimentPreset = DEFAULT_PRESET,
            dataset: SceneDataset | None = None, out_dir=None) -> RunRecord:
    ds = preset.dataset(views, seed) if dataset is None else dataset
    result: TrainResult = train(ds, preset.train_config(depth_mode, seed), out_dir,
                                experiment=f"{depth_mode}-{views}v-s{seed}")
    return RunRecord(views, depth_mode, seed, result.history)


def iters_to_reach(history, threshold: float) -> float:
    """First evaluated iteration whose test PSNR is ``>= threshold`` (inf if never)."""
    for h in history:
        if h.psnr >= threshold:
            return float(h.iter)
    return float("inf")


def compare(views: int, seed: int, preset: ExperimentPreset = DEFAULT_PRESET,
            modes=COMPARE_MODES) -> dict:
    """Train each mode on one dataset; threshold is the color-only run's final PSNR."""
    ds = preset.dataset(views, seed)
    runs = {m: run_one(views, m, seed, preset, ds) for m in modes}
    ref = runs["none"] if "none" in runs else next(iter(runs.values()))
    threshold = ref.final.psnr
    table = [{"depth_mode": m, "views": views, "final_psnr": r.final.psnr,
              "final_ssim": r.final.ssim, "final_depth_err_pct": r.final.depth_err_pct,
              "threshold_psnr": threshold, "iters_to_threshold": iters_to_reach(r.history, threshold),
              "total_iters": preset.iters}
             for m, r in runs.items()]
    return {"runs": runs, "table": table, "threshold": threshold}


TABLE_HEADER = ["depth_mode", "views", "final_psnr", "final_ssim", "final_depth_err_pct",
                "threshold_psnr", "iters_to_threshold", "total_iters"]


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def table_csv(table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_HEADER)
    for row in table:
        w.writerow([_fmt(row[k]) for k in TABLE_HEADER])
    return buf.getvalue()


def history_csv(runs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_CSV_HEADER)
    for r in runs:
        for row in r.rows():
            w.writerow([_fmt(row[k]) for k in METRIC_CSV_HEADER])
    return buf.getvalue()


def seed_mean(records, attr: str) -> float:
    return float(np.mean([getattr(r.final, attr) for r in records]))


def preset_dict(preset: ExperimentPreset) -> dict:
    return asdict(preset)


def acceptance_grid(seeds=(0, 1, 2)) -> list:
    """Every (views, mode, seed) the few-view comparisons need."""
    cells = [(2, m) for m in ("kl", "none", "mse", "dense")]
    cells += [(v, m) for v in (5, 10) for m in ("kl", "none")]
    return [(v, m, s) for v, m in cells for s in seeds]


def run_grid(cells, preset: ExperimentPreset = DEFAULT_PRESET, progress=None) -> dict:
    """Run every ``(views, mode, seed)``; datasets are shared per ``(views, seed)``."""
    datasets, out = {}, {}
    for views, mode, seed in cells:
        if (views, seed) not in datasets:
            datasets[(views, seed)] = preset.dataset(views, seed)
        out[(views, mode, seed)] = run_one(views, mode, seed, preset, datasets[(views, seed)])
        if progress is not None:
            progress(out[(views, mode, seed)])
    return out
