"""Optimization loop: mixed RGB/keypoint ray batches, Adam, periodic evaluation."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .dataset import SceneDataset, bilinear
from .field import VoxelField, save_checkpoint
from .losses import color_loss, depth_kl_loss, depth_mse_loss, total_loss
from .metrics import IDENTITY, AlignParams, depth_error, fit_scale_shift, psnr, ssim
from .render import render_backward, render_rays, stratified_samples

log = logging.getLogger(__name__)

DEPTH_MODES = ("kl", "mse", "none", "dense")


class ConfigError(ValueError):
    pass


class NumericalError(FloatingPointError):
    """Non-finite loss; carries the iteration and the first offending ray."""

    def __init__(self, iteration: int, ray: int, detail: str):
        self.iteration = iteration
        self.ray = ray
        super().__init__(f"non-finite loss at iteration {iteration}, ray {ray}: {detail}")


@dataclass
class TrainConfig:
    lambda_depth: float = 0.1
    depth_mode: str = "kl"
    n_samples: int = 128
    rays_per_batch: int = 256
    keypoint_ray_fraction: float = 0.5
    iters: int = 2000
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    eval_every: int = 250
    masked_adam: bool = True
    resolution: tuple = (64, 64, 64)
    near: float | None = None
    far: float | None = None

    def __post_init__(self):
        self.resolution = tuple(int(r) for r in np.broadcast_to(self.resolution, (3,)))
        if self.depth_mode not in DEPTH_MODES:
            raise ConfigError(f"depth_mode must be one of {DEPTH_MODES}, got {self.depth_mode!r}")
        if not self.lambda_depth >= 0:
            raise ConfigError(f"lambda_depth must be >= 0, got {self.lambda_depth}")
        for name in ("n_samples", "rays_per_batch", "eval_every"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_samples < 2:
            raise ConfigError("n_samples must be >= 2")
        if self.iters < 0:
            raise ConfigError("iters must be >= 0")
        if not 0 <= self.keypoint_ray_fraction <= 1:
            raise ConfigError("keypoint_ray_fraction must be in [0, 1]")
        if not (self.lr > 0 and 0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps >= 0):
            raise ConfigError("invalid optimizer settings")

    @property
    def depth_fraction(self) -> float:
        return 0.0 if self.depth_mode == "none" else self.keypoint_ray_fraction

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["resolution"] = list(self.resolution)
        return d


# ---------------------------------------------------------------- Adam

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params), 0)


def adam_step(params, grads, state: AdamState, lr, betas=(0.9, 0.999), eps=1e-8,
              active=None):
    """One in-place Adam update with bias correction; returns ``params``.

    ``active`` (indices) restricts the update to those entries and leaves
    the moments of every other entry untouched, the usual masked Adam for
    voxel grids where most cells receive no gradient in a given step.
    """
    if grads.shape != params.shape or state.m.shape != params.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    b1, b2 = betas
    state.step += 1
    c1 = 1 - b1 ** state.step
    c2 = 1 - b2 ** state.step
    if active is None:
        m, v = state.m, state.v
        m *= b1
        m += (1 - b1) * grads
        v *= b2
        v += (1 - b2) * (grads * grads)
        denom = np.sqrt(v / c2)
        denom += eps
        params -= (lr / c1) * m / denom
        return params
    g = grads[active]
    m = b1 * state.m[active] + (1 - b1) * g
    v = b2 * state.v[active] + (1 - b2) * (g * g)
    state.m[active] = m
    state.v[active] = v
    params[active] -= (lr / c1) * m / (np.sqrt(v / c2) + eps)
    return params


# ---------------------------------------------------------------- batches

@dataclass
class RayBatch:
    origins: np.ndarray
    directions: np.ndarray
    rgb: np.ndarray
    depth: np.ndarray       # NaN where the ray has no depth target
    sigma_hat: np.ndarray   # NaN where the ray has no depth target
    n_depth: int            # depth rays come first

    def __len__(self):
        return len(self.rgb)


def _keypoint_arrays(ds: SceneDataset):
    kp = ds.keypoints
    return (np.array([k.image_id - 1 for k in kp], dtype=np.int64),
            np.array([k.u for k in kp]), np.array([k.v for k in kp]),
            np.array([k.D for k in kp]), np.array([k.sigma_hat for k in kp]))


class RaySampler:
    """Draws training batches; caches keypoint arrays between calls."""

    def __init__(self, ds: SceneDataset, cfg: TrainConfig):
        if not ds.train:
            raise ConfigError("dataset has no training views")
        self.ds = ds
        self.cfg = cfg
        self.dense = cfg.depth_mode == "dense"
        self.kp = _keypoint_arrays(ds) if ds.keypoints else None
        self.n_depth = int(np.floor(cfg.depth_fraction * cfg.rays_per_batch))
        if self.n_depth and not self.dense and self.kp is None:
            raise ConfigError("depth supervision requested but the dataset has no keypoints")
        if self.dense and self.n_depth and any(v.depth is None for v in ds.train):
            raise ConfigError("dense depth mode needs a depth map for every training view")

    def _rays(self, views, u, v):
        o = np.empty((len(u), 3))
        d = np.empty((len(u), 3))
        for i in np.unique(views):
            sel = views == i
            cam = self.ds.train[i].camera
            o[sel] = cam.center
            d[sel] = cam.ray_directions(u[sel], v[sel])
        return o, d

    def _pixels(self, rng, n):
        view = rng.integers(0, len(self.ds.train), n)
        sizes = np.array([(t.camera.width, t.camera.height) for t in self.ds.train])
        px = (rng.random(n) * sizes[view, 0]).astype(np.int64)
        py = (rng.random(n) * sizes[view, 1]).astype(np.int64)
        return view, px, py

    def sample(self, rng) -> RayBatch:
        B, nd = self.cfg.rays_per_batch, self.n_depth
        views = np.empty(B, dtype=np.int64)
        u = np.empty(B)
        v = np.empty(B)
        rgb = np.empty((B, 3))
        D = np.full(B, np.nan)
        S = np.full(B, np.nan)
        if nd and self.dense:
            view, px, py = self._pixels(rng, nd)
            views[:nd], u[:nd], v[:nd] = view, px + 0.5, py + 0.5
            for i in np.unique(view):
                sel = view == i
                rgb[:nd][sel] = self.ds.train[i].image[py[sel], px[sel]]
                D[:nd][sel] = self.ds.train[i].depth[py[sel], px[sel]]
            S[:nd] = self.ds.sigma_dense
            # pixels without depth fall back to color-only supervision
            S[:nd][~(D[:nd] > 0)] = np.nan
            D[:nd][~(D[:nd] > 0)] = np.nan
        elif nd:
            img_idx, ku, kv, kd, ks = self.kp
            pick = rng.integers(0, len(ku), nd)
            views[:nd], u[:nd], v[:nd] = img_idx[pick], ku[pick], kv[pick]
            D[:nd], S[:nd] = kd[pick], ks[pick]
            for i in np.unique(views[:nd]):
                sel = views[:nd] == i
                rgb[:nd][sel] = bilinear(self.ds.train[i].image, u[:nd][sel], v[:nd][sel])
        view, px, py = self._pixels(rng, B - nd)
        views[nd:], u[nd:], v[nd:] = view, px + 0.5, py + 0.5
        for i in np.unique(view):
            sel = view == i
            rgb[nd:][sel] = self.ds.train[i].image[py[sel], px[sel]]
        o, d = self._rays(views, u, v)
        return RayBatch(o, d, rgb, D, S, nd)


def sample_ray_batch(ds: SceneDataset, cfg: TrainConfig, rng) -> RayBatch:
    return RaySampler(ds, cfg).sample(rng)


# ---------------------------------------------------------------- evaluation

@dataclass
class EvalRecord:
    iter: int
    psnr: float
    ssim: float
    depth_err_pct: float
    depth_var: float
    loss: float = float("nan")


def render_view(field: VoxelField, camera, near, far, n_samples, chunk=4096):
    """Midpoint-sampled render of a full view: ``(image, depth, depth_var)``."""
    uu, vv = camera.pixel_centers()
    d = camera.ray_directions(uu.ravel(), vv.ravel())
    H, W = camera.height, camera.width
    color = np.empty((H * W, 3))
    depth = np.empty(H * W)
    var = np.empty(H * W)
    for s in range(0, H * W, chunk):
        e = min(s + chunk, H * W)
        samples = stratified_samples(np.full(e - s, near), np.full(e - s, far), n_samples)
        r = render_rays(field, np.broadcast_to(camera.center, (e - s, 3)), d[s:e], samples)
        color[s:e], depth[s:e], var[s:e] = r.color, r.depth_mean, r.depth_var
    return color.reshape(H, W, 3), depth.reshape(H, W), var.reshape(H, W)


def alignment_for(ds: SceneDataset) -> AlignParams:
    """Fit keypoint depth to the reference depth of the training views.

    Falls back to identity when there are fewer than two usable keypoints.
    """
    src, ref = [], []
    for k in ds.keypoints:
        view = ds.train[k.image_id - 1]
        if view.depth is None:
            continue
        H, W = view.depth.shape
        px = min(int(k.u), W - 1)
        py = min(int(k.v), H - 1)
        if view.depth[py, px] > 0:
            src.append(k.D)
            ref.append(view.depth[py, px])
    if len(src) < 2 or np.ptp(src) == 0:
        return IDENTITY
    return fit_scale_shift(src, ref)


def evaluate(field: VoxelField, ds: SceneDataset, cfg: TrainConfig, iteration: int = 0,
             align: AlignParams | None = None) -> EvalRecord:
    near, far = _bounds(ds, cfg)
    align = alignment_for(ds) if align is None else align
    ps, ss, errs, vars_ = [], [], [], []
    for v in ds.test:
        img, dep, var = render_view(field, v.camera, near, far, cfg.n_samples)
        ps.append(psnr(img, v.image))
        ss.append(ssim(img, v.image))
        if v.depth is not None:
            errs.append(depth_error(dep, v.depth, align))
        vars_.append(var.mean())
    return EvalRecord(iteration, float(np.mean(ps)), float(np.mean(ss)),
                      float(np.mean(errs)) if errs else float("nan"), float(np.mean(vars_)))


def _bounds(ds, cfg):
    return (ds.near if cfg.near is None else cfg.near, ds.far if cfg.far is None else cfg.far)


# ---------------------------------------------------------------- training

@dataclass
class TrainResult:
    field: VoxelField
    history: list
    losses: np.ndarray = field(default_factory=lambda: np.zeros(0))


def init_field(ds: SceneDataset, cfg: TrainConfig) -> VoxelField:
    return VoxelField(cfg.resolution, ds.bbox_min, ds.bbox_max)


def train_step(field_: VoxelField, batch: RayBatch, cfg: TrainConfig, rng, it: int = 0):
    """Forward, losses and backward for one batch; returns ``(report, grad)``."""
    near, far = cfg.near, cfg.far
    B = len(batch)
    samples = stratified_samples(np.full(B, near), np.full(B, far), cfg.n_samples, rng)
    r = render_rays(field_, batch.origins, batch.directions, samples)
    lc, d_color = color_loss(r.color, batch.rgb)
    ld, d_depth, d_h = 0.0, None, None
    sel = np.flatnonzero(np.isfinite(batch.depth))
    if cfg.depth_mode != "none" and sel.size:
        if cfg.depth_mode == "mse":
            ld, g = depth_mse_loss(r.depth_mean[sel], batch.depth[sel])
            d_depth = np.zeros(B)
            d_depth[sel] = cfg.lambda_depth * g
        else:
            ld, g = depth_kl_loss(r.weights[sel], samples.t[sel], samples.delta[sel],
                                  batch.depth[sel], batch.sigma_hat[sel])
            d_h = np.zeros_like(r.weights)
            d_h[sel] = cfg.lambda_depth * g
    mode = "kl" if cfg.depth_mode == "dense" else cfg.depth_mode
    report = total_loss(lc, ld, cfg.lambda_depth, mode, B, int(sel.size))
    if not np.isfinite(report.total):
        bad = np.flatnonzero(~np.isfinite(r.color).all(axis=1) | ~np.isfinite(r.weights).all(axis=1))
        raise NumericalError(it, int(bad[0]) if bad.size else -1,
                             f"color={report.color_loss} depth={report.depth_loss}")
    grad = render_backward(r, d_color=d_color, d_depth=d_depth, d_h=d_h)
    return report, grad


def train(ds: SceneDataset, cfg: TrainConfig, out_dir=None, experiment: str = "run",
          callback=None) -> TrainResult:
    """Run ``cfg.iters`` optimization steps; evaluate every ``cfg.eval_every``."""
    near, far = _bounds(ds, cfg)
    run_cfg = TrainConfig(**{**asdict(cfg), "near": near, "far": far})
    rng = np.random.default_rng(cfg.seed)
    field_ = init_field(ds, cfg)
    sampler = RaySampler(ds, run_cfg)
    state = AdamState.zeros_like(field_.params)
    align = alignment_for(ds)
    history, losses = [], np.zeros(cfg.iters)
    out = Path(out_dir) if out_dir is not None else None
    for it in range(1, cfg.iters + 1):
        batch = sampler.sample(rng)
        report, grad = train_step(field_, batch, run_cfg, rng, it)
        losses[it - 1] = report.total
        active = np.flatnonzero(grad) if cfg.masked_adam else None
        adam_step(field_.params, grad, state, cfg.lr, (cfg.beta1, cfg.beta2), cfg.eps, active)
        if it % cfg.eval_every == 0 or it == cfg.iters:
            rec = evaluate(field_, ds, run_cfg, it, align)
            rec.loss = float(np.median(losses[max(0, it - cfg.eval_every):it]))
            history.append(rec)
            log.info("%s it=%d loss=%.5f psnr=%.2f ssim=%.3f depth_err=%.2f%%", experiment,
                     it, rec.loss, rec.psnr, rec.ssim, rec.depth_err_pct)
            if out is not None:
                out.mkdir(parents=True, exist_ok=True)
                save_checkpoint(field_, out / "checkpoint.dsvf")
            if callback is not None:
                callback(rec, field_)
    return TrainResult(field_, history, losses)
