"""Discrete volume rendering along rays with an opaque far wall.

Everything is batched: arrays carry a leading ray axis ``B`` and a sample
axis ``K``. With ``s_k = sigma_k * delta_k``::

    alpha_k = 1 - exp(-s_k)        (k < K),   alpha_K = 1
    T_k     = exp(-sum_{j<k} s_j)
    h_k     = T_k * alpha_k

so ``sum_k h_k == 1`` exactly up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import FieldSample, VoxelField, accumulate_field_grad, field_grad, sample_field

EXP_FLOOR = -80.0


@dataclass
class RaySamples:
    t: np.ndarray
    delta: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.t.shape[-1]


@dataclass
class RayRender:
    color: np.ndarray
    weights: np.ndarray
    trans: np.ndarray
    depth_mean: np.ndarray
    depth_var: np.ndarray
    samples: RaySamples
    field_sample: FieldSample

    def __len__(self):
        return self.weights.shape[0]


def stratified_samples(near, far, n_samples: int, rng=None) -> RaySamples:
    """One sample per equal bin of ``[near, far]``.

    ``rng=None`` puts every sample at its bin center; otherwise each sample is
    uniform inside its bin. ``near``/``far`` may be scalars or (B,) arrays.
    """
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples per ray, got {n_samples}")
    near = np.atleast_1d(np.asarray(near, dtype=np.float64))
    far = np.atleast_1d(np.asarray(far, dtype=np.float64))
    near, far = np.broadcast_arrays(near, far)
    if rng is None:
        u = np.broadcast_to(np.arange(n_samples) + 0.5, near.shape + (n_samples,))
    else:
        u = np.arange(n_samples) + rng.random(near.shape + (n_samples,))
    width = (far - near)[:, None] / n_samples
    t = near[:, None] + u * width
    delta = np.empty_like(t)
    delta[:, :-1] = np.diff(t, axis=1)
    delta[:, -1] = delta[:, -2]
    return RaySamples(t, delta)


def composite(sigma, delta):
    """Transmittance and termination weights from per-sample densities."""
    s = sigma * delta
    s[..., -1] = 0.0
    cum = np.cumsum(s, axis=-1) - s  # exclusive
    trans = np.exp(np.maximum(-cum, EXP_FLOOR))
    alpha = -np.expm1(-s)
    alpha[..., -1] = 1.0
    return trans, trans * alpha


def render_rays(field: VoxelField, origins, directions, samples: RaySamples) -> RayRender:
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    t = samples.t
    points = origins[:, None, :] + t[..., None] * directions[:, None, :]
    fs = sample_field(field, points)
    trans, h = composite(fs.sigma.copy(), samples.delta)
    color = np.einsum("bk,bkc->bc", h, fs.rgb)
    mean = np.sum(h * t, axis=-1)
    var = np.sum(h * t * t, axis=-1) - mean * mean
    return RayRender(color, h, trans, mean, var, samples, fs)


def render_ray(field: VoxelField, ray, samples: RaySamples) -> RayRender:
    """Render a single :class:`~dsvox.camera.Ray` (a batch of one)."""
    return render_rays(field, ray.origin[None], ray.direction[None], samples)


def render_backward(render: RayRender, grad: np.ndarray | None = None, d_color=None,
                    d_depth=None, d_h=None) -> np.ndarray:
    """Parameter gradient for cotangents on color, depth_mean and h.

    Adds into ``grad`` when given, otherwise returns a fresh vector.
    """
    h = render.weights
    B, K = h.shape
    t = render.samples.t
    rgb = render.field_sample.rgb
    G = np.zeros((B, K))
    d_rgb = None
    if d_h is not None:
        d_h = np.asarray(d_h, dtype=np.float64)
        if d_h.shape != (B, K):
            raise ValueError(f"d_h has shape {d_h.shape}, expected {(B, K)}")
        G += d_h
    if d_color is not None:
        d_color = np.asarray(d_color, dtype=np.float64).reshape(B, 3)
        G += np.einsum("bc,bkc->bk", d_color, rgb)
        d_rgb = h[..., None] * d_color[:, None, :]
    if d_depth is not None:
        G += np.asarray(d_depth, dtype=np.float64).reshape(B, 1) * t
    # h_k = T_k - T_{k+1} (k < K), h_K = T_K; dT_k/ds_j = -T_k for j < k
    D = np.zeros((B, K))
    D[:, 1:] = render.trans[:, 1:] * (G[:, 1:] - G[:, :-1])
    tail = np.cumsum(D[:, ::-1], axis=1)[:, ::-1]  # tail[:, k] = sum_{m>=k} D[:, m]
    d_s = np.zeros((B, K))
    d_s[:, :-1] = -tail[:, 1:]
    d_sigma = d_s * render.samples.delta
    d_sigma[:, -1] = 0.0
    if d_rgb is None:
        d_rgb = 0.0
    if grad is None:
        return field_grad(render.field_sample, d_sigma, d_rgb)
    return accumulate_field_grad(grad, render.field_sample, d_sigma, d_rgb)


def termination_variance_stats(depth_var, quantiles=(0.1, 0.5, 0.9)) -> dict:
    """Mean and quantiles of per-ray termination variance.

    Accepts a RayRender, a list of them, or an array of variances.
    """
    if isinstance(depth_var, RayRender):
        v = depth_var.depth_var
    elif isinstance(depth_var, (list, tuple)) and depth_var and isinstance(depth_var[0], RayRender):
        v = np.concatenate([r.depth_var for r in depth_var])
    else:
        v = np.asarray(depth_var, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("no rays to summarize")
    qs = np.quantile(v, quantiles)
    return {"mean": float(v.mean()), **{f"q{int(q * 100):02d}": float(x) for q, x in zip(quantiles, qs)}}
