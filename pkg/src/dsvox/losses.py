"""Color reconstruction loss, ray-termination depth losses and their combination.

Each loss returns its value together with the cotangent that
:func:`dsvox.render.render_backward` consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

LOG_EPS = 1e-10
SIGMA_FLOOR = 1e-3
_NORM_TOL = 1e-9


class DepthMode(str, Enum):
    KL = "kl"
    MSE = "mse"
    NONE = "none"


@dataclass(frozen=True)
class DepthTarget:
    D: float
    sigma_hat: float

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError(f"target depth must be positive, got {self.D}")
        if not self.sigma_hat > 0:
            raise ValueError(f"sigma_hat must be positive, got {self.sigma_hat}")


@dataclass(frozen=True)
class LossReport:
    color_loss: float
    depth_loss: float
    total: float
    n_rgb_rays: int
    n_depth_rays: int


def color_loss(pred, target):
    """Mean over rays of the squared L2 color error; returns ``(loss, d_pred)``."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    target = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if pred.shape != target.shape:
        raise ValueError(f"batch mismatch: {pred.shape} vs {target.shape}")
    n = pred.shape[0]
    if n == 0:
        raise ValueError("empty color batch")
    diff = pred - target
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


def _as_targets(D, sigma_hat, n):
    D = np.broadcast_to(np.asarray(D, dtype=np.float64), (n,))
    s = np.broadcast_to(np.asarray(sigma_hat, dtype=np.float64), (n,))
    return D, s


def depth_kl_loss(weights, t, delta, D, sigma_hat):
    """Gaussian-weighted negative log-likelihood of the termination weights.

    Per ray: ``-sum_k w_k * log(h_k + eps) * dt_k`` with
    ``w_k = exp(-(t_k - D)^2 / (2 sigma_hat^2))``. ``delta`` already carries the
    previous spacing in its last slot, which is what the far-wall sample uses.
    The batch value is the mean over rays. Returns ``(loss, d_h)``.
    """
    h = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    t = np.atleast_2d(t)
    delta = np.atleast_2d(delta)
    n = h.shape[0]
    if n == 0:
        raise ValueError("empty depth batch")
    if np.any(np.abs(h.sum(axis=1) - 1.0) > _NORM_TOL):
        raise ValueError("termination weights are not normalized")
    D, s = _as_targets(D, sigma_hat, n)
    w = np.exp(-((t - D[:, None]) ** 2) / (2.0 * s[:, None] ** 2))
    wdt = w * delta
    per_ray = -np.sum(wdt * np.log(h + LOG_EPS), axis=1)
    return float(per_ray.mean()), -wdt / (h + LOG_EPS) / n


def depth_mse_loss(depth_mean, D):
    """Mean squared error of expected depth; returns ``(loss, d_depth)``."""
    m = np.atleast_1d(np.asarray(depth_mean, dtype=np.float64))
    n = m.shape[0]
    if n == 0:
        raise ValueError("empty depth batch")
    D, _ = _as_targets(D, 1.0, n)
    diff = m - D
    return float(np.mean(diff * diff)), 2.0 * diff / n


def total_loss(color: float, depth: float, lambda_depth: float, mode="kl",
               n_rgb_rays: int = 0, n_depth_rays: int = 0) -> LossReport:
    if lambda_depth < 0 or math.isnan(lambda_depth):
        raise ValueError(f"lambda_depth must be >= 0, got {lambda_depth}")
    if DepthMode(mode) is DepthMode.NONE:
        depth = 0.0
        n_depth_rays = 0
    return LossReport(color, depth, color + lambda_depth * depth, n_rgb_rays, n_depth_rays)
