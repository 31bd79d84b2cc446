"""Depth scale/shift alignment, depth error and image quality metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

METRIC_CSV_HEADER = ["experiment", "views", "iter", "psnr", "ssim", "depth_err_pct"]


@dataclass(frozen=True)
class AlignParams:
    a: float = 1.0
    b: float = 0.0

    def apply(self, d):
        return self.a * np.asarray(d, dtype=np.float64) - self.b


IDENTITY = AlignParams(1.0, 0.0)


def fit_scale_shift(d_src, d_ref) -> AlignParams:
    """Least-squares ``(a, b)`` minimizing ``sum (a*src - b - ref)^2``."""
    s = np.asarray(d_src, dtype=np.float64).ravel()
    r = np.asarray(d_ref, dtype=np.float64).ravel()
    if s.shape != r.shape:
        raise ValueError(f"length mismatch: {s.size} vs {r.size}")
    if s.size < 2:
        raise ValueError("need at least two depth pairs")
    sm, rm = s.mean(), r.mean()
    sc = s - sm
    var = np.dot(sc, sc)
    if var <= 1e-300 or np.ptp(s) == 0:
        raise np.linalg.LinAlgError("source depths are constant; scale is undetermined")
    a = np.dot(sc, r - rm) / var
    return AlignParams(float(a), float(a * sm - rm))


def depth_error(d_pred, d_ref, align: AlignParams = IDENTITY) -> float:
    """Mean absolute relative error in percent after alignment.

    Entries with non-positive or non-finite reference depth are skipped.
    """
    p = np.asarray(d_pred, dtype=np.float64).ravel()
    r = np.asarray(d_ref, dtype=np.float64).ravel()
    if p.shape != r.shape:
        raise ValueError(f"length mismatch: {p.size} vs {r.size}")
    ok = np.isfinite(r) & (r > 0)
    if not ok.any():
        raise ValueError("no valid reference depths to evaluate")
    return float(np.mean(np.abs(align.apply(p[ok]) - r[ok]) / r[ok]) * 100.0)


def psnr(img_a, img_b) -> float:
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return float("inf")
    return float(-10.0 * np.log10(mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(img_a, img_b, window: int = 11, sigma: float = 1.5, k1=0.01, k2=0.03) -> float:
    """Mean SSIM over valid window positions, averaged over channels."""
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if min(a.shape[:2]) < window:
        raise ValueError(f"image smaller than the {window}x{window} window")
    kern = gaussian_window(window, sigma)
    c1, c2 = k1 ** 2, k2 ** 2

    def filt(x):
        return np.einsum("ijkl,kl->ij", sliding_window_view(x, (window, window)), kern)

    vals = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mx, my = filt(x), filt(y)
        vx = filt(x * x) - mx * mx
        vy = filt(y * y) - my * my
        cxy = filt(x * y) - mx * my
        m = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        vals.append(m.mean())
    return float(np.mean(vals))


def write_metrics_csv(rows, path_or_file) -> None:
    """Rows are mappings (or objects) with the METRIC_CSV_HEADER fields."""
    own = not hasattr(path_or_file, "write")
    f = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(METRIC_CSV_HEADER)
        for r in rows:
            get = r.get if isinstance(r, dict) else (lambda k, r=r: getattr(r, k))
            w.writerow([get("experiment"), int(get("views")), int(get("iter")),
                        repr(float(get("psnr"))), repr(float(get("ssim"))),
                        repr(float(get("depth_err_pct")))])
    finally:
        if own:
            f.close()
