"""Analytic scenes (spheres, boxes, a background plane) with exact depth.

Rays use the axial parameterization from :mod:`dsvox.camera`, so the hit
parameter returned here is the axial depth directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Camera

_T_MIN = 1e-9


@dataclass(frozen=True)
class Checker:
    rgb: tuple
    period: float
    offset: float = 0.25

    def apply(self, base_rgb, points):
        cell = np.floor(points / self.period + self.offset).astype(np.int64)
        odd = (cell.sum(axis=-1) % 2).astype(bool)
        out = np.broadcast_to(np.asarray(base_rgb, dtype=np.float64), points.shape).copy()
        out[odd] = self.rgb
        return out


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    rgb: tuple
    checker: Checker | None = None

    def intersect(self, o, d):
        c = np.asarray(self.center, dtype=np.float64)
        oc = o - c
        a = np.einsum("ij,ij->i", d, d)
        b = np.einsum("ij,ij->i", d, oc)
        cc = np.einsum("ij,ij->i", oc, oc) - self.radius ** 2
        disc = b * b - a * cc
        ok = disc >= 0
        root = np.sqrt(np.where(ok, disc, 0.0))
        t0 = (-b - root) / a
        t1 = (-b + root) / a
        t = np.where(t0 > _T_MIN, t0, t1)
        return np.where(ok & (t > _T_MIN), t, np.inf)


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    rgb: tuple
    checker: Checker | None = None

    def intersect(self, o, d):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t1 = (lo - o) * inv
            t2 = (hi - o) * inv
        # axis-parallel rays: inside the slab -> unbounded, else miss
        par = d == 0
        inslab = (o >= lo) & (o <= hi)
        tmin = np.where(par, np.where(inslab, -np.inf, np.inf), np.minimum(t1, t2))
        tmax = np.where(par, np.where(inslab, np.inf, -np.inf), np.maximum(t1, t2))
        t_in = tmin.max(axis=1)
        t_out = tmax.min(axis=1)
        hit = (t_in <= t_out) & (t_out > _T_MIN)
        t = np.where(t_in > _T_MIN, t_in, t_out)
        return np.where(hit, t, np.inf)


@dataclass(frozen=True)
class Plane:
    point: tuple
    normal: tuple
    rgb: tuple
    checker: Checker | None = None

    def intersect(self, o, d):
        n = np.asarray(self.normal, dtype=np.float64)
        p = np.asarray(self.point, dtype=np.float64)
        dn = d @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((p - o) @ n) / dn
        return np.where((dn != 0) & (t > _T_MIN), t, np.inf)


@dataclass(frozen=True)
class AnalyticScene:
    primitives: tuple
    bbox_min: tuple
    bbox_max: tuple
    name: str = "custom"
    miss_rgb: tuple = field(default=(0.0, 0.0, 0.0))

    def cast(self, origins, directions):
        """Nearest hit for each ray: ``(t, rgb, hit)``; misses get t=inf."""
        o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
        d = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
        o = np.broadcast_to(o, d.shape)
        ts = np.stack([p.intersect(o, d) for p in self.primitives], axis=1)
        which = np.argmin(ts, axis=1)
        t = ts[np.arange(len(d)), which]
        hit = np.isfinite(t)
        rgb = np.broadcast_to(np.asarray(self.miss_rgb, dtype=np.float64), d.shape).copy()
        pts = o + np.where(hit, t, 0.0)[:, None] * d
        for i, prim in enumerate(self.primitives):
            sel = hit & (which == i)
            if not sel.any():
                continue
            if prim.checker is None:
                rgb[sel] = prim.rgb
            else:
                rgb[sel] = prim.checker.apply(prim.rgb, pts[sel])
        return t, rgb, hit


def oracle_render(scene: AnalyticScene, camera: Camera):
    """Exact image and axial depth map at pixel centers; misses get depth 0."""
    uu, vv = camera.pixel_centers()
    d = camera.ray_directions(uu.ravel(), vv.ravel())
    t, rgb, hit = scene.cast(camera.center[None], d)
    depth = np.where(hit, t, 0.0)
    H, W = camera.height, camera.width
    return rgb.reshape(H, W, 3), depth.reshape(H, W)


def sphere_plane_scene() -> AnalyticScene:
    """Reference scene: red sphere, a blue box partly behind it, checkered back plane."""
    return AnalyticScene(
        primitives=(
            Sphere((0.0, 0.0, -4.0), 1.0, (0.8, 0.2, 0.2)),
            Box((0.7, -1.6, -7.0), (2.2, 0.2, -5.5), (0.2, 0.5, 0.9)),
            Plane((0.0, 0.0, -10.0), (0.0, 0.0, 1.0), (0.9, 0.85, 0.6),
                  Checker((0.25, 0.3, 0.25), 1.0)),
        ),
        bbox_min=(-4.5, -4.5, -11.0),
        bbox_max=(4.5, 4.5, -2.0),
        name="sphere-plane",
    )


def sphere_scene() -> AnalyticScene:
    return AnalyticScene(
        primitives=(
            Sphere((0.0, 0.0, -4.0), 1.0, (0.8, 0.2, 0.2)),
            Plane((0.0, 0.0, -10.0), (0.0, 0.0, 1.0), (0.9, 0.85, 0.6),
                  Checker((0.25, 0.3, 0.25), 1.0)),
        ),
        bbox_min=(-4.5, -4.5, -11.0),
        bbox_max=(4.5, 4.5, -2.0),
        name="sphere",
    )


SCENES = {"sphere-plane": sphere_plane_scene, "sphere": sphere_scene}


def get_scene(name: str) -> AnalyticScene:
    try:
        return SCENES[name]()
    except KeyError:
        raise ValueError(f"unknown scene {name!r}; choose from {sorted(SCENES)}") from None
