"""Dense voxel radiance field with trilinear interpolation and analytic gradients.

Raw parameters live in one flat float64 vector ``params`` of four planes of
``n`` entries each: raw density, then raw red, green and blue. Cells are indexed
x-fastest: ``i = ix + Gx * (iy + Gy * iz)``. Grid nodes sit on the bbox
corners, so node ``(ix, iy, iz)`` is at ``bbox_min + (ix, iy, iz) * spacing``.

Raw values are interpolated first and activated afterwards: density is
``softplus(raw)`` and color is ``logistic(raw)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

OUTSIDE_RGB = 0.5
INIT_RAW_SIGMA = -2.0

_MAGIC = b"DSVF"
_VERSION = 1

# corner c of a cell sits at offset (c & 1, c >> 1 & 1, c >> 2 & 1)
_CORNERS = np.array([[(c >> a) & 1 for a in range(3)] for c in range(8)])


def softplus(x):
    return np.logaddexp(0.0, x)


def logistic(x):
    # scipy.special.expit without the import; stable for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


class VoxelField:
    """Trainable dense grid of raw density and raw color."""

    def __init__(self, resolution, bbox_min, bbox_max, params=None):
        res = tuple(int(r) for r in resolution)
        if len(res) != 3 or min(res) < 2:
            raise ValueError(f"resolution needs three entries >= 2, got {resolution}")
        lo = np.asarray(bbox_min, dtype=np.float64)
        hi = np.asarray(bbox_max, dtype=np.float64)
        if not np.all(lo < hi):
            raise ValueError("bbox_min must be < bbox_max componentwise")
        self.resolution = res
        self.bbox_min = lo
        self.bbox_max = hi
        self.n_cells = res[0] * res[1] * res[2]
        if params is None:
            params = np.zeros(4 * self.n_cells)
            params[: self.n_cells] = INIT_RAW_SIGMA
        params = np.ascontiguousarray(params, dtype=np.float64)
        if params.shape != (4 * self.n_cells,):
            raise ValueError(f"params must have {4 * self.n_cells} entries")
        self.params = params

    @property
    def raw_sigma(self) -> np.ndarray:
        return self.params[: self.n_cells]

    @property
    def raw_rgb(self) -> np.ndarray:
        """(n, 3) view into the color planes."""
        return self.params[self.n_cells:].reshape(3, self.n_cells).T

    @property
    def planes(self) -> np.ndarray:
        return self.params.reshape(4, self.n_cells)

    @property
    def spacing(self) -> np.ndarray:
        return (self.bbox_max - self.bbox_min) / (np.array(self.resolution) - 1)

    def copy(self) -> "VoxelField":
        return VoxelField(self.resolution, self.bbox_min, self.bbox_max, self.params.copy())

    def cell_index(self, ix, iy, iz):
        gx, gy, _ = self.resolution
        return ix + gx * (iy + gy * iz)

    def node_position(self, ix, iy, iz) -> np.ndarray:
        return self.bbox_min + np.array([ix, iy, iz], dtype=np.float64) * self.spacing

    def zero_grad(self) -> np.ndarray:
        return np.zeros_like(self.params)


@dataclass
class FieldSample:
    """Activated field values at a batch of points plus backprop handles.

    ``index``/``weight`` are (N, 8) corner cell indices and trilinear weights;
    rows for points outside the bbox have zero weights and ``inside`` False.
    """

    sigma: np.ndarray
    rgb: np.ndarray
    index: np.ndarray
    weight: np.ndarray
    inside: np.ndarray
    raw_sigma: np.ndarray
    n_cells: int


def sample_field(field: VoxelField, x) -> FieldSample:
    """Evaluate the field at points ``x`` of shape (..., 3)."""
    x = np.asarray(x, dtype=np.float64)
    lead = x.shape[:-1]
    x = x.reshape(-1, 3)
    res = np.array(field.resolution)
    gx, gy, _ = field.resolution
    g = (x - field.bbox_min) / field.spacing
    inside = np.all((g >= 0) & (g <= res - 1), axis=1)
    base = np.clip(np.floor(g), 0, res - 2).astype(np.int64)
    frac = np.clip(g - base, 0.0, 1.0)
    frac[~inside] = 0.0

    base_flat = base[:, 0] + gx * (base[:, 1] + gy * base[:, 2])
    offsets = _CORNERS @ np.array([1, gx, gx * gy])
    index = base_flat[:, None] + offsets
    # (N, z, y, x) outer product flattens to corner order c = x + 2y + 4z
    wx = np.stack([1.0 - frac[:, 0], frac[:, 0]], axis=1)
    wy = np.stack([1.0 - frac[:, 1], frac[:, 1]], axis=1)
    wz = np.stack([1.0 - frac[:, 2], frac[:, 2]], axis=1)
    weight = (wz[:, :, None, None] * wy[:, None, :, None] * wx[:, None, None, :]).reshape(-1, 8)
    weight[~inside] = 0.0

    raw = np.einsum("cnk,nk->cn", field.planes[:, index], weight)
    sigma = np.where(inside, softplus(raw[0]), 0.0)
    rgb = np.where(inside[:, None], logistic(raw[1:].T), OUTSIDE_RGB)
    return FieldSample(
        sigma=sigma.reshape(lead),
        rgb=rgb.reshape(lead + (3,)),
        index=index.reshape(lead + (8,)),
        weight=weight.reshape(lead + (8,)),
        inside=inside.reshape(lead),
        raw_sigma=raw[0].reshape(lead),
        n_cells=field.n_cells,
    )


def field_grad(sample: FieldSample, d_sigma, d_rgb) -> np.ndarray:
    """Parameter gradient of ``sum(d_sigma*sigma + d_rgb.rgb)`` as a fresh vector.

    Chain rule runs through the activation evaluated at the *interpolated*
    raw value, then through the trilinear weights.
    """
    n = sample.n_cells
    d_sigma = np.broadcast_to(np.asarray(d_sigma, dtype=np.float64), sample.sigma.shape)
    d_rgb = np.broadcast_to(np.asarray(d_rgb, dtype=np.float64), sample.rgb.shape)

    inside = sample.inside.reshape(-1)
    idx = sample.index.reshape(-1, 8)[inside]
    w = sample.weight.reshape(-1, 8)[inside]
    if idx.size == 0:
        return np.zeros(4 * n)
    c = sample.rgb.reshape(-1, 3)[inside]
    d_raw = np.empty((4, idx.shape[0]))
    d_raw[0] = d_sigma.reshape(-1)[inside] * logistic(sample.raw_sigma.reshape(-1)[inside])
    d_raw[1:] = (d_rgb.reshape(-1, 3)[inside] * c * (1.0 - c)).T

    flat = (idx[None] + (n * np.arange(4))[:, None, None]).ravel()
    return np.bincount(flat, (d_raw[:, :, None] * w[None]).ravel(), minlength=4 * n)


def accumulate_field_grad(grad: np.ndarray, sample: FieldSample, d_sigma, d_rgb) -> np.ndarray:
    """In-place ``grad += field_grad(sample, d_sigma, d_rgb)``."""
    if grad.shape != (4 * sample.n_cells,):
        raise ValueError("gradient buffer does not match the sampled field")
    grad += field_grad(sample, d_sigma, d_rgb)
    return grad


def save_checkpoint(field: VoxelField, path) -> None:
    """Write the DSVF checkpoint: little-endian header then f32 raw arrays."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        f.write(struct.pack("<3I", *field.resolution))
        f.write(struct.pack("<6d", *field.bbox_min, *field.bbox_max))
        f.write(field.raw_sigma.astype("<f4").tobytes())
        f.write(field.raw_rgb.astype("<f4").tobytes())


def load_checkpoint(path) -> VoxelField:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not a DSVF checkpoint")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    res = struct.unpack_from("<3I", data, 8)
    bounds = struct.unpack_from("<6d", data, 20)
    n = res[0] * res[1] * res[2]
    body = np.frombuffer(data, dtype="<f4", offset=68)
    if body.size != 4 * n:
        raise ValueError(f"{path}: expected {4 * n} floats, found {body.size}")
    params = np.concatenate([body[:n], body[n:].reshape(n, 3).T.ravel()])
    return VoxelField(res, bounds[:3], bounds[3:], params.astype(np.float64))
