"""COLMAP sparse models: parsing, writing, keypoint depth extraction, simulation.

Binary layout (little-endian) follows COLMAP's ``cameras.bin``,
``images.bin`` and ``points3D.bin``; the text layout is COLMAP's
``cameras.txt``/``images.txt``/``points3D.txt``. Unmatched 2D observations
carry ``point3d_id == -1`` in memory (``2**64 - 1`` on disk in binary form).
"""

from __future__ import annotations

import csv
import io
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import Camera, camera_from_colmap, colmap_pose, project_point_depth
from .losses import SIGMA_FLOOR

INVALID_POINT3D_U64 = 2 ** 64 - 1

# model id -> (name, number of params)
CAMERA_MODELS = {0: ("SIMPLE_PINHOLE", 3), 1: ("PINHOLE", 4), 2: ("SIMPLE_RADIAL", 4)}
_MODEL_IDS = {name: mid for mid, (name, _) in CAMERA_MODELS.items()}

KEYPOINT_CSV_HEADER = ["image_id", "u", "v", "D", "sigma_hat", "point3d_id"]


class ColmapParseError(ValueError):
    """Malformed or inconsistent COLMAP model.

    ``offset`` is the byte offset for binary files, ``line`` the 1-based line
    for text files, ``entity`` the offending id when the problem is semantic.
    """

    def __init__(self, message, path=None, offset=None, line=None, entity=None):
        self.path = None if path is None else str(path)
        self.offset = offset
        self.line = line
        self.entity = entity
        where = [] if path is None else [str(path)]
        if offset is not None:
            where.append(f"byte {offset}")
        if line is not None:
            where.append(f"line {line}")
        if entity is not None:
            where.append(f"id {entity}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(eq=False)
class ColmapCamera:
    id: int
    model: str
    width: int
    height: int
    params: tuple

    def __eq__(self, other):
        return (self.id, self.model, self.width, self.height, tuple(self.params)) == (
            other.id, other.model, other.width, other.height, tuple(other.params))

    def intrinsics(self):
        """``(fx, fy, cx, cy)``; distortion terms are dropped."""
        p = self.params
        if self.model == "PINHOLE":
            return p[0], p[1], p[2], p[3]
        return p[0], p[0], p[1], p[2]


@dataclass(eq=False)
class ColmapImage:
    id: int
    qvec: np.ndarray
    tvec: np.ndarray
    camera_id: int
    name: str
    xys: np.ndarray
    point3d_ids: np.ndarray

    def __eq__(self, other):
        return (
            self.id == other.id and self.camera_id == other.camera_id
            and self.name == other.name
            and np.array_equal(self.qvec, other.qvec) and np.array_equal(self.tvec, other.tvec)
            and np.array_equal(self.xys, other.xys)
            and np.array_equal(self.point3d_ids, other.point3d_ids)
        )


@dataclass(eq=False)
class Point3D:
    id: int
    xyz: np.ndarray
    rgb: np.ndarray
    error: float
    image_ids: np.ndarray
    point2d_idxs: np.ndarray

    def __eq__(self, other):
        return (
            self.id == other.id and self.error == other.error
            and np.array_equal(self.xyz, other.xyz) and np.array_equal(self.rgb, other.rgb)
            and np.array_equal(self.image_ids, other.image_ids)
            and np.array_equal(self.point2d_idxs, other.point2d_idxs)
        )


@dataclass
class SfmModel:
    cameras: dict = field(default_factory=dict)
    images: dict = field(default_factory=dict)
    points3d: dict = field(default_factory=dict)

    def camera_for(self, image_id: int) -> Camera:
        img = self.images[image_id]
        cam = self.cameras[img.camera_id]
        fx, fy, cx, cy = cam.intrinsics()
        return camera_from_colmap(img.qvec, img.tvec, fx, fy, cx, cy, cam.width, cam.height)

    def image_by_name(self, name: str) -> ColmapImage:
        for img in self.images.values():
            if img.name == name:
                return img
        raise KeyError(name)


def allclose_models(a: SfmModel, b: SfmModel, atol=1e-12) -> bool:
    """Structural equality with a float tolerance (for text vs binary)."""
    if list(a.cameras) != list(b.cameras) or list(a.images) != list(b.images) \
            or list(a.points3d) != list(b.points3d):
        return False
    for k, c in a.cameras.items():
        o = b.cameras[k]
        if (c.model, c.width, c.height) != (o.model, o.width, o.height) \
                or not np.allclose(c.params, o.params, rtol=0, atol=atol):
            return False
    for k, i in a.images.items():
        o = b.images[k]
        if (i.camera_id, i.name) != (o.camera_id, o.name) \
                or not np.array_equal(i.point3d_ids, o.point3d_ids):
            return False
        for x, y in ((i.qvec, o.qvec), (i.tvec, o.tvec), (i.xys, o.xys)):
            if x.shape != y.shape or not np.allclose(x, y, rtol=0, atol=atol):
                return False
    for k, p in a.points3d.items():
        o = b.points3d[k]
        if not (np.array_equal(p.rgb, o.rgb) and np.array_equal(p.image_ids, o.image_ids)
                and np.array_equal(p.point2d_idxs, o.point2d_idxs)
                and abs(p.error - o.error) <= atol
                and np.allclose(p.xyz, o.xyz, rtol=0, atol=atol)):
            return False
    return True


# ---------------------------------------------------------------- binary

class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def read(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise ColmapParseError(
                f"truncated: need {size} bytes, {len(self.data) - self.pos} left",
                self.path, offset=self.pos)
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def read_array(self, dtype, count):
        dtype = np.dtype(dtype)
        size = dtype.itemsize * count
        if self.pos + size > len(self.data):
            raise ColmapParseError(
                f"truncated: need {size} bytes, {len(self.data) - self.pos} left",
                self.path, offset=self.pos)
        out = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.pos).copy()
        self.pos += size
        return out

    def read_cstring(self):
        end = self.data.find(b"\x00", self.pos)
        if end < 0:
            raise ColmapParseError("unterminated image name", self.path, offset=self.pos)
        s = self.data[self.pos:end].decode("utf-8")
        self.pos = end + 1
        return s

    def finish(self):
        if self.pos != len(self.data):
            raise ColmapParseError(f"{len(self.data) - self.pos} trailing bytes",
                                   self.path, offset=self.pos)


def _read_cameras_bin(path):
    r = _Reader(Path(path).read_bytes(), path)
    (count,) = r.read("<Q")
    cams = {}
    for _ in range(count):
        start = r.pos
        cam_id, model_id, width, height = r.read("<IiQQ")
        if model_id not in CAMERA_MODELS:
            raise ColmapParseError(f"unknown camera model id {model_id}", path,
                                   offset=start + 4, entity=cam_id)
        name, n_params = CAMERA_MODELS[model_id]
        params = r.read(f"<{n_params}d")
        cams[cam_id] = ColmapCamera(cam_id, name, width, height, tuple(params))
    r.finish()
    return cams


def _read_images_bin(path):
    r = _Reader(Path(path).read_bytes(), path)
    (count,) = r.read("<Q")
    images = {}
    for _ in range(count):
        (image_id,) = r.read("<I")
        q = np.array(r.read("<4d"))
        t = np.array(r.read("<3d"))
        (camera_id,) = r.read("<I")
        name = r.read_cstring()
        (n2d,) = r.read("<Q")
        rec = r.read_array(np.dtype([("x", "<f8"), ("y", "<f8"), ("id", "<u8")]), n2d)
        ids = rec["id"].astype(np.int64)  # u64 max wraps to -1
        xys = np.stack([rec["x"], rec["y"]], axis=1) if n2d else np.zeros((0, 2))
        images[image_id] = ColmapImage(image_id, q, t, camera_id, name, xys, ids)
    r.finish()
    return images


def _read_points_bin(path):
    r = _Reader(Path(path).read_bytes(), path)
    (count,) = r.read("<Q")
    points = {}
    for _ in range(count):
        (pid,) = r.read("<Q")
        xyz = np.array(r.read("<3d"))
        rgb = np.array(r.read("<3B"), dtype=np.uint8)
        (err,) = r.read("<d")
        (n,) = r.read("<Q")
        track = r.read_array(np.dtype([("img", "<u4"), ("idx", "<u4")]), n)
        points[pid] = Point3D(pid, xyz, rgb, err, track["img"].astype(np.int64),
                              track["idx"].astype(np.int64))
    r.finish()
    return points


def _write_cameras_bin(cams, path):
    out = bytearray(struct.pack("<Q", len(cams)))
    for c in cams.values():
        out += struct.pack("<IiQQ", c.id, _MODEL_IDS[c.model], c.width, c.height)
        out += struct.pack(f"<{len(c.params)}d", *c.params)
    Path(path).write_bytes(bytes(out))


def _write_images_bin(images, path):
    out = bytearray(struct.pack("<Q", len(images)))
    for im in images.values():
        out += struct.pack("<I4d3dI", im.id, *im.qvec, *im.tvec, im.camera_id)
        out += im.name.encode("utf-8") + b"\x00"
        out += struct.pack("<Q", len(im.point3d_ids))
        rec = np.empty(len(im.point3d_ids), dtype=[("x", "<f8"), ("y", "<f8"), ("id", "<u8")])
        rec["x"], rec["y"] = im.xys[:, 0], im.xys[:, 1]
        rec["id"] = im.point3d_ids.astype(np.uint64)
        out += rec.tobytes()
    Path(path).write_bytes(bytes(out))


def _write_points_bin(points, path):
    out = bytearray(struct.pack("<Q", len(points)))
    for p in points.values():
        out += struct.pack("<Q3d3BdQ", p.id, *p.xyz, *(int(c) for c in p.rgb), p.error,
                           len(p.image_ids))
        rec = np.empty(len(p.image_ids), dtype=[("img", "<u4"), ("idx", "<u4")])
        rec["img"], rec["idx"] = p.image_ids, p.point2d_idxs
        out += rec.tobytes()
    Path(path).write_bytes(bytes(out))


# ---------------------------------------------------------------- text

def _data_lines(path):
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        s = line.strip()
        if s and not s.startswith("#"):
            yield n, s


def _text_fail(path, line, exc):
    raise ColmapParseError(f"malformed line ({exc})", path, line=line) from exc


def _read_cameras_txt(path):
    cams = {}
    for n, s in _data_lines(path):
        try:
            f = s.split()
            cam_id, model, w, h = int(f[0]), f[1], int(f[2]), int(f[3])
            params = tuple(float(x) for x in f[4:])
        except (ValueError, IndexError) as e:
            _text_fail(path, n, e)
        if model not in _MODEL_IDS:
            raise ColmapParseError(f"unknown camera model {model}", path, line=n, entity=cam_id)
        if len(params) != CAMERA_MODELS[_MODEL_IDS[model]][1]:
            raise ColmapParseError(f"{model} expects {CAMERA_MODELS[_MODEL_IDS[model]][1]} params",
                                   path, line=n, entity=cam_id)
        cams[cam_id] = ColmapCamera(cam_id, model, w, h, params)
    return cams


def _read_images_txt(path):
    # images.txt keeps the (possibly empty) 2D point line, so read raw lines
    raw = Path(path).read_text().splitlines()
    rows = [(n, line.strip()) for n, line in enumerate(raw, start=1)
            if not line.strip().startswith("#")]
    # drop trailing blank lines only; blank point lines are meaningful
    while rows and not rows[-1][1]:
        rows.pop()
    images = {}
    i = 0
    while i < len(rows):
        n, s = rows[i]
        if not s:
            i += 1
            continue
        try:
            f = s.split(maxsplit=9)
            image_id = int(f[0])
            q = np.array([float(x) for x in f[1:5]])
            t = np.array([float(x) for x in f[5:8]])
            camera_id = int(f[8])
            name = f[9]
        except (ValueError, IndexError) as e:
            _text_fail(path, n, e)
        pts = rows[i + 1][1].split() if i + 1 < len(rows) else []
        if len(pts) % 3:
            raise ColmapParseError("2D point line length not a multiple of 3",
                                   path, line=n + 1, entity=image_id)
        try:
            xys = np.array([[float(pts[k]), float(pts[k + 1])] for k in range(0, len(pts), 3)])
            ids = np.array([int(pts[k + 2]) for k in range(0, len(pts), 3)], dtype=np.int64)
        except ValueError as e:
            _text_fail(path, n + 1, e)
        images[image_id] = ColmapImage(image_id, q, t, camera_id, name,
                                       xys.reshape(-1, 2), ids)
        i += 2
    return images


def _read_points_txt(path):
    points = {}
    for n, s in _data_lines(path):
        try:
            f = s.split()
            pid = int(f[0])
            xyz = np.array([float(x) for x in f[1:4]])
            rgb = np.array([int(x) for x in f[4:7]], dtype=np.uint8)
            err = float(f[7])
            track = [int(x) for x in f[8:]]
        except (ValueError, IndexError) as e:
            _text_fail(path, n, e)
        if len(track) % 2:
            raise ColmapParseError("odd track length", path, line=n, entity=pid)
        points[pid] = Point3D(pid, xyz, rgb, err, np.array(track[0::2], dtype=np.int64),
                              np.array(track[1::2], dtype=np.int64))
    return points


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_cameras_txt(cams, path):
    lines = ["# Camera list with one line of data per camera:",
             "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]",
             f"# Number of cameras: {len(cams)}"]
    for c in cams.values():
        lines.append(" ".join([str(c.id), c.model, str(c.width), str(c.height)]
                              + [_fmt(p) for p in c.params]))
    Path(path).write_text("\n".join(lines) + "\n")


def _write_images_txt(images, path):
    lines = ["# Image list with two lines of data per image:",
             "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME",
             "#   POINTS2D[] as (X, Y, POINT3D_ID)",
             f"# Number of images: {len(images)}"]
    for im in images.values():
        lines.append(" ".join([str(im.id)] + [_fmt(x) for x in im.qvec]
                              + [_fmt(x) for x in im.tvec] + [str(im.camera_id), im.name]))
        lines.append(" ".join(f"{_fmt(x)} {_fmt(y)} {int(pid)}"
                              for (x, y), pid in zip(im.xys, im.point3d_ids)))
    Path(path).write_text("\n".join(lines) + "\n")


def _write_points_txt(points, path):
    lines = ["# 3D point list with one line of data per point:",
             "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)",
             f"# Number of points: {len(points)}"]
    for p in points.values():
        track = " ".join(f"{int(i)} {int(j)}" for i, j in zip(p.image_ids, p.point2d_idxs))
        lines.append(" ".join([str(p.id)] + [_fmt(x) for x in p.xyz]
                              + [str(int(c)) for c in p.rgb] + [_fmt(p.error)]) + (" " + track if track else ""))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- public I/O

def detect_format(path) -> str:
    path = Path(path)
    if (path / "cameras.bin").exists():
        return "binary"
    if (path / "cameras.txt").exists():
        return "text"
    raise ColmapParseError("no cameras.bin or cameras.txt found", path)


def validate_model(model: SfmModel, path=None) -> None:
    for im in model.images.values():
        if im.camera_id not in model.cameras:
            raise ColmapParseError(f"image references missing camera {im.camera_id}",
                                   path, entity=im.id)
        bad = (im.point3d_ids != -1) & ~np.isin(im.point3d_ids, list(model.points3d))
        if bad.any():
            raise ColmapParseError(
                f"2D point references missing 3D point {int(im.point3d_ids[bad][0])}",
                path, entity=im.id)
    for p in model.points3d.values():
        if p.error < 0:
            raise ColmapParseError("negative reprojection error", path, entity=p.id)
        for img_id, idx in zip(p.image_ids, p.point2d_idxs):
            img = model.images.get(int(img_id))
            if img is None:
                raise ColmapParseError(f"track references missing image {int(img_id)}",
                                       path, entity=p.id)
            if not 0 <= idx < len(img.point3d_ids):
                raise ColmapParseError(f"track index {int(idx)} out of range for image {img.id}",
                                       path, entity=p.id)


def parse_colmap(path, fmt: str | None = None) -> SfmModel:
    """Read a COLMAP sparse model directory (``fmt`` is ``binary``/``text``/None=auto)."""
    path = Path(path)
    fmt = fmt or detect_format(path)
    for kind in ("cameras", "images", "points3D"):
        ext = "bin" if fmt == "binary" else "txt"
        if not (path / f"{kind}.{ext}").exists():
            raise ColmapParseError(f"missing {kind}.{ext}", path)
    if fmt == "binary":
        model = SfmModel(_read_cameras_bin(path / "cameras.bin"),
                         _read_images_bin(path / "images.bin"),
                         _read_points_bin(path / "points3D.bin"))
    elif fmt == "text":
        model = SfmModel(_read_cameras_txt(path / "cameras.txt"),
                         _read_images_txt(path / "images.txt"),
                         _read_points_txt(path / "points3D.txt"))
    else:
        raise ValueError(f"unknown format {fmt!r}")
    for cam in model.cameras.values():
        if cam.model == "SIMPLE_RADIAL" and cam.params[3] != 0:
            warnings.warn(f"camera {cam.id}: radial distortion {cam.params[3]} ignored")
    validate_model(model, path)
    return model


def write_colmap(model: SfmModel, path, fmt: str = "binary") -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    if fmt == "binary":
        _write_cameras_bin(model.cameras, path / "cameras.bin")
        _write_images_bin(model.images, path / "images.bin")
        _write_points_bin(model.points3d, path / "points3D.bin")
    elif fmt == "text":
        _write_cameras_txt(model.cameras, path / "cameras.txt")
        _write_images_txt(model.images, path / "images.txt")
        _write_points_txt(model.points3d, path / "points3D.txt")
    else:
        raise ValueError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------- keypoints

@dataclass(frozen=True)
class KeypointDepth:
    image_id: int
    u: float
    v: float
    D: float
    sigma_hat: float
    point3d_id: int


def extract_keypoint_depths(model: SfmModel, image_id: int, sigma_scale=None,
                            sigma_floor: float = SIGMA_FLOOR) -> list[KeypointDepth]:
    """Depth supervision for the keypoints of one image.

    ``sigma_hat = max(scale * reprojection_error_px, sigma_floor)`` where
    ``scale`` is ``sigma_scale`` if given, else depth over focal length.
    """
    if image_id not in model.images:
        raise KeyError(f"unknown image id {image_id}")
    img = model.images[image_id]
    cam = model.camera_for(image_id)
    out = []
    for (u_obs, v_obs), pid in zip(img.xys, img.point3d_ids):
        if pid == -1:
            continue
        pt = model.points3d[int(pid)]
        if image_id not in pt.image_ids:
            continue
        u, v, depth, in_front = project_point_depth(cam, pt.xyz)
        if not in_front or not (0 <= u <= cam.width and 0 <= v <= cam.height):
            continue
        scale = depth / cam.fx if sigma_scale is None else sigma_scale
        sigma = max(scale * pt.error, sigma_floor)
        out.append(KeypointDepth(image_id, float(u_obs), float(v_obs), float(depth),
                                 float(sigma), int(pid)))
    return out


def write_keypoint_csv(keypoints, path_or_file) -> None:
    own = not hasattr(path_or_file, "write")
    f = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(KEYPOINT_CSV_HEADER)
        for k in keypoints:
            w.writerow([k.image_id, repr(k.u), repr(k.v), repr(k.D), repr(k.sigma_hat),
                        k.point3d_id])
    finally:
        if own:
            f.close()


def read_keypoint_csv(path) -> list[KeypointDepth]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != KEYPOINT_CSV_HEADER:
        raise ValueError(f"{path}: bad keypoint CSV header")
    try:
        return [KeypointDepth(int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4]),
                              int(r[5])) for r in rows[1:]]
    except (ValueError, IndexError) as e:
        raise ValueError(f"{path}: malformed keypoint row ({e})") from e


def keypoint_csv_text(keypoints) -> str:
    buf = io.StringIO()
    write_keypoint_csv(keypoints, buf)
    return buf.getvalue()


# ---------------------------------------------------------------- simulation

def simulate_sfm(scene, cameras, n_points: int, noise_3d: float = 0.0, seed: int = 0,
                 names=None, min_track: int = 2) -> SfmModel:
    """Stand-in for an SFM run over ``cameras`` looking at an analytic ``scene``.

    Each camera detects ``n_points`` surface points at random sub-pixel
    locations. A detection becomes a 3D point when at least ``min_track``
    cameras see the same surface location unoccluded. Stored 2D observations
    are the exact projections; the 3D position gets isotropic Gaussian noise
    and its reprojection error is the resulting mean pixel discrepancy.
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    rng = np.random.default_rng(seed)
    names = names or [f"view_{j:03d}.ppm" for j in range(len(cameras))]
    model = SfmModel()
    obs_xy = [[] for _ in cameras]
    obs_pid = [[] for _ in cameras]
    for j, cam in enumerate(cameras):
        qvec, tvec = colmap_pose(cam)
        model.cameras[j + 1] = ColmapCamera(j + 1, "PINHOLE", cam.width, cam.height,
                                            (cam.fx, cam.fy, cam.cx, cam.cy))
        model.images[j + 1] = ColmapImage(j + 1, qvec, tvec, j + 1, names[j],
                                          np.zeros((0, 2)), np.zeros(0, dtype=np.int64))

    next_id = 1
    for j, cam in enumerate(cameras):
        u = rng.random(n_points) * cam.width
        v = rng.random(n_points) * cam.height
        t, rgb, hit = scene.cast(cam.center[None], cam.ray_directions(u, v))
        if not hit.any():
            warnings.warn(f"camera {j} sees no surface; no observations")
            continue
        pts = cam.center + t[hit, None] * cam.ray_directions(u[hit], v[hit])
        colors = rgb[hit]
        # visibility of every candidate in every camera
        proj = []
        for cam_m in cameras:
            pu, pv, depth, front = project_point_depth(cam_m, pts)
            ok = front & (pu >= 0) & (pu <= cam_m.width) & (pv >= 0) & (pv <= cam_m.height)
            tm = np.full(len(pts), np.inf)
            if ok.any():
                tm[ok], _, _ = scene.cast(cam_m.center[None],
                                          cam_m.ray_directions(pu[ok], pv[ok]))
            ok &= np.abs(tm - depth) <= 1e-6 * np.maximum(depth, 1.0)
            proj.append((pu, pv, ok))
        noise = rng.normal(0.0, 1.0, pts.shape) * noise_3d
        for i in range(len(pts)):
            track = [m for m in range(len(cameras)) if proj[m][2][i]]
            if j not in track:
                track.append(j)  # grazing detections always observe themselves
                track.sort()
            if len(track) < min_track:
                continue
            x = pts[i] + noise[i]
            errs = []
            img_ids, idxs = [], []
            for m in track:
                pu, pv = proj[m][0][i], proj[m][1][i]
                if m == j:
                    pu, pv = u[hit][i], v[hit][i]
                qu, qv, _, _ = project_point_depth(cameras[m], x)
                errs.append(np.hypot(qu - pu, qv - pv))
                img_ids.append(m + 1)
                idxs.append(len(obs_pid[m]))
                obs_xy[m].append((pu, pv))
                obs_pid[m].append(next_id)
            model.points3d[next_id] = Point3D(
                next_id, x, np.round(np.clip(colors[i], 0, 1) * 255).astype(np.uint8),
                float(np.mean(errs)), np.array(img_ids, dtype=np.int64),
                np.array(idxs, dtype=np.int64))
            next_id += 1
    for j in range(len(cameras)):
        img = model.images[j + 1]
        img.xys = np.array(obs_xy[j], dtype=np.float64).reshape(-1, 2)
        img.point3d_ids = np.array(obs_pid[j], dtype=np.int64)
    return model
