"""Posed-image datasets: synthetic generation and the on-disk layout.

On disk a dataset is a directory holding ``dataset.json`` (cameras, splits,
bounds, file names), one binary PPM per view, one DSDM depth map per view
and ``keypoints.csv``. Images are kept 8-bit quantized in memory and depth
maps float32-rounded so that write -> read -> write is byte-identical.

Keypoint ``image_id`` refers to training view ``image_id - 1``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import Camera, look_at
from .scene import get_scene, oracle_render
from .sfm import (
    KeypointDepth,
    extract_keypoint_depths,
    parse_colmap,
    read_keypoint_csv,
    simulate_sfm,
    write_keypoint_csv,
)
from .losses import SIGMA_FLOOR

MANIFEST = "dataset.json"
KEYPOINT_FILE = "keypoints.csv"
_DSDM = b"DSDM"


@dataclass(eq=False)
class View:
    name: str
    camera: Camera
    image: np.ndarray
    depth: np.ndarray | None = None


@dataclass(eq=False)
class SceneDataset:
    train: list
    test: list
    keypoints: list
    near: float
    far: float
    bbox_min: tuple
    bbox_max: tuple
    scene: str = "custom"
    dense: bool = False
    sigma_dense: float = 0.05

    def __post_init__(self):
        names_train = {v.name for v in self.train}
        if names_train & {v.name for v in self.test}:
            raise ValueError("train and test views overlap")
        for v in self.test:
            if v.depth is not None and np.any(v.depth < 0):
                raise ValueError(f"negative reference depth in {v.name}")

    def keypoints_for(self, train_index: int) -> list:
        return [k for k in self.keypoints if k.image_id == train_index + 1]


def quantize_image(img) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def bilinear(image, u, v):
    """Sample an (H, W, C) image at continuous pixel coordinates.

    Pixel (i, j) holds the value at its center (i + 0.5, j + 0.5); lookups
    outside the centers clamp to the border.
    """
    H, W = image.shape[:2]
    x = np.clip(np.asarray(u, dtype=np.float64) - 0.5, 0.0, W - 1)
    y = np.clip(np.asarray(v, dtype=np.float64) - 0.5, 0.0, H - 1)
    x0 = np.minimum(np.floor(x).astype(np.int64), max(W - 2, 0))
    y0 = np.minimum(np.floor(y).astype(np.int64), max(H - 2, 0))
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    top = image[y0, x0] * (1 - fx) + image[y0, x1] * fx
    bot = image[y1, x0] * (1 - fx) + image[y1, x1] * fx
    return top * (1 - fy) + bot * fy


# ---------------------------------------------------------------- camera rigs

RIG_Z = 2.0
RIG_TARGET = (0.0, 0.0, -8.0)
TRAIN_RADIUS = 1.2
TEST_RADIUS = 0.7
FOV_TAN = 0.25  # tan of the half field of view


def ring_cameras(n: int, radius: float, resolution: int, phase: float = 0.0) -> list:
    """Forward-facing cameras on a ring in the plane z = RIG_Z, all aimed at RIG_TARGET."""
    focal = resolution / 2 / FOV_TAN
    cams = []
    for i in range(n):
        a = phase + 2 * np.pi * i / n
        eye = (radius * np.cos(a), radius * np.sin(a), RIG_Z)
        c = resolution / 2
        cams.append(Camera(focal, focal, c, c, resolution, resolution,
                           look_at(eye, RIG_TARGET)))
    return cams


def train_cameras(n: int, resolution: int) -> list:
    return ring_cameras(n, TRAIN_RADIUS, resolution, phase=np.pi / 6)


def test_cameras(n: int, resolution: int) -> list:
    return ring_cameras(n, TEST_RADIUS, resolution, phase=np.pi / 2)


def gen_dataset(scene, n_train: int, n_test: int = 3, resolution: int = 64,
                sfm="noiseless", noise_3d: float = 0.0, n_points: int = 400,
                seed: int = 0, dense: bool = False, sigma_floor: float = SIGMA_FLOOR,
                sigma_scale=None, sigma_dense: float = 0.05,
                near: float = 3.0, far: float = 13.0) -> SceneDataset:
    """Render a synthetic dataset and attach keypoint depth supervision.

    ``sfm`` is ``"noiseless"``, ``"simulated"`` (uses ``noise_3d``) or a path
    to a COLMAP model whose image names match the training view names.
    """
    if n_train < 1 or n_test < 1:
        raise ValueError("need at least one train and one test view")
    if isinstance(scene, str):
        scene = get_scene(scene)
    train, test = [], []
    for i, cam in enumerate(train_cameras(n_train, resolution)):
        img, depth = oracle_render(scene, cam)
        train.append(View(f"train_{i:03d}", cam, quantize_image(img),
                          depth.astype(np.float32).astype(np.float64)))
    for i, cam in enumerate(test_cameras(n_test, resolution)):
        img, depth = oracle_render(scene, cam)
        test.append(View(f"test_{i:03d}", cam, quantize_image(img),
                         depth.astype(np.float32).astype(np.float64)))

    names = [f"{v.name}.ppm" for v in train]
    if sfm in ("noiseless", "simulated"):
        noise = 0.0 if sfm == "noiseless" else noise_3d
        model = simulate_sfm(scene, [v.camera for v in train], n_points, noise, seed,
                             names=names)
    else:
        model = parse_colmap(sfm)
    keypoints = []
    for i, name in enumerate(names):
        try:
            img = model.image_by_name(name)
        except KeyError:
            continue
        for k in extract_keypoint_depths(model, img.id, sigma_scale, sigma_floor):
            keypoints.append(KeypointDepth(i + 1, k.u, k.v, k.D, k.sigma_hat, k.point3d_id))
    return SceneDataset(train, test, keypoints, near, far, tuple(scene.bbox_min),
                        tuple(scene.bbox_max), scene.name, dense, sigma_dense)


# ---------------------------------------------------------------- file formats

def write_ppm(path, image) -> None:
    img = np.asarray(image)
    H, W = img.shape[:2]
    data = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{W} {H}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(data) and not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != b"P6" or int(tokens[3]) != 255:
        raise ValueError(f"{path}: only binary P6 with maxval 255 is supported")
    W, H = int(tokens[1]), int(tokens[2])
    body = data[pos + 1:]
    if len(body) != W * H * 3:
        raise ValueError(f"{path}: expected {W * H * 3} pixel bytes, got {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(H, W, 3) / 255.0


def write_depth(path, depth) -> None:
    d = np.asarray(depth)
    H, W = d.shape
    with open(path, "wb") as f:
        f.write(_DSDM + struct.pack("<II", W, H))
        f.write(d.astype("<f4").tobytes())


def read_depth(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != _DSDM:
        raise ValueError(f"{path}: not a DSDM depth map")
    W, H = struct.unpack_from("<II", data, 4)
    body = np.frombuffer(data, dtype="<f4", offset=12)
    if body.size != W * H:
        raise ValueError(f"{path}: expected {W * H} depths, found {body.size}")
    return body.reshape(H, W).astype(np.float64)


def _camera_json(cam: Camera) -> dict:
    return {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
            "width": cam.width, "height": cam.height,
            "cam_to_world": [float(x) for x in cam.cam_to_world.ravel()]}


def camera_from_json(d: dict) -> Camera:
    return Camera(d["fx"], d["fy"], d["cx"], d["cy"], d["width"], d["height"],
                  np.array(d["cam_to_world"], dtype=np.float64).reshape(4, 4))


def write_dataset(ds: SceneDataset, root) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    views = []
    for split, vs in (("train", ds.train), ("test", ds.test)):
        for v in vs:
            entry = {"name": v.name, "split": split, **_camera_json(v.camera),
                     "image": f"{v.name}.ppm"}
            write_ppm(root / entry["image"], v.image)
            if v.depth is not None:
                entry["depth"] = f"{v.name}.dsdm"
                write_depth(root / entry["depth"], v.depth)
            views.append(entry)
    write_keypoint_csv(ds.keypoints, root / KEYPOINT_FILE)
    manifest = {
        "scene": ds.scene, "near": ds.near, "far": ds.far,
        "bbox_min": list(ds.bbox_min), "bbox_max": list(ds.bbox_max),
        "dense": ds.dense, "sigma_dense": ds.sigma_dense,
        "keypoints": KEYPOINT_FILE, "views": views,
    }
    (root / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")


def read_dataset(root) -> SceneDataset:
    root = Path(root)
    try:
        m = json.loads((root / MANIFEST).read_text())
    except FileNotFoundError:
        raise FileNotFoundError(f"{root}: no {MANIFEST}") from None
    train, test = [], []
    for e in m["views"]:
        depth = read_depth(root / e["depth"]) if "depth" in e else None
        v = View(e["name"], camera_from_json(e), read_ppm(root / e["image"]), depth)
        (train if e["split"] == "train" else test).append(v)
    kp = read_keypoint_csv(root / m["keypoints"]) if m.get("keypoints") else []
    return SceneDataset(train, test, kp, m["near"], m["far"], tuple(m["bbox_min"]),
                        tuple(m["bbox_max"]), m.get("scene", "custom"),
                        m.get("dense", False), m.get("sigma_dense", 0.05))
