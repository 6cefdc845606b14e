"""Pinhole depth-sensor model, point clouds, and their file formats.

Sensor frame: +Z forward along the optical axis, +X right, +Y down.  Pixel
``(u, v)`` is column ``u``, row ``v`` with integer pixel centers.  Depth is
stored as 16-bit millimeters (0 = invalid) and converted to meters for all
computation.  Point clouds are ``(N, 3)`` float arrays in meters.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAX_DEPTH_MM = 65535


class FormatError(ValueError):
    """Malformed depth, metadata, or point cloud file."""


@dataclass(frozen=True)
class Intrinsics:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float) -> Intrinsics:
        """Square pixels, centered principal point."""
        f = (width / 2.0) / np.tan(np.radians(hfov_deg) / 2.0)
        return cls(width, height, f, f, (width - 1) / 2.0, (height - 1) / 2.0)

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Intrinsics:
        return cls(int(d["width"]), int(d["height"]), float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]))


@dataclass(frozen=True, eq=False)
class DepthImage:
    intrinsics: Intrinsics
    data: np.ndarray  # (height, width) uint16, millimeters

    def __post_init__(self):
        data = np.asarray(self.data)
        k = self.intrinsics
        if data.size != k.width * k.height:
            raise ValueError(f"depth data has {data.size} samples, expected {k.width * k.height}")
        data = data.reshape(k.height, k.width)
        if data.dtype != np.uint16:
            if np.any(data < 0) or np.any(data > MAX_DEPTH_MM):
                raise ValueError("depth samples must fit in 16 bits")
            data = data.astype(np.uint16)
        else:
            data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)


def backproject_pixels(u, v, depth_mm, k: Intrinsics) -> np.ndarray:
    """Inverse pinhole for (possibly sub-pixel) coordinates; depth in mm."""
    z = np.asarray(depth_mm, dtype=float) / 1000.0
    x = (np.asarray(u, dtype=float) - k.cx) / k.fx * z
    y = (np.asarray(v, dtype=float) - k.cy) / k.fy * z
    return np.column_stack([np.ravel(x), np.ravel(y), np.ravel(z)])


def backproject(img: DepthImage) -> np.ndarray:
    """Back-project every valid pixel, in row-major scan order."""
    v, u = np.nonzero(img.data)
    return backproject_pixels(u, v, img.data[v, u], img.intrinsics)


def project(p, k: Intrinsics):
    """Project a sensor-frame point; ``None`` when behind the camera or off-image.

    Returns ``(u, v, depth_mm)`` as floats otherwise.  The in-view test uses
    the same pixel-center convention as ``backproject``: ``u`` must round to
    a column in ``[0, width)``.
    """
    x, y, z = (float(c) for c in p)
    if not z > 0:
        return None
    u = k.fx * x / z + k.cx
    v = k.fy * y / z + k.cy
    if not (-0.5 <= u < k.width - 0.5 and -0.5 <= v < k.height - 0.5):
        return None
    return u, v, 1000.0 * z


def project_points(points: np.ndarray, k: Intrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised ``project``: (u, v, in_view mask)."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    z = points[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k.fx * points[:, 0] / z + k.cx
        v = k.fy * points[:, 1] / z + k.cy
    ok = (z > 0) & (u >= -0.5) & (u < k.width - 0.5) & (v >= -0.5) & (v < k.height - 0.5)
    return u, v, ok


def filter_radius(cloud: np.ndarray, center, radius: float) -> np.ndarray:
    if not radius > 0:
        raise ValueError("radius must be positive")
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    d = np.linalg.norm(cloud - np.asarray(center, dtype=float), axis=1)
    return cloud[d <= radius]


def voxel_downsample(cloud: np.ndarray, cell: float) -> np.ndarray:
    """One centroid per occupied cubic cell, ordered by (i, j, k) cell index."""
    if not cell > 0:
        raise ValueError("cell size must be positive")
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    if len(cloud) == 0:
        return cloud.copy()
    idx = np.floor(cloud / cell).astype(np.int64)
    cells, inverse, counts = np.unique(idx, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(cells), 3))
    np.add.at(sums, inverse, cloud)
    return sums / counts[:, None]


# -- file formats -----------------------------------------------------------


def atomic_write(path, data: bytes | str) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"})) as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_depth(img: DepthImage, pgm_path, sensor_id: str, timestamp_us: int) -> Path:
    """Write ``<name>.pgm`` plus its ``<name>.json`` sidecar; returns the sidecar path."""
    pgm_path = Path(pgm_path)
    k = img.intrinsics
    header = f"P5\n{k.width} {k.height}\n65535\n".encode("ascii")
    atomic_write(pgm_path, header + img.data.astype(">u2").tobytes())
    meta = dict(k.to_dict(), sensor_id=sensor_id, timestamp_us=int(timestamp_us))
    meta_path = pgm_path.with_suffix(".json")
    atomic_write(meta_path, json.dumps(meta, indent=2) + "\n")
    return meta_path


def _pgm_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        while i < len(buf) and buf[i : i + 1].isspace():
            i += 1
        if i < len(buf) and buf[i : i + 1] == b"#":
            while i < len(buf) and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(buf) and not buf[j : j + 1].isspace():
            j += 1
        if j == i:
            raise FormatError("truncated PGM header")
        tokens.append(buf[i:j])
        i = j
    # exactly one whitespace byte separates the header from the raster
    return tokens, i + 1


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(buf, 4)
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: bad PGM header") from exc
    if maxval != 65535:
        raise FormatError(f"{path}: maxval must be 65535, got {maxval}")
    n = width * height
    raster = buf[offset : offset + 2 * n]
    if len(raster) != 2 * n:
        raise FormatError(f"{path}: expected {2 * n} raster bytes, found {len(raster)}")
    return np.frombuffer(raster, dtype=">u2").astype(np.uint16).reshape(height, width)


def read_depth(pgm_path, meta_path=None) -> tuple[DepthImage, dict]:
    """Load a depth PGM and its sidecar; returns the image and the metadata dict."""
    pgm_path = Path(pgm_path)
    meta_path = Path(meta_path) if meta_path is not None else pgm_path.with_suffix(".json")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{meta_path}:{exc.lineno}: {exc.msg}") from exc
    try:
        k = Intrinsics.from_dict(meta)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{meta_path}: bad intrinsics ({exc})") from exc
    data = read_pgm(pgm_path)
    if data.shape != (k.height, k.width):
        raise FormatError(f"{pgm_path}: image is {data.shape[1]}x{data.shape[0]}, metadata says {k.width}x{k.height}")
    return DepthImage(k, data), meta


def ply_text(cloud: np.ndarray) -> str:
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "end_header",
    ]
    lines.extend(f"{x:.6f} {y:.6f} {z:.6f}" for x, y, z in cloud)
    return "\n".join(lines) + "\n"


def write_ply(cloud: np.ndarray, path) -> None:
    atomic_write(path, ply_text(cloud))


def read_ply(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FormatError(f"{path}: not a PLY file")
    n = None
    for i, line in enumerate(lines):
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            n = int(parts[2])
        if line.strip() == "end_header":
            body = lines[i + 1 : i + 1 + (n or 0)]
            break
    else:
        raise FormatError(f"{path}: missing end_header")
    if n is None:
        raise FormatError(f"{path}: no vertex element")
    if len(body) != n:
        raise FormatError(f"{path}: header declares {n} vertices, found {len(body)}")
    if n == 0:
        return np.zeros((0, 3))
    try:
        return np.array([[float(t) for t in row.split()[:3]] for row in body]).reshape(n, 3)
    except ValueError as exc:
        raise FormatError(f"{path}: bad vertex row ({exc})") from exc
