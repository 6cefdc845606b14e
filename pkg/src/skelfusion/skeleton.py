"""Skeleton data model, stream alignment, pre-filtering and JSON Lines I/O."""

from __future__ import annotations

import bisect
import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .geometry import GeometryError, RigidTransform, orthonormalize

DEFAULT_TAU_HOLD_US = 50_000


class StreamError(ValueError):
    """Bad frame ordering or malformed stream content."""


class Confidence(enum.IntEnum):
    NONE = 0
    LOW = 1
    MEDIUM = 2
    HIGH = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, s: str | Confidence) -> Confidence:
        if isinstance(s, Confidence):
            return s
        try:
            return cls[str(s).upper()]
        except KeyError:
            raise ValueError(f"unknown confidence {s!r}") from None


class JointId(str, enum.Enum):
    PELVIS = "Pelvis"
    SPINE_CHEST = "SpineChest"
    NECK = "Neck"
    HEAD = "Head"
    SHOULDER_L = "ShoulderL"
    SHOULDER_R = "ShoulderR"
    ELBOW_L = "ElbowL"
    ELBOW_R = "ElbowR"
    HAND_L = "HandL"
    HAND_R = "HandR"
    FOOT_L = "FootL"
    FOOT_R = "FootR"


AXES_TOL = 1e-6


_EYE3 = np.eye(3)


def _is_triad(a: np.ndarray) -> bool:
    if not np.abs(a @ a.T - _EYE3).max() <= AXES_TOL:
        return False
    # z must equal x cross y for a right-handed triad
    x, y, z = a.tolist()
    return (x[1] * y[2] - x[2] * y[1]) * z[0] + (x[2] * y[0] - x[0] * y[2]) * z[1] + (x[0] * y[1] - x[1] * y[0]) * z[2] > 0


@dataclass(frozen=True, eq=False)
class Joint:
    id: JointId
    position: np.ndarray
    axes: np.ndarray  # rows are the x, y, z axis vectors
    confidence: Confidence = Confidence.HIGH

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        a = np.array(self.axes, dtype=float).reshape(3, 3)
        conf = Confidence(self.confidence)
        if not np.isfinite(p).all():
            raise ValueError(f"joint {self.id}: non-finite position")
        if conf > Confidence.NONE and not _is_triad(a):
            raise ValueError(f"joint {self.id}: axes are not an orthonormal right-handed triad")
        p.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "axes", a)
        object.__setattr__(self, "id", JointId(self.id))
        object.__setattr__(self, "confidence", conf)

    def orientation(self) -> np.ndarray:
        """Rotation whose columns are the joint axes (joint frame -> parent frame)."""
        return self.axes.T

    def pose(self) -> RigidTransform:
        return RigidTransform(self.orientation(), self.position)


@dataclass(frozen=True)
class Skeleton:
    body_id: int
    joints: tuple[Joint, ...]

    def __post_init__(self):
        joints = tuple(self.joints)
        ids = [j.id for j in joints]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate joint ids in body {self.body_id}")
        if JointId.PELVIS not in ids:
            raise ValueError(f"body {self.body_id} has no pelvis joint")
        object.__setattr__(self, "joints", joints)

    def joint(self, jid: JointId) -> Joint | None:
        for j in self.joints:
            if j.id == jid:
                return j
        return None

    @property
    def pelvis(self) -> Joint:
        return self.joint(JointId.PELVIS)

    def joint_map(self) -> dict[JointId, Joint]:
        return {j.id: j for j in self.joints}


@dataclass(frozen=True)
class SkeletonFrame:
    sensor_id: str
    timestamp_us: int
    skeletons: tuple[Skeleton, ...] = ()

    def __post_init__(self):
        skels = tuple(self.skeletons)
        ids = [s.body_id for s in skels]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate body ids in frame {self.sensor_id}@{self.timestamp_us}")
        object.__setattr__(self, "skeletons", skels)
        object.__setattr__(self, "timestamp_us", int(self.timestamp_us))


@dataclass(frozen=True)
class TrackingAreaConfig:
    min_sensor_distance: float = 0.0
    area_polygon: tuple[tuple[float, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.min_sensor_distance < 0:
            raise ValueError("min_sensor_distance must be >= 0")
        poly = tuple((float(x), float(y)) for x, y in self.area_polygon)
        if poly and len(poly) < 3:
            raise ValueError("tracking area polygon needs at least 3 vertices")
        if poly and _self_intersects(poly):
            raise ValueError("tracking area polygon is self-intersecting")
        object.__setattr__(self, "area_polygon", poly)


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return d1 * d2 < 0 and d3 * d4 < 0


def _self_intersects(poly) -> bool:
    n = len(poly)
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(*edges[i], *edges[j]):
                return True
    return False


def point_in_polygon(x: float, y: float, poly: Sequence[tuple[float, float]]) -> bool:
    """Ray-casting parity test; points on the boundary count as inside."""
    n = len(poly)
    inside = False
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        # boundary check: collinear and within the segment's bounding box
        cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        if abs(cross) <= 1e-12 and min(x1, x2) - 1e-12 <= x <= max(x1, x2) + 1e-12 and min(y1, y2) - 1e-12 <= y <= max(y1, y2) + 1e-12:
            return True
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


def transform_skeleton(t: RigidTransform, s: Skeleton) -> Skeleton:
    joints = tuple(
        Joint(j.id, t.apply(j.position), j.axes @ t.rotation.T, j.confidence) for j in s.joints
    )
    return Skeleton(s.body_id, joints)


def transform_frame(t: RigidTransform, f: SkeletonFrame) -> SkeletonFrame:
    return replace(f, skeletons=tuple(transform_skeleton(t, s) for s in f.skeletons))


def _blend_axes(a0: np.ndarray, a1: np.ndarray, alpha: float) -> np.ndarray:
    blended = a0 + alpha * (a1 - a0)
    try:
        return np.array(orthonormalize(*blended))
    except GeometryError:
        return (a0 if alpha <= 0.5 else a1).copy()


def _interpolate_skeleton(s0: Skeleton, s1: Skeleton, alpha: float) -> Skeleton:
    m1 = s1.joint_map()
    joints = []
    for j0 in s0.joints:
        j1 = m1.get(j0.id)
        if j1 is None:
            if alpha <= 0.5:
                joints.append(j0)
            continue
        pos = j1.position if alpha == 1.0 else j0.position + alpha * (j1.position - j0.position)
        if alpha == 0.0:
            axes = j0.axes
        elif alpha == 1.0:
            axes = j1.axes
        else:
            axes = _blend_axes(j0.axes, j1.axes, alpha)
        joints.append(Joint(j0.id, pos, axes, min(j0.confidence, j1.confidence)))
    if alpha > 0.5:
        seen = {j.id for j in joints}
        joints.extend(j for j in s1.joints if j.id not in seen)
    return Skeleton(s0.body_id, tuple(joints))


def interpolate_frames(
    f0: SkeletonFrame, f1: SkeletonFrame, t_us: int, tau_hold_us: int = DEFAULT_TAU_HOLD_US
) -> SkeletonFrame:
    """Resample a sensor's stream at ``t_us`` between two bracketing frames.

    Bodies seen in both frames are blended linearly (axes re-orthonormalized,
    confidence = the lower of the two).  A body seen in only one frame is
    kept verbatim if that frame lies within ``tau_hold_us`` of ``t_us``.
    """
    if f0.sensor_id != f1.sensor_id:
        raise StreamError(f"cannot interpolate across sensors {f0.sensor_id!r} and {f1.sensor_id!r}")
    t0, t1 = f0.timestamp_us, f1.timestamp_us
    if not (t0 <= t_us <= t1):
        raise StreamError(f"timestamp {t_us} not within [{t0}, {t1}]")
    alpha = 0.0 if t1 == t0 else (t_us - t0) / (t1 - t0)
    by_id1 = {s.body_id: s for s in f1.skeletons}
    ids0 = {s.body_id for s in f0.skeletons}
    out = []
    for s0 in f0.skeletons:
        s1 = by_id1.get(s0.body_id)
        if s1 is not None:
            out.append(_interpolate_skeleton(s0, s1, alpha))
        elif t_us - t0 <= tau_hold_us:
            out.append(s0)
    for s1 in f1.skeletons:
        if s1.body_id not in ids0 and t1 - t_us <= tau_hold_us:
            out.append(s1)
    return SkeletonFrame(f0.sensor_id, t_us, tuple(out))


class SkeletonStream:
    """Time-ordered frames from one sensor with random-access resampling."""

    def __init__(self, frames: Iterable[SkeletonFrame]):
        self.frames: list[SkeletonFrame] = list(frames)
        if not self.frames:
            raise StreamError("empty skeleton stream")
        self.sensor_id = self.frames[0].sensor_id
        prev = None
        for f in self.frames:
            if f.sensor_id != self.sensor_id:
                raise StreamError(f"stream mixes sensors {self.sensor_id!r} and {f.sensor_id!r}")
            if prev is not None and f.timestamp_us < prev:
                raise StreamError(
                    f"sensor {self.sensor_id!r}: timestamp {f.timestamp_us} after {prev} (must be non-decreasing)"
                )
            prev = f.timestamp_us
        self._times = [f.timestamp_us for f in self.frames]

    @property
    def start_us(self) -> int:
        return self._times[0]

    @property
    def end_us(self) -> int:
        return self._times[-1]

    def __len__(self) -> int:
        return len(self.frames)

    def sample(self, t_us: int, tau_hold_us: int = DEFAULT_TAU_HOLD_US) -> SkeletonFrame:
        """Frame at ``t_us``; outside the recorded span, the edge frame is held for ``tau_hold_us``."""
        i = bisect.bisect_right(self._times, t_us)
        if i == 0:
            f = self.frames[0]
            keep = f.skeletons if f.timestamp_us - t_us <= tau_hold_us else ()
            return SkeletonFrame(self.sensor_id, t_us, keep)
        if i == len(self.frames):
            f = self.frames[-1]
            keep = f.skeletons if t_us - f.timestamp_us <= tau_hold_us else ()
            return SkeletonFrame(self.sensor_id, t_us, keep)
        f0, f1 = self.frames[i - 1], self.frames[i]
        return interpolate_frames(f0, f1, t_us, tau_hold_us)


def filter_skeletons(f: SkeletonFrame, sensor_pose: RigidTransform, cfg: TrackingAreaConfig) -> SkeletonFrame:
    """Drop skeletons too close to the sensor or with the pelvis outside the tracking area."""
    origin = sensor_pose.translation
    keep = []
    for s in f.skeletons:
        p = s.pelvis.position
        if np.linalg.norm(p - origin) < cfg.min_sensor_distance:
            continue
        if cfg.area_polygon and not point_in_polygon(p[0], p[1], cfg.area_polygon):
            continue
        keep.append(s)
    return replace(f, skeletons=tuple(keep))


# -- JSON Lines -------------------------------------------------------------


def joint_to_dict(j: Joint) -> dict:
    return {
        "id": j.id.value,
        "pos": [float(c) for c in j.position],
        "axes": {k: [float(c) for c in row] for k, row in zip("xyz", j.axes)},
        "conf": j.confidence.label,
    }


def joint_from_dict(d: dict) -> Joint:
    axes = d["axes"]
    return Joint(JointId(d["id"]), d["pos"], [axes["x"], axes["y"], axes["z"]], Confidence.parse(d["conf"]))


def skeleton_to_dict(s: Skeleton) -> dict:
    return {"body_id": int(s.body_id), "joints": [joint_to_dict(j) for j in s.joints]}


def skeleton_from_dict(d: dict) -> Skeleton:
    return Skeleton(int(d["body_id"]), tuple(joint_from_dict(j) for j in d["joints"]))


def frame_to_dict(f: SkeletonFrame) -> dict:
    return {
        "sensor_id": f.sensor_id,
        "timestamp_us": int(f.timestamp_us),
        "bodies": [skeleton_to_dict(s) for s in f.skeletons],
    }


def frame_from_dict(d: dict) -> SkeletonFrame:
    return SkeletonFrame(
        str(d["sensor_id"]), int(d["timestamp_us"]), tuple(skeleton_from_dict(b) for b in d["bodies"])
    )


def dumps_line(obj: dict) -> str:
    # json uses repr() for floats, which round-trips exactly
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def frames_to_jsonl(frames: Iterable[SkeletonFrame]) -> str:
    return "".join(dumps_line(frame_to_dict(f)) + "\n" for f in frames)


def iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise StreamError(f"{path}:{lineno}: {exc.msg}") from exc


def read_frames(path) -> list[SkeletonFrame]:
    frames = []
    for lineno, obj in iter_jsonl(path):
        try:
            frames.append(frame_from_dict(obj))
        except (KeyError, TypeError, ValueError) as exc:
            raise StreamError(f"{path}:{lineno}: bad skeleton frame ({exc})") from exc
    return frames
