"""Synthetic multi-sensor scenes with exact ground truth.

World frame: z up, floor at z = 0.  Sensor poses are stored sensor->world
(the same direction as calibration extrinsics).  Bodies are stick figures
built from a fixed bone table; their limbs double as capsules for depth
ray casting and for occlusion tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import RigidTransform, invert, rot_z, rotvec_to_matrix
from .sensor import DepthImage, Intrinsics, atomic_write, project_points, write_depth
from .skeleton import Confidence, Joint, JointId, Skeleton, SkeletonFrame, frames_to_jsonl

# Offsets from the pelvis in the body frame: +x right, +y forward, +z up.
BONE_TABLE: dict[JointId, tuple[float, float, float]] = {
    JointId.PELVIS: (0.0, 0.0, 0.0),
    JointId.SPINE_CHEST: (0.0, 0.0, 0.30),
    JointId.NECK: (0.0, 0.0, 0.55),
    JointId.HEAD: (0.0, 0.02, 0.72),
    JointId.SHOULDER_L: (-0.18, 0.0, 0.50),
    JointId.SHOULDER_R: (0.18, 0.0, 0.50),
    JointId.ELBOW_L: (-0.22, 0.02, 0.22),
    JointId.ELBOW_R: (0.22, 0.02, 0.22),
    JointId.HAND_L: (-0.22, 0.12, -0.02),
    JointId.HAND_R: (0.22, 0.12, -0.02),
    JointId.FOOT_L: (-0.11, 0.03, -0.90),
    JointId.FOOT_R: (0.11, 0.03, -0.90),
}

# (from, to, radius); from == to is a sphere.
LIMBS: tuple[tuple[JointId, JointId, float], ...] = (
    (JointId.PELVIS, JointId.SPINE_CHEST, 0.14),
    (JointId.SPINE_CHEST, JointId.NECK, 0.15),
    (JointId.HEAD, JointId.HEAD, 0.11),
    (JointId.SHOULDER_L, JointId.SHOULDER_R, 0.07),
    (JointId.SHOULDER_L, JointId.ELBOW_L, 0.05),
    (JointId.SHOULDER_R, JointId.ELBOW_R, 0.05),
    (JointId.ELBOW_L, JointId.HAND_L, 0.045),
    (JointId.ELBOW_R, JointId.HAND_R, 0.045),
    (JointId.PELVIS, JointId.FOOT_L, 0.08),
    (JointId.PELVIS, JointId.FOOT_R, 0.08),
)


@dataclass(frozen=True)
class Box:
    min: tuple[float, float, float]
    max: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.min)
        hi = tuple(float(v) for v in self.max)
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"box min {lo} must be below max {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)


@dataclass(frozen=True)
class BodyModel:
    """A person following piecewise-linear waypoints ``(t_s, x, y, heading_rad)``."""

    waypoints: tuple[tuple[float, float, float, float], ...]
    pelvis_height: float = 0.95

    def __post_init__(self):
        wps = tuple(tuple(float(v) for v in w) for w in self.waypoints)
        if not wps:
            raise ValueError("body needs at least one waypoint")
        if any(b[0] < a[0] for a, b in zip(wps, wps[1:])):
            raise ValueError("waypoint times must be non-decreasing")
        if not self.pelvis_height > 0.9:
            raise ValueError("pelvis must sit above the feet (pelvis_height > 0.9 m)")
        object.__setattr__(self, "waypoints", wps)

    @classmethod
    def standing(cls, x: float, y: float, heading: float = 0.0, pelvis_height: float = 0.95) -> BodyModel:
        return cls(((0.0, x, y, heading),), pelvis_height)

    def pose_at(self, t_us: int) -> tuple[np.ndarray, float]:
        t = t_us / 1e6
        wps = self.waypoints
        if t <= wps[0][0]:
            w = wps[0]
            return np.array([w[1], w[2], self.pelvis_height]), w[3]
        for w0, w1 in zip(wps, wps[1:]):
            if t <= w1[0]:
                span = w1[0] - w0[0]
                a = 0.0 if span == 0 else (t - w0[0]) / span
                xy = np.array(w0[1:3]) + a * (np.array(w1[1:3]) - np.array(w0[1:3]))
                return np.array([xy[0], xy[1], self.pelvis_height]), w0[3] + a * (w1[3] - w0[3])
        w = wps[-1]
        return np.array([w[1], w[2], self.pelvis_height]), w[3]


@dataclass(frozen=True)
class SimSensor:
    sensor_id: str
    intrinsics: Intrinsics
    pose: RigidTransform  # sensor -> world
    phase_offset_us: int = 0
    max_range: float = 5.0


@dataclass(frozen=True)
class NoiseModel:
    joint_sigma: float = 0.0  # meters, per axis
    axis_sigma: float = 0.0  # radians, RMS rotation angle
    depth_sigma_mm: float = 0.0
    unoccluded_confidence: Confidence = Confidence.HIGH
    occluded_noise_factor: float = 3.0
    # A body is lost by the tracker when more than this fraction of its joints is occluded.
    lost_occluded_fraction: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if min(self.joint_sigma, self.axis_sigma, self.depth_sigma_mm) < 0:
            raise ValueError("noise sigmas must be >= 0")


@dataclass(frozen=True)
class Scene:
    sensors: tuple[SimSensor, ...]
    bodies: tuple[BodyModel, ...] = ()
    boxes: tuple[Box, ...] = ()
    floor: bool = True
    noise: NoiseModel = field(default_factory=NoiseModel)
    duration_s: float = 1.0
    fps: float = 30.0
    calibration_instants_s: tuple[float, ...] = ()

    def sensor(self, sensor_id: str) -> SimSensor:
        for s in self.sensors:
            if s.sensor_id == sensor_id:
                return s
        raise KeyError(f"unknown sensor {sensor_id!r}")

    def sensor_index(self, sensor_id: str) -> int:
        return [s.sensor_id for s in self.sensors].index(sensor_id)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """Sensor->world pose of a camera at ``eye`` looking at ``target`` (+Y down in the image)."""
    eye = np.asarray(eye, dtype=float)
    fwd = np.asarray(target, dtype=float) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=float))
    if np.linalg.norm(right) < 1e-9:
        raise ValueError("view direction is parallel to the up vector")
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    return RigidTransform(np.column_stack([right, down, fwd]), eye)


def body_id_for(sensor_index: int, body_index: int) -> int:
    """Per-sensor tracker id; distinct across sensors so mix-ups are detectable."""
    return 100 * (sensor_index + 1) + body_index + 1


# -- kinematics -------------------------------------------------------------


def joint_positions(b: BodyModel, t_us: int) -> dict[JointId, np.ndarray]:
    pelvis, heading = b.pose_at(t_us)
    r = rot_z(heading)
    return {jid: pelvis + r @ np.array(off) for jid, off in BONE_TABLE.items()}


def body_joints(b: BodyModel, t_us: int, body_id: int = 0) -> Skeleton:
    """Ground-truth world-frame skeleton; all joints High, axes = body frame."""
    _, heading = b.pose_at(t_us)
    axes = rot_z(heading).T
    pos = joint_positions(b, t_us)
    return Skeleton(body_id, tuple(Joint(jid, pos[jid], axes, Confidence.HIGH) for jid in BONE_TABLE))


def body_capsules(b: BodyModel, t_us: int) -> list[tuple[np.ndarray, np.ndarray, float]]:
    pos = joint_positions(b, t_us)
    return [(pos[a], pos[c], r) for a, c, r in LIMBS]


# -- ray casting ------------------------------------------------------------


def _ray_plane_z0(o, d):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -o[2] / d[:, 2]
    return np.where((d[:, 2] < 0) & (t > 0), t, np.inf)


def _ray_box(o, d, box: Box):
    lo, hi = np.array(box.min), np.array(box.max)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (lo - o) * inv
        t2 = (hi - o) * inv
    tlo = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
    thi = np.where(np.isnan(t2), np.inf, np.maximum(t1, t2))
    # a zero direction component outside the slab never hits
    outside = (d == 0) & ((o < lo) | (o > hi))
    tmin = tlo.max(axis=1)
    tmax = thi.min(axis=1)
    hit = (tmax >= tmin) & (tmin > 0) & ~outside.any(axis=1)
    return np.where(hit, tmin, np.inf)


def _ray_sphere(o, d, c, r):
    oc = o - c
    b = d @ oc
    cc = oc @ oc - r * r
    h = b * b - cc
    with np.errstate(invalid="ignore"):
        t = -b - np.sqrt(h)
    return np.where((h >= 0) & (t > 0), t, np.inf)


def _ray_cylinder(o, d, a, c, r):
    axis = c - a
    length = np.linalg.norm(axis)
    if length < 1e-12:
        return np.full(len(d), np.inf)
    k = axis / length
    oa = o - a
    dk = d @ k
    d_perp = d - dk[:, None] * k
    o_perp = oa - (oa @ k) * k
    qa = np.einsum("ij,ij->i", d_perp, d_perp)
    qb = 2.0 * (d_perp @ o_perp)
    qc = o_perp @ o_perp - r * r
    disc = qb * qb - 4 * qa * qc
    with np.errstate(invalid="ignore", divide="ignore"):
        t = (-qb - np.sqrt(disc)) / (2 * qa)
    s = (oa @ k) + t * dk
    ok = (disc >= 0) & (qa > 1e-15) & (t > 0) & (s >= 0) & (s <= length)
    return np.where(ok, t, np.inf)


def _ray_capsule(o, d, a, c, r):
    t = np.minimum(_ray_sphere(o, d, a, r), _ray_sphere(o, d, c, r))
    return np.minimum(t, _ray_cylinder(o, d, a, c, r))


def scene_primitives(scene: Scene, t_us: int) -> list[tuple]:
    """Every surface in the scene at ``t_us`` as ``(kind, *params)``."""
    prims: list[tuple] = []
    if scene.floor:
        prims.append(("floor",))
    prims.extend(("box", b) for b in scene.boxes)
    for body in scene.bodies:
        prims.extend(("capsule", a, c, r) for a, c, r in body_capsules(body, t_us))
    return prims


def ray_hits(o: np.ndarray, d: np.ndarray, prims: Sequence[tuple]) -> np.ndarray:
    """Distance along unit rays ``d`` to each primitive, shape (len(prims), N); inf = miss."""
    out = np.full((len(prims), len(d)), np.inf)
    for n, p in enumerate(prims):
        if p[0] == "floor":
            out[n] = _ray_plane_z0(o, d)
        elif p[0] == "box":
            out[n] = _ray_box(o, d, p[1])
        else:
            out[n] = _ray_capsule(o, d, p[1], p[2], p[3])
    return out


def pixel_rays(k: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Sensor-frame unit rays for every pixel (row-major) and their z components."""
    v, u = np.mgrid[0 : k.height, 0 : k.width]
    d = np.column_stack([((u - k.cx) / k.fx).ravel(), ((v - k.cy) / k.fy).ravel(), np.ones(u.size)])
    norm = np.linalg.norm(d, axis=1)
    return d / norm[:, None], 1.0 / norm


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


_DEPTH_STREAM = 1
_SKELETON_STREAM = 2


def render_depth(scene: Scene, sensor_id: str, t_us: int, frame_index: int = 0) -> DepthImage:
    """Nearest-surface depth per pixel in millimeters; misses and far hits are 0."""
    sensor = scene.sensor(sensor_id)
    k = sensor.intrinsics
    rays, zscale = pixel_rays(k)
    o = sensor.pose.translation
    d_world = sensor.pose.rotate(rays)
    prims = scene_primitives(scene, t_us)
    if prims:
        t = ray_hits(o, d_world, prims).min(axis=0)
    else:
        t = np.full(len(rays), np.inf)
    z = t * zscale
    valid = np.isfinite(z) & (z <= sensor.max_range)
    depth_mm = np.where(valid, z * 1000.0, 0.0)
    sigma = scene.noise.depth_sigma_mm
    if sigma > 0:
        rng = _rng(scene.noise.seed, _DEPTH_STREAM, scene.sensor_index(sensor_id), frame_index)
        depth_mm = depth_mm + np.where(valid, rng.normal(0.0, sigma, size=depth_mm.shape), 0.0)
    data = np.clip(np.rint(depth_mm), 0, 65535).astype(np.uint16)
    data[~valid] = 0
    return DepthImage(k, data.reshape(k.height, k.width))


# -- occlusion --------------------------------------------------------------


def _segment_segment_distance(p0, p1, q0, q1) -> float:
    d1, d2, r = p1 - p0, q1 - q0, p0 - q0
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r
    if a <= 1e-15 and e <= 1e-15:
        return float(np.linalg.norm(r))
    if a <= 1e-15:
        s, t = 0.0, np.clip(f / e, 0.0, 1.0)
    else:
        c = d1 @ r
        if e <= 1e-15:
            t, s = 0.0, np.clip(-c / a, 0.0, 1.0)
        else:
            b = d1 @ d2
            denom = a * e - b * b
            s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > 1e-15 else 0.0
            t = (b * s + f) / e
            if t < 0:
                t, s = 0.0, np.clip(-c / a, 0.0, 1.0)
            elif t > 1:
                t, s = 1.0, np.clip((b - c) / a, 0.0, 1.0)
    return float(np.linalg.norm((p0 + s * d1) - (q0 + t * d2)))


def _segment_hits_box(p0, p1, box: Box) -> bool:
    d = p1 - p0
    lo, hi = np.array(box.min), np.array(box.max)
    t0, t1 = 0.0, 1.0
    for ax in range(3):
        if abs(d[ax]) < 1e-15:
            if p0[ax] < lo[ax] or p0[ax] > hi[ax]:
                return False
            continue
        a = (lo[ax] - p0[ax]) / d[ax]
        b = (hi[ax] - p0[ax]) / d[ax]
        t0, t1 = max(t0, min(a, b)), min(t1, max(a, b))
        if t0 > t1:
            return False
    return True


def joint_occluded(eye, joint, blockers_caps, boxes) -> bool:
    """True when the eye->joint segment passes through a prop or another body's limb."""
    for box in boxes:
        if _segment_hits_box(eye, joint, box):
            return True
    for a, c, r in blockers_caps:
        if _segment_segment_distance(eye, joint, a, c) < r:
            return True
    return False


def _perturb(rng: np.random.Generator, axes: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return axes
    noise = rotvec_to_matrix(rng.normal(0.0, sigma / np.sqrt(3.0), size=3))
    return axes @ noise.T


def observe_skeletons(scene: Scene, sensor_id: str, t_us: int, frame_index: int = 0) -> SkeletonFrame:
    """Noisy sensor-frame skeletons as the sensor's body tracker would report them.

    Confidence per joint: outside the frustum or beyond range -> None; line
    of sight blocked by a prop or another body -> Low (noise scaled by
    ``occluded_noise_factor``); otherwise ``unoccluded_confidence``.  Bodies
    whose pelvis is None, or with too many occluded joints, are not reported.
    """
    sensor = scene.sensor(sensor_id)
    s_idx = scene.sensor_index(sensor_id)
    noise = scene.noise
    world_to_sensor = invert(sensor.pose)
    eye = sensor.pose.translation
    all_caps = [body_capsules(b, t_us) for b in scene.bodies]
    out = []
    for b_idx, body in enumerate(scene.bodies):
        truth = body_joints(body, t_us)
        blockers = [c for i, caps in enumerate(all_caps) if i != b_idx for c in caps]
        local = [world_to_sensor.apply(j.position) for j in truth.joints]
        _, _, in_view = project_points(np.array(local), sensor.intrinsics)
        confs = []
        for j, p_s, ok in zip(truth.joints, local, in_view):
            if not ok or np.linalg.norm(p_s) > sensor.max_range:
                confs.append(Confidence.NONE)
            elif joint_occluded(eye, j.position, blockers, scene.boxes):
                confs.append(Confidence.LOW)
            else:
                confs.append(noise.unoccluded_confidence)
        if confs[0] == Confidence.NONE:
            continue
        n_occluded = sum(c == Confidence.LOW for c in confs)
        if n_occluded > noise.lost_occluded_fraction * len(confs):
            continue
        rng = _rng(noise.seed, _SKELETON_STREAM, s_idx, frame_index, b_idx)
        joints = []
        for j, p_s, conf in zip(truth.joints, local, confs):
            factor = noise.occluded_noise_factor if conf == Confidence.LOW else 1.0
            # draw unconditionally so the stream layout never depends on confidences
            dp = rng.normal(0.0, 1.0, size=3) * noise.joint_sigma * factor
            axes = _perturb(rng, j.axes @ world_to_sensor.rotation.T, noise.axis_sigma * factor)
            joints.append(Joint(j.id, p_s + dp, axes, conf))
        out.append(Skeleton(body_id_for(s_idx, b_idx), tuple(joints)))
    return SkeletonFrame(sensor_id, t_us, tuple(out))


# -- sessions ---------------------------------------------------------------


def frame_times(scene: Scene, sensor: SimSensor) -> list[int]:
    n = int(round(scene.duration_s * scene.fps))
    return [int(round(i * 1e6 / scene.fps)) + sensor.phase_offset_us for i in range(n)]


def base_times(scene: Scene) -> list[int]:
    n = int(round(scene.duration_s * scene.fps))
    return [int(round(i * 1e6 / scene.fps)) for i in range(n)]


def ground_truth(scene: Scene) -> dict:
    ref = scene.sensors[0]
    ref_inv = invert(ref.pose)
    frames = []
    for t in base_times(scene):
        persons = []
        for b_idx, body in enumerate(scene.bodies):
            pos = joint_positions(body, t)
            persons.append({"person": b_idx, "joints": {jid.value: [float(c) for c in pos[jid]] for jid in BONE_TABLE}})
        frames.append({"timestamp_us": t, "persons": persons})
    return {
        "reference_sensor_id": ref.sensor_id,
        "sensors": [
            {
                "sensor_id": s.sensor_id,
                "pose_4x4_row_major": [float(v) for v in s.pose.matrix().ravel()],
                "extrinsic_4x4_row_major": [
                    float(v) for v in (np.eye(4) if s is ref else (ref_inv @ s.pose).matrix()).ravel()
                ],
            }
            for s in scene.sensors
        ],
        "correspondence": {
            s.sensor_id: {str(body_id_for(i, b)): b for b in range(len(scene.bodies))}
            for i, s in enumerate(scene.sensors)
        },
        "frames": frames,
    }


def generate_session(scene: Scene, out_dir, write_depth_images: bool = True) -> dict:
    """Write streams, depth captures, a manifest and the ground truth; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"seed": scene.noise.seed, "fps": scene.fps, "duration_s": scene.duration_s, "sensors": []}
    for s_idx, sensor in enumerate(scene.sensors):
        times = frame_times(scene, sensor)
        frames = [observe_skeletons(scene, sensor.sensor_id, t, i) for i, t in enumerate(times)]
        stream = f"{sensor.sensor_id}.skeletons.jsonl"
        atomic_write(out / stream, frames_to_jsonl(frames))
        captures = []
        if write_depth_images and times:
            for instant in scene.calibration_instants_s:
                i = min(max(int(round(instant * scene.fps)), 0), len(times) - 1)
                img = render_depth(scene, sensor.sensor_id, times[i], i)
                pgm = Path("depth") / f"{sensor.sensor_id}_{times[i]}.pgm"
                write_depth(img, out / pgm, sensor.sensor_id, times[i])
                captures.append({"timestamp_us": times[i], "pgm": pgm.as_posix(), "meta": pgm.with_suffix(".json").as_posix()})
        manifest["sensors"].append(
            {
                "sensor_id": sensor.sensor_id,
                "intrinsics": sensor.intrinsics.to_dict(),
                "stream": stream,
                "frames": len(frames),
                "depth": captures,
            }
        )
    atomic_write(out / "ground_truth.json", json.dumps(ground_truth(scene), indent=1) + "\n")
    atomic_write(out / "session.json", json.dumps(manifest, indent=2) + "\n")
    return manifest


# -- scene files ------------------------------------------------------------


def _intrinsics_from(d: dict) -> Intrinsics:
    if "fx" in d:
        return Intrinsics.from_dict(d)
    return Intrinsics.from_fov(int(d.get("width", 320)), int(d.get("height", 288)), float(d.get("hfov_deg", 75.0)))


def scene_from_dict(d: dict) -> Scene:
    sensors = []
    for s in d["sensors"]:
        if "extrinsic_4x4_row_major" in s:
            pose = RigidTransform.from_matrix(s["extrinsic_4x4_row_major"])
        else:
            pose = look_at(s["position"], s["look_at"])
        sensors.append(
            SimSensor(
                str(s["sensor_id"]),
                _intrinsics_from(s.get("intrinsics", {})),
                pose,
                int(s.get("phase_offset_us", 0)),
                float(s.get("max_range", 5.0)),
            )
        )
    if len({s.sensor_id for s in sensors}) != len(sensors):
        raise ValueError("sensor ids must be unique")
    bodies = []
    for b in d.get("bodies", []):
        wps = tuple((w[0], w[1], w[2], np.radians(w[3]) if len(w) > 3 else 0.0) for w in b["waypoints"])
        bodies.append(BodyModel(wps, float(b.get("pelvis_height", 0.95))))
    n = d.get("noise", {})
    noise = NoiseModel(
        joint_sigma=float(n.get("joint_sigma", 0.0)),
        axis_sigma=np.radians(float(n.get("axis_sigma_deg", 0.0))),
        depth_sigma_mm=float(n.get("depth_sigma_mm", 0.0)),
        unoccluded_confidence=Confidence.parse(n.get("unoccluded_confidence", "high")),
        occluded_noise_factor=float(n.get("occluded_noise_factor", 3.0)),
        lost_occluded_fraction=float(n.get("lost_occluded_fraction", 0.75)),
        seed=int(d.get("seed", n.get("seed", 0))),
    )
    return Scene(
        sensors=tuple(sensors),
        bodies=tuple(bodies),
        boxes=tuple(Box(tuple(b["min"]), tuple(b["max"])) for b in d.get("boxes", [])),
        floor=bool(d.get("floor", True)),
        noise=noise,
        duration_s=float(d.get("duration_s", 1.0)),
        fps=float(d.get("fps", 30.0)),
        calibration_instants_s=tuple(float(t) for t in d.get("calibration_instants_s", [])),
    )


def scene_to_dict(scene: Scene) -> dict:
    n = scene.noise
    return {
        "seed": n.seed,
        "duration_s": scene.duration_s,
        "fps": scene.fps,
        "floor": scene.floor,
        "calibration_instants_s": list(scene.calibration_instants_s),
        "boxes": [{"min": list(b.min), "max": list(b.max)} for b in scene.boxes],
        "bodies": [
            {
                "pelvis_height": b.pelvis_height,
                "waypoints": [[w[0], w[1], w[2], float(np.degrees(w[3]))] for w in b.waypoints],
            }
            for b in scene.bodies
        ],
        "sensors": [
            {
                "sensor_id": s.sensor_id,
                "intrinsics": s.intrinsics.to_dict(),
                "extrinsic_4x4_row_major": [float(v) for v in s.pose.matrix().ravel()],
                "phase_offset_us": s.phase_offset_us,
                "max_range": s.max_range,
            }
            for s in scene.sensors
        ],
        "noise": {
            "joint_sigma": n.joint_sigma,
            "axis_sigma_deg": float(np.degrees(n.axis_sigma)),
            "depth_sigma_mm": n.depth_sigma_mm,
            "unoccluded_confidence": n.unoccluded_confidence.label,
            "occluded_noise_factor": n.occluded_noise_factor,
            "lost_occluded_fraction": n.lost_occluded_fraction,
        },
    }


def load_scene(path) -> Scene:
    path = Path(path)
    text = path.read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    try:
        return scene_from_dict(d)
    except (KeyError, TypeError, IndexError) as exc:
        raise ValueError(f"{path}: invalid scene ({exc!r})") from exc


# -- canned scenes ----------------------------------------------------------


def calibration_scene(
    rng: np.random.Generator | None = None,
    seed: int = 0,
    joint_sigma: float = 0.02,
    axis_sigma_deg: float = 2.0,
    depth_sigma_mm: float = 2.0,
) -> Scene:
    """One person next to a standing desk and a cardboard box, 2.5-3 m from two sensors.

    With an ``rng`` the layout (sensor placement, person, props) is jittered.
    """
    j = (lambda lo, hi: rng.uniform(lo, hi)) if rng is not None else (lambda lo, hi: (lo + hi) / 2)
    cx, cy = 0.0, 0.0
    person = BodyModel.standing(cx + j(-0.1, 0.1), cy + j(-0.1, 0.1), np.radians(j(-20, 20)))
    desk = Box((cx - 1.1 + j(-0.05, 0.05), cy + 0.35, 0.0), (cx - 0.35, cy + 1.0, 1.05 + j(0, 0.1)))
    box = Box((cx + 0.45, cy + 0.3 + j(-0.05, 0.05), 0.0), (cx + 1.0 + j(0, 0.1), cy + 0.8, 0.55 + j(0, 0.1)))
    sensors = []
    for sid, base_angle in (("A", -35.0), ("B", 40.0)):
        ang = np.radians(base_angle + j(-8, 8))
        dist = j(2.75, 3.25)
        eye = np.array([cx + dist * np.sin(ang), cy - dist * np.cos(ang), j(1.4, 1.8)])
        target = np.array([cx, cy + 0.3, 0.6 + j(-0.1, 0.1)])
        sensors.append(SimSensor(sid, Intrinsics.from_fov(320, 288, 75.0), look_at(eye, target), 0 if sid == "A" else 11_000))
    noise = NoiseModel(joint_sigma, np.radians(axis_sigma_deg), depth_sigma_mm, seed=seed)
    return Scene(tuple(sensors), (person,), (desk, box), True, noise, 0.2, 30.0, (0.0,))
