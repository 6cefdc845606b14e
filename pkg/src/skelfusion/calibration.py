"""Extrinsic calibration: skeleton-seeded estimate refined by filtered-cloud ICP.

All transforms returned here map the *source* sensor's frame into the
*reference* (world) frame.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import (
    GeometryError,
    RigidTransform,
    align_least_squares,
    average_rotations,
    average_translations,
    compose,
    invert,
)
from .sensor import DepthImage, backproject, filter_radius, voxel_downsample
from .skeleton import Confidence, Skeleton, SkeletonFrame

log = logging.getLogger(__name__)


class CalibrationError(RuntimeError):
    """A calibration stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    convergence_eps: float = 1e-5
    max_correspondence_dist: float = 0.05
    downsample_cell: float = 0.02

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.convergence_eps > 0:
            raise ValueError("convergence_eps must be > 0")
        if self.max_correspondence_dist < 0 or self.downsample_cell < 0:
            raise ValueError("distances must be >= 0 (0 disables)")


@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform
    rms: float
    iterations: int
    converged: bool
    rms_history: tuple[float, ...] = ()


@dataclass(frozen=True)
class CalibrationParams:
    min_confidence: Confidence = Confidence.MEDIUM
    person_radius: float = 2.0
    icp_runs: int = 2
    icp: IcpParams = field(default_factory=IcpParams)

    def __post_init__(self):
        if self.icp_runs < 1:
            raise ValueError("icp_runs must be >= 1")
        if not self.person_radius > 0:
            raise ValueError("person_radius must be > 0")


@dataclass(frozen=True)
class SensorCalibration:
    sensor_id: str
    extrinsic: RigidTransform
    initial: RigidTransform | None = None
    icp_rms: tuple[float, ...] = ()
    icp_iterations: tuple[int, ...] = ()
    joints_used: int = 0


@dataclass(frozen=True)
class CalibrationResult:
    reference_sensor_id: str
    sensors: tuple[SensorCalibration, ...]

    def extrinsic(self, sensor_id: str) -> RigidTransform:
        for s in self.sensors:
            if s.sensor_id == sensor_id:
                return s.extrinsic
        raise KeyError(sensor_id)

    def sensor_ids(self) -> list[str]:
        return [s.sensor_id for s in self.sensors]

    def to_dict(self) -> dict:
        diag = {}
        for s in self.sensors:
            if s.sensor_id == self.reference_sensor_id:
                continue
            diag[s.sensor_id] = {
                "initial_4x4_row_major": _flat(s.initial) if s.initial is not None else None,
                "joints_used": s.joints_used,
                "icp_rms": list(s.icp_rms),
                "icp_iterations": list(s.icp_iterations),
            }
        return {
            "reference_sensor_id": self.reference_sensor_id,
            "sensors": [
                {"sensor_id": s.sensor_id, "extrinsic_4x4_row_major": _flat(s.extrinsic)} for s in self.sensors
            ],
            "diagnostics": diag,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> CalibrationResult:
        ref = str(d["reference_sensor_id"])
        sensors = []
        for entry in d["sensors"]:
            sid = str(entry["sensor_id"])
            extrinsic = RigidTransform.from_matrix(entry["extrinsic_4x4_row_major"])
            diag = d.get("diagnostics", {}).get(sid, {})
            init = diag.get("initial_4x4_row_major")
            sensors.append(
                SensorCalibration(
                    sid,
                    extrinsic,
                    RigidTransform.from_matrix(init) if init else None,
                    tuple(diag.get("icp_rms", ())),
                    tuple(diag.get("icp_iterations", ())),
                    int(diag.get("joints_used", 0)),
                )
            )
        if ref not in [s.sensor_id for s in sensors]:
            raise ValueError(f"reference sensor {ref!r} missing from calibration")
        return cls(ref, tuple(sensors))


def _flat(t: RigidTransform) -> list[float]:
    return [float(v) for v in t.matrix().reshape(-1)]


def joint_transforms(sa: Skeleton, sb: Skeleton, min_conf: Confidence = Confidence.MEDIUM) -> list[RigidTransform]:
    """Per-joint transforms pose_A(j) ∘ pose_B(j)^-1 for joints both sensors report at >= ``min_conf``."""
    jb = sb.joint_map()
    out = []
    for ja in sa.joints:
        other = jb.get(ja.id)
        if other is None or ja.confidence < min_conf or other.confidence < min_conf:
            continue
        out.append(compose(ja.pose(), invert(other.pose())))
    return out


def estimate_from_skeletons(sa: Skeleton, sb: Skeleton, min_conf: Confidence = Confidence.MEDIUM) -> RigidTransform:
    """Average per-joint transforms mapping sensor-B coordinates into sensor A's frame.

    Rotations and translations are averaged separately.
    """
    tjs = joint_transforms(sa, sb, min_conf)
    if len(tjs) < 3:
        raise CalibrationError(
            "skeleton", f"only {len(tjs)} joints at confidence >= {min_conf.label}; need at least 3"
        )
    return RigidTransform(
        average_rotations([t.rotation for t in tjs]), average_translations([t.translation for t in tjs])
    )


def icp(
    source: np.ndarray,
    target: np.ndarray,
    init: RigidTransform | None = None,
    params: IcpParams = IcpParams(),
) -> IcpResult:
    """Point-to-point ICP aligning ``source`` onto ``target``.

    Each pass pairs every transformed source point with its nearest target
    point, drops pairs beyond ``max_correspondence_dist`` (when non-zero) and
    re-solves the full transform by least squares on the surviving pairs.
    Stops once the correspondence RMS improves by less than
    ``convergence_eps``.
    """
    source = np.asarray(source, dtype=float).reshape(-1, 3)
    target = np.asarray(target, dtype=float).reshape(-1, 3)
    if params.downsample_cell > 0:
        source = voxel_downsample(source, params.downsample_cell)
        target = voxel_downsample(target, params.downsample_cell)
    if len(source) == 0 or len(target) == 0:
        raise CalibrationError("icp", "empty point cloud")
    tree = cKDTree(target)
    t = init if init is not None else RigidTransform.identity()
    history: list[float] = []
    converged = False
    iterations = 0

    def correspond(t):
        moved = t.apply(source)
        dist, idx = tree.query(moved)
        keep = np.ones(len(source), dtype=bool)
        if params.max_correspondence_dist > 0:
            keep = dist <= params.max_correspondence_dist
        if not keep.any():
            raise CalibrationError("icp", "all correspondences rejected (diverged)")
        return keep, idx, float(np.sqrt(np.mean(dist[keep] ** 2)))

    keep, idx, rms = correspond(t)
    history.append(rms)
    while iterations < params.max_iterations:
        try:
            t = align_least_squares(source[keep], target[idx[keep]])
        except GeometryError as exc:
            raise CalibrationError("icp", f"degenerate correspondences ({exc})") from exc
        iterations += 1
        keep, idx, new_rms = correspond(t)
        history.append(new_rms)
        improvement = rms - new_rms
        rms = new_rms
        if improvement < params.convergence_eps:
            converged = True
            break
    return IcpResult(t, rms, iterations, converged, tuple(history))


def single_person(frame: SkeletonFrame, stage: str) -> Skeleton:
    if len(frame.skeletons) != 1:
        raise CalibrationError(
            stage,
            f"sensor {frame.sensor_id!r} sees {len(frame.skeletons)} people at t={frame.timestamp_us}; "
            "calibration needs exactly one reference person",
        )
    return frame.skeletons[0]


def calibrate_pair(
    frame_a: SkeletonFrame,
    frame_b: SkeletonFrame,
    depth_a: DepthImage | None,
    depth_b: DepthImage | None,
    params: CalibrationParams = CalibrationParams(),
) -> CalibrationResult:
    """Calibrate sensor B against reference sensor A from one shared capture.

    ``frame_a``/``frame_b`` are the two sensors' skeleton frames resampled to
    the capture instant, each in its own sensor frame.
    """
    sa = single_person(frame_a, "skeleton")
    sb = single_person(frame_b, "skeleton")
    init = estimate_from_skeletons(sa, sb, params.min_confidence)
    used = len(joint_transforms(sa, sb, params.min_confidence))
    if depth_a is None or depth_b is None:
        missing = frame_a.sensor_id if depth_a is None else frame_b.sensor_id
        raise CalibrationError("depth", f"no depth image for sensor {missing!r}")
    target = filter_radius(backproject(depth_a), sa.pelvis.position, params.person_radius)
    source = filter_radius(backproject(depth_b), sb.pelvis.position, params.person_radius)
    if len(target) == 0 or len(source) == 0:
        raise CalibrationError("depth", "no depth points near the reference person")
    t = init
    rms, iters = [], []
    for run in range(params.icp_runs):
        res = icp(source, target, t, params.icp)
        log.info(
            "sensor %s ICP run %d: rms %.4f m after %d iterations (converged=%s)",
            frame_b.sensor_id, run + 1, res.rms, res.iterations, res.converged,
        )
        t = res.transform
        rms.append(res.rms)
        iters.append(res.iterations)
    return CalibrationResult(
        frame_a.sensor_id,
        (
            SensorCalibration(frame_a.sensor_id, RigidTransform.identity()),
            SensorCalibration(frame_b.sensor_id, t, init, tuple(rms), tuple(iters), used),
        ),
    )


def merge_pairwise(results: list[CalibrationResult]) -> CalibrationResult:
    """Combine pairwise results that share one reference sensor."""
    if not results:
        raise ValueError("no calibration results")
    ref = results[0].reference_sensor_id
    sensors = [SensorCalibration(ref, RigidTransform.identity())]
    for r in results:
        if r.reference_sensor_id != ref:
            raise ValueError("pairwise results use different reference sensors")
        sensors.extend(s for s in r.sensors if s.sensor_id != ref)
    return CalibrationResult(ref, tuple(sensors))
