"""Recorded sessions on disk and the batch calibrate / fuse drivers.

A session directory holds ``session.json``::

    {"sensors": [{"sensor_id": "A", "stream": "A.skeletons.jsonl",
                  "depth": [{"timestamp_us": 0, "pgm": "depth/A_0.pgm", "meta": "depth/A_0.json"}]}]}

Stream and depth paths are relative to the directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .calibration import CalibrationError, CalibrationResult, SensorCalibration, calibrate_pair, merge_pairwise
from .config import PipelineConfig
from .geometry import RigidTransform
from .matching import MatchConfig, fuse_match_history, match_skeletons
from .merging import FusedFrame, FusedPerson, PersonIds, fuse_outcome
from .sensor import DepthImage, read_depth
from .skeleton import (
    Skeleton,
    SkeletonFrame,
    SkeletonStream,
    dumps_line,
    filter_skeletons,
    iter_jsonl,
    read_frames,
    transform_frame,
)


class SessionError(ValueError):
    pass


@dataclass
class DepthCapture:
    timestamp_us: int
    pgm: Path
    meta: Path

    def load(self) -> DepthImage:
        img, _ = read_depth(self.pgm, self.meta)
        return img


@dataclass
class SensorRecording:
    sensor_id: str
    stream: SkeletonStream
    depth: list[DepthCapture]


class Session:
    def __init__(self, root, recordings: Sequence[SensorRecording]):
        self.root = Path(root)
        self.recordings = list(recordings)
        ids = [r.sensor_id for r in self.recordings]
        if len(set(ids)) != len(ids):
            raise SessionError(f"{self.root}: duplicate sensor ids {ids}")

    @property
    def sensor_ids(self) -> list[str]:
        return [r.sensor_id for r in self.recordings]

    def recording(self, sensor_id: str) -> SensorRecording:
        for r in self.recordings:
            if r.sensor_id == sensor_id:
                return r
        raise SessionError(f"{self.root}: no sensor {sensor_id!r} in session")

    @classmethod
    def load(cls, root, sensors: Iterable[str] | None = None) -> Session:
        root = Path(root)
        manifest_path = root / "session.json"
        try:
            manifest = json.loads(manifest_path.read_text())
        except FileNotFoundError:
            raise SessionError(f"{manifest_path}: no session manifest") from None
        except json.JSONDecodeError as exc:
            raise SessionError(f"{manifest_path}:{exc.lineno}: {exc.msg}") from exc
        wanted = set(sensors) if sensors is not None else None
        recs = []
        for entry in manifest.get("sensors", []):
            sid = str(entry["sensor_id"])
            if wanted is not None and sid not in wanted:
                continue
            frames = read_frames(root / entry["stream"])
            for f in frames:
                if f.sensor_id != sid:
                    raise SessionError(f"{root / entry['stream']}: frame from sensor {f.sensor_id!r}, expected {sid!r}")
            depth = [
                DepthCapture(int(d["timestamp_us"]), root / d["pgm"], root / d["meta"]) for d in entry.get("depth", [])
            ]
            recs.append(SensorRecording(sid, SkeletonStream(frames), depth))
        if wanted is not None:
            missing = wanted - {r.sensor_id for r in recs}
            if missing:
                raise SessionError(f"{manifest_path}: sensors not in session: {sorted(missing)}")
        if not recs:
            raise SessionError(f"{manifest_path}: no sensors")
        return cls(root, recs)


# -- calibration ------------------------------------------------------------


def calibrate_session(session: Session, cfg: PipelineConfig, reference: str | None = None) -> CalibrationResult:
    """Calibrate every sensor against the reference using the first depth capture pair."""
    ref_id = reference or session.sensor_ids[0]
    ref = session.recording(ref_id)
    if not ref.depth:
        raise CalibrationError("depth", f"no depth capture for reference sensor {ref_id!r}")
    cap_a = ref.depth[0]
    tau = cfg.tau_hold_us
    results = []
    for rec in session.recordings:
        if rec.sensor_id == ref_id:
            continue
        if not rec.depth:
            raise CalibrationError("depth", f"no depth capture for sensor {rec.sensor_id!r}")
        cap_b = min(rec.depth, key=lambda c: (abs(c.timestamp_us - cap_a.timestamp_us), c.timestamp_us))
        # skeletons at one shared instant; the reference capture time
        frame_a = ref.stream.sample(cap_a.timestamp_us, tau)
        frame_b = rec.stream.sample(cap_a.timestamp_us, tau)
        res = calibrate_pair(frame_a, frame_b, cap_a.load(), cap_b.load(), cfg.calibration)
        results.append(res)
    if not results:
        return CalibrationResult(ref_id, (SensorCalibration(ref_id, RigidTransform.identity()),))
    return merge_pairwise(results)


def load_calibration(path) -> CalibrationResult:
    path = Path(path)
    try:
        return CalibrationResult.from_dict(json.loads(path.read_text()))
    except json.JSONDecodeError as exc:
        raise SessionError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise SessionError(f"{path}: invalid calibration file ({exc})") from exc


# -- fusion -----------------------------------------------------------------


class Fuser:
    """Stateful per-tick fusion of N world-frame skeleton lists.

    Sensors are folded left in calibration order: the fused result so far is
    matched against the next sensor.  Each fold stage keeps its own match
    history so that temporal persistence works at every stage.
    """

    def __init__(self, sensor_ids: Sequence[str], match: MatchConfig = MatchConfig(), weights=None):
        self.sensor_ids = list(sensor_ids)
        self.match = match
        self.weights = weights
        self.ids = PersonIds()
        self.stage_ids = PersonIds()
        self.histories = [frozenset()] * max(len(self.sensor_ids) - 1, 0)

    def step(self, t_us: int, lists: Sequence[Sequence[Skeleton]]) -> FusedFrame:
        kw = {} if self.weights is None else {"weights": self.weights}
        first = self.sensor_ids[0]
        persons = [FusedPerson(s, ((first, s.body_id),), None) for s in lists[0]]
        for stage, (sid, b_list) in enumerate(zip(self.sensor_ids[1:], lists[1:])):
            if stage == 0:
                a_list = [p.skeleton for p in persons]
                src_a = {p.skeleton.body_id: p.sources for p in persons}
                prior = {}
            else:
                # fused persons get stable stage-local ids derived from their sources
                a_list, src_a, prior = [], {}, {}
                for p in persons:
                    key = self.stage_ids(p.sources)
                    a_list.append(Skeleton(key, p.skeleton.joints))
                    src_a[key] = p.sources
                    prior[p.sources] = p
            src_b = {s.body_id: ((sid, s.body_id),) for s in b_list}
            outcome = match_skeletons(a_list, b_list, self.match, self.histories[stage])
            self.histories[stage] = fuse_match_history(outcome)
            fused = fuse_outcome(outcome, src_a, src_b, self.stage_ids, **kw)
            # a person merged at an earlier stage keeps that provenance when isolated now
            persons = [p if p.merged else prior.get(p.sources, p) for p in fused]
        persons = [FusedPerson(Skeleton(self.ids(p.sources), p.skeleton.joints), p.sources, p.distance) for p in persons]
        persons.sort(key=lambda p: (0, p.distance, p.sources) if p.merged else (1, 0.0, p.sources))
        return FusedFrame(int(t_us), tuple(persons))


def tick_times(session: Session, rate_hz: float) -> list[int]:
    start = min(r.stream.start_us for r in session.recordings)
    end = max(r.stream.end_us for r in session.recordings)
    period = 1e6 / rate_hz
    n = int((end - start) // period) + 1
    return [start + int(round(i * period)) for i in range(n)]


def world_frames(
    session: Session, calib: CalibrationResult, t_us: int, cfg: PipelineConfig
) -> list[SkeletonFrame]:
    """Each sensor's skeletons at ``t_us``: interpolated, in world frame, pre-filtered."""
    out = []
    for sid in ordered_sensors(session, calib):
        pose = calib.extrinsic(sid)
        frame = session.recording(sid).stream.sample(t_us, cfg.tau_hold_us)
        out.append(filter_skeletons(transform_frame(pose, frame), pose, cfg.tracking_area))
    return out


def ordered_sensors(session: Session, calib: CalibrationResult) -> list[str]:
    known = calib.sensor_ids()
    unknown = [s for s in session.sensor_ids if s not in known]
    if unknown:
        raise SessionError(f"sensors {unknown} are not covered by the calibration")
    return [s for s in known if s in session.sensor_ids]


def fuse_session(
    session: Session, calib: CalibrationResult, cfg: PipelineConfig, times: Sequence[int] | None = None
) -> list[FusedFrame]:
    """Fuse every tick; ``times`` overrides the ticks derived from ``cfg.tick_rate_hz``."""
    sensors = ordered_sensors(session, calib)
    fuser = Fuser(sensors, cfg.match, cfg.weights)
    out = []
    for t in tick_times(session, cfg.tick_rate_hz) if times is None else times:
        frames = world_frames(session, calib, t, cfg)
        out.append(fuser.step(t, [f.skeletons for f in frames]))
    return out


def fused_to_jsonl(frames: Iterable[FusedFrame]) -> str:
    return "".join(dumps_line(f.to_dict()) + "\n" for f in frames)


def read_fused(path) -> list[FusedFrame]:
    out = []
    for lineno, obj in iter_jsonl(path):
        try:
            out.append(FusedFrame.from_dict(obj))
        except (KeyError, TypeError, ValueError) as exc:
            raise SessionError(f"{path}:{lineno}: bad fused frame ({exc})") from exc
    return out
