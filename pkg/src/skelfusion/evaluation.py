"""Score fused (or single-sensor) output against simulator ground truth."""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geometry import RigidTransform
from .merging import FusedFrame
from .skeleton import Confidence, JointId


class EvalError(ValueError):
    pass


@dataclass
class GroundTruth:
    reference_sensor_id: str
    poses: dict[str, RigidTransform]  # sensor -> world
    extrinsics: dict[str, RigidTransform]  # sensor -> reference sensor
    correspondence: dict[str, dict[int, int]]  # sensor -> body_id -> person
    times: list[int]
    frames: list[dict[int, dict[JointId, np.ndarray]]]  # per frame: person -> joint -> world position
    persons: list[int] = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> GroundTruth:
        poses = {s["sensor_id"]: RigidTransform.from_matrix(s["pose_4x4_row_major"]) for s in d["sensors"]}
        extr = {s["sensor_id"]: RigidTransform.from_matrix(s["extrinsic_4x4_row_major"]) for s in d["sensors"]}
        corr = {sid: {int(b): int(p) for b, p in m.items()} for sid, m in d["correspondence"].items()}
        times, frames = [], []
        persons: set[int] = set()
        for f in d["frames"]:
            times.append(int(f["timestamp_us"]))
            frame = {}
            for p in f["persons"]:
                frame[int(p["person"])] = {JointId(k): np.array(v, dtype=float) for k, v in p["joints"].items()}
                persons.add(int(p["person"]))
            frames.append(frame)
        if any(b < a for a, b in zip(times, times[1:])):
            raise EvalError("ground-truth frames are not time ordered")
        return cls(str(d["reference_sensor_id"]), poses, extr, corr, times, frames, sorted(persons))

    @classmethod
    def load(cls, path) -> GroundTruth:
        path = Path(path)
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise EvalError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise EvalError(f"{path}: invalid ground truth ({exc})") from exc

    def frame_index(self, t_us: int, tol_us: int) -> int:
        i = int(np.searchsorted(self.times, t_us))
        best = min((j for j in (i - 1, i) if 0 <= j < len(self.times)), key=lambda j: abs(self.times[j] - t_us))
        if abs(self.times[best] - t_us) > tol_us:
            raise EvalError(
                f"no ground-truth frame within {tol_us} us of t={t_us} (nearest {self.times[best]})"
            )
        return best


@dataclass
class Scored:
    """Per-(tick, person) bookkeeping produced by ``score``."""

    ticks: int = 0
    correct_ticks: int = 0
    covered: set = field(default_factory=set)  # (gt frame index, person)
    sq_errors: dict = field(default_factory=lambda: defaultdict(list))  # (frame, person) -> [(joint, sq err)]
    timeline: list = field(default_factory=list)  # (t_us, gt frame index, persons covered, persons expected)


def person_of(sources, gt: GroundTruth) -> int | None:
    votes = Counter()
    for sid, bid in sources:
        p = gt.correspondence.get(sid, {}).get(int(bid))
        if p is not None:
            votes[p] += 1
    if not votes:
        return None
    top = max(votes.values())
    return min(p for p, v in votes.items() if v == top)


def score(frames: Sequence[FusedFrame], gt: GroundTruth, tol_us: int = 1000, reference: str | None = None) -> Scored:
    ref = reference or gt.reference_sensor_id
    if ref not in gt.poses:
        raise EvalError(f"reference sensor {ref!r} not in ground truth")
    to_world = gt.poses[ref]
    out = Scored()
    for f in frames:
        gi = gt.frame_index(f.timestamp_us, tol_us)
        truth = gt.frames[gi]
        out.ticks += 1
        seen = Counter()
        consistent = True
        for p in f.persons:
            owners = {person_of(((s, b),), gt) for s, b in p.sources}
            if len(owners) != 1 or None in owners:
                consistent = False
            who = person_of(p.sources, gt)
            if who is None or who not in truth:
                continue
            seen[who] += 1
            out.covered.add((gi, who))
            for j in p.skeleton.joints:
                if j.confidence == Confidence.NONE or j.id not in truth[who]:
                    continue
                err = to_world.apply(j.position) - truth[who][j.id]
                out.sq_errors[(gi, who)].append((j.id, float(err @ err)))
        if consistent and all(c == 1 for c in seen.values()):
            out.correct_ticks += 1
        out.timeline.append((f.timestamp_us, gi, len(seen), len(truth)))
    return out


def rms_by_joint(s: Scored, restrict: Iterable | None = None) -> tuple[float | None, dict[str, float]]:
    """Overall and per-joint RMS error; ``restrict`` limits it to a set of (frame, person) keys."""
    keys = set(s.sq_errors) if restrict is None else set(s.sq_errors) & set(restrict)
    per_joint: dict[JointId, list[float]] = defaultdict(list)
    for k in sorted(keys):
        for jid, e in s.sq_errors[k]:
            per_joint[jid].append(e)
    all_sq = [e for v in per_joint.values() for e in v]
    overall = float(np.sqrt(np.mean(all_sq))) if all_sq else None
    return overall, {jid.value: float(np.sqrt(np.mean(per_joint[jid]))) for jid in JointId if per_joint.get(jid)}


def metrics(s: Scored, gt: GroundTruth) -> dict:
    expected: Counter = Counter()
    covered: Counter = Counter()
    for gi in sorted({gi for _, gi, _, _ in s.timeline}):
        for p in gt.frames[gi]:
            expected[p] += 1
            covered[p] += (gi, p) in s.covered
    total = sum(expected.values())
    rms, per_joint = rms_by_joint(s)
    return {
        "ticks": s.ticks,
        "matching_accuracy": s.correct_ticks / s.ticks if s.ticks else 0.0,
        "rms_m": rms,
        "per_joint_rms_m": per_joint,
        "coverage": sum(covered.values()) / total if total else 0.0,
        "per_person_coverage": {str(p): covered[p] / expected[p] for p in sorted(expected)},
    }


def evaluate(
    fused: Sequence[FusedFrame],
    gt: GroundTruth,
    baselines: dict[str, Sequence[FusedFrame]] | None = None,
    tol_us: int = 1000,
    reference: str | None = None,
) -> dict:
    """Fused metrics, plus per-sensor baselines and a jointly-visible comparison when given."""
    s_fused = score(fused, gt, tol_us, reference)
    report = {"fused": metrics(s_fused, gt)}
    if baselines:
        scored = {sid: score(frames, gt, tol_us, reference) for sid, frames in baselines.items()}
        report["single_sensor"] = {sid: metrics(sc, gt) for sid, sc in scored.items()}
        joint = set.intersection(*(set(sc.sq_errors) for sc in scored.values())) & set(s_fused.sq_errors)
        report["jointly_visible"] = {"samples": len(joint), "rms_m": {}, "per_joint_rms_m": {}}
        for name, sc in [("fused", s_fused), *scored.items()]:
            rms, per_joint = rms_by_joint(sc, joint)
            report["jointly_visible"]["rms_m"][name] = rms
            report["jointly_visible"]["per_joint_rms_m"][name] = per_joint
    return report


def timelines(fused: Sequence[FusedFrame], gt: GroundTruth, baselines=None, tol_us: int = 1000, reference=None):
    """Per-tick (t_us, persons covered, persons expected) for the fused output and each baseline."""
    runs = {"fused": fused, **(baselines or {})}
    return {name: [(t, c, e) for t, _, c, e in score(frames, gt, tol_us, reference).timeline] for name, frames in runs.items()}
