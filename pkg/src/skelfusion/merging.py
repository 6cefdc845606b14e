"""Confidence-weighted merging of matched skeletons into fused frames."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .geometry import GeometryError, orthonormalize
from .matching import MatchOutcome
from .skeleton import Confidence, Joint, Skeleton, skeleton_from_dict, skeleton_to_dict

DEFAULT_WEIGHTS: Mapping[Confidence, float] = {
    Confidence.NONE: 0.0,
    Confidence.LOW: 0.25,
    Confidence.MEDIUM: 0.5,
    Confidence.HIGH: 1.0,
}


def check_weights(weights: Mapping[Confidence, float]) -> dict[Confidence, float]:
    w = {c: float(weights[c]) for c in Confidence}
    values = [w[c] for c in sorted(Confidence)]
    if any(v < 0 for v in values) or any(x > y for x, y in zip(values, values[1:])):
        raise ValueError(f"weights must be non-negative and monotone in confidence, got {values}")
    return w


def weight_of(c: Confidence, weights: Mapping[Confidence, float] = DEFAULT_WEIGHTS) -> float:
    return weights[Confidence(c)]


def merge_joint(i: Joint, j: Joint, weights: Mapping[Confidence, float] = DEFAULT_WEIGHTS) -> Joint:
    """Weighted blend of two observations of the same joint.

    The position moves from ``i`` towards ``j`` by ``w_j / (w_i + w_j)``.
    The axes take the same weighted mean, written in its symmetric form so
    that swapping the inputs gives bit-identical axes, and are then
    re-orthonormalized.
    """
    if i.id != j.id:
        raise ValueError(f"cannot merge joint {i.id.value} with {j.id.value}")
    wi, wj = weight_of(i.confidence, weights), weight_of(j.confidence, weights)
    if wi + wj > 0:
        frac = wj / (wi + wj)
        conf = max(i.confidence, j.confidence)
    else:
        frac = 0.5
        conf = Confidence.NONE
    if frac == 0.0:
        return Joint(i.id, i.position, i.axes, conf)
    if frac == 1.0:
        return Joint(j.id, j.position, j.axes, conf)
    pos = i.position + frac * (j.position - i.position)
    blended = (wi * i.axes + wj * j.axes) / (wi + wj) if wi + wj > 0 else 0.5 * (i.axes + j.axes)
    try:
        axes = np.array(orthonormalize(*blended))
    except GeometryError:
        if conf > Confidence.NONE:
            raise
        axes = i.axes
    return Joint(i.id, pos, axes, conf)


def merge_skeletons(
    a: Skeleton, b: Skeleton, body_id: int = 0, weights: Mapping[Confidence, float] = DEFAULT_WEIGHTS
) -> Skeleton:
    """Joints seen by both are merged; joints seen by one side are copied as-is."""
    mb = b.joint_map()
    joints = []
    for ja in a.joints:
        jb = mb.pop(ja.id, None)
        joints.append(ja if jb is None else merge_joint(ja, jb, weights))
    joints.extend(jb for jb in b.joints if jb.id in mb)
    return Skeleton(body_id, tuple(joints))


# -- fused output -----------------------------------------------------------

Source = tuple  # (sensor_id, body_id)


@dataclass(frozen=True)
class FusedPerson:
    skeleton: Skeleton
    sources: tuple[Source, ...]  # every (sensor_id, body_id) that contributed
    distance: float | None = None  # pelvis distance of the final match; None if isolated

    @property
    def merged(self) -> bool:
        return self.distance is not None

    def provenance(self) -> dict:
        d = {
            "kind": "merged" if self.merged else "isolated",
            "sources": [{"sensor_id": s, "body_id": int(b)} for s, b in self.sources],
        }
        if self.merged:
            d["distance"] = float(self.distance)
        return d


@dataclass(frozen=True)
class FusedFrame:
    timestamp_us: int
    persons: tuple[FusedPerson, ...]

    def to_dict(self) -> dict:
        return {
            "timestamp_us": int(self.timestamp_us),
            "persons": [
                dict(skeleton_to_dict(p.skeleton), provenance=p.provenance()) for p in self.persons
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> FusedFrame:
        persons = []
        for p in d["persons"]:
            prov = p["provenance"]
            sources = tuple((str(s["sensor_id"]), int(s["body_id"])) for s in prov["sources"])
            dist = prov.get("distance") if prov["kind"] == "merged" else None
            persons.append(FusedPerson(skeleton_from_dict(p), sources, dist))
        return cls(int(d["timestamp_us"]), tuple(persons))


class PersonIds:
    """Stable fused-person ids keyed by contributing sources, assigned on first sight."""

    def __init__(self):
        self._ids: dict[tuple, int] = {}

    def __call__(self, sources) -> int:
        key = tuple(sorted(sources))
        if key not in self._ids:
            self._ids[key] = len(self._ids)
        return self._ids[key]


def fuse_outcome(
    outcome: MatchOutcome,
    sources_a: Mapping[int, tuple[Source, ...]],
    sources_b: Mapping[int, tuple[Source, ...]],
    ids: PersonIds,
    weights: Mapping[Confidence, float] = DEFAULT_WEIGHTS,
) -> list[FusedPerson]:
    """Merge pairs and pass isolated skeletons through, in output order.

    ``sources_a``/``sources_b`` map each input body_id to its provenance.
    Merged pairs come first by ascending pair distance; isolated skeletons
    follow ordered by their (sensor_id, body_id) provenance.
    """
    merged = []
    for p in outcome.pairs:
        src = tuple(sorted(sources_a[p.a.body_id] + sources_b[p.b.body_id]))
        merged.append(FusedPerson(merge_skeletons(p.a, p.b, ids(src), weights), src, p.distance))
    isolated = []
    for s, table in [(s, sources_a) for s in outcome.isolated_a] + [(s, sources_b) for s in outcome.isolated_b]:
        src = table[s.body_id]
        isolated.append(FusedPerson(Skeleton(ids(src), s.joints), src, None))
    isolated.sort(key=lambda p: p.sources)
    return merged + isolated


def fuse_frame(
    outcome: MatchOutcome,
    t_us: int,
    sensor_a: str = "A",
    sensor_b: str = "B",
    ids: PersonIds | None = None,
    weights: Mapping[Confidence, float] = DEFAULT_WEIGHTS,
) -> FusedFrame:
    """Assemble the fused frame for a two-sensor match outcome."""
    ids = ids if ids is not None else PersonIds()
    sa = {p.a.body_id: ((sensor_a, p.a.body_id),) for p in outcome.pairs}
    sa.update({s.body_id: ((sensor_a, s.body_id),) for s in outcome.isolated_a})
    sb = {p.b.body_id: ((sensor_b, p.b.body_id),) for p in outcome.pairs}
    sb.update({s.body_id: ((sensor_b, s.body_id),) for s in outcome.isolated_b})
    return FusedFrame(int(t_us), tuple(fuse_outcome(outcome, sa, sb, ids, weights)))

