"""Pair skeletons seen by two sensors in a shared world frame.

Matching uses inter-pelvis distance only and runs four passes:

1. settle easy cases: mutual unique candidates closer than ``d_easy``;
2. repeatedly match anything left with a single remaining candidate;
3. among remaining ambiguities, keep pairings made in the previous frame;
4. greedily accept the closest remaining pairs.

Whatever is left over is reported as isolated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .skeleton import Skeleton

MatchHistory = frozenset  # of (body_id_a, body_id_b)


@dataclass(frozen=True)
class MatchConfig:
    d_easy: float = 0.3
    d_max: float = 0.8

    def __post_init__(self):
        if not (0 < self.d_easy <= self.d_max):
            raise ValueError(f"need 0 < d_easy <= d_max, got {self.d_easy}, {self.d_max}")


@dataclass(frozen=True)
class MatchedPair:
    a: Skeleton
    b: Skeleton
    distance: float


@dataclass(frozen=True)
class MatchOutcome:
    pairs: tuple[MatchedPair, ...]
    isolated_a: tuple[Skeleton, ...]
    isolated_b: tuple[Skeleton, ...]

    @property
    def bottleneck(self) -> float:
        """Largest matched distance (0 when nothing matched)."""
        return max((p.distance for p in self.pairs), default=0.0)


def pelvis_distances(a: Sequence[Skeleton], b: Sequence[Skeleton]) -> np.ndarray:
    pa = np.array([s.pelvis.position for s in a]).reshape(-1, 3)
    pb = np.array([s.pelvis.position for s in b]).reshape(-1, 3)
    return np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=2)


def candidate_pairs(a: Sequence[Skeleton], b: Sequence[Skeleton], d_max: float) -> list[tuple[int, int, float]]:
    """All cross pairs within ``d_max``, sorted by (distance, body_id_a, body_id_b)."""
    d = pelvis_distances(a, b)
    out = [
        (i, j, float(d[i, j]))
        for i in range(len(a))
        for j in range(len(b))
        if d[i, j] <= d_max
    ]
    out.sort(key=lambda c: (c[2], a[c[0]].body_id, b[c[1]].body_id))
    return out


def match_skeletons(
    a: Sequence[Skeleton],
    b: Sequence[Skeleton],
    cfg: MatchConfig = MatchConfig(),
    hist: MatchHistory = frozenset(),
) -> MatchOutcome:
    cands = candidate_pairs(a, b, cfg.d_max)
    # Ties are broken on the unordered id pair so swapping sides gives the same order.
    cands.sort(key=lambda c: (c[2], *sorted((a[c[0]].body_id, b[c[1]].body_id))))
    match_a: dict[int, tuple[int, float]] = {}
    matched_b: set[int] = set()

    def accept(i, j, d):
        match_a[i] = (j, d)
        matched_b.add(j)

    def open_cands():
        return [c for c in cands if c[0] not in match_a and c[1] not in matched_b]

    # step 1: unambiguous close pairs
    count_a: dict[int, int] = {}
    count_b: dict[int, int] = {}
    for i, j, _ in cands:
        count_a[i] = count_a.get(i, 0) + 1
        count_b[j] = count_b.get(j, 0) + 1
    for i, j, d in cands:
        if d <= cfg.d_easy and count_a[i] == 1 and count_b[j] == 1:
            accept(i, j, d)

    # step 2: ambiguities lifted by earlier matches, to a fixpoint
    changed = True
    while changed:
        changed = False
        remaining = open_cands()
        ca: dict[int, int] = {}
        cb: dict[int, int] = {}
        for i, j, _ in remaining:
            ca[i] = ca.get(i, 0) + 1
            cb[j] = cb.get(j, 0) + 1
        for i, j, d in remaining:
            if i in match_a or j in matched_b:
                continue
            if ca[i] == 1 or cb[j] == 1:
                accept(i, j, d)
                changed = True
                break

    # step 3: temporal persistence
    for i, j, d in open_cands():
        if i in match_a or j in matched_b:
            continue
        if (a[i].body_id, b[j].body_id) in hist:
            accept(i, j, d)

    # step 4: greedy on ascending distance
    for i, j, d in cands:
        if i not in match_a and j not in matched_b:
            accept(i, j, d)

    order = sorted(match_a.items(), key=lambda kv: (kv[1][1], *sorted((a[kv[0]].body_id, b[kv[1][0]].body_id))))
    pairs = tuple(MatchedPair(a[i], b[j], d) for i, (j, d) in order)
    iso_a = tuple(s for i, s in enumerate(a) if i not in match_a)
    iso_b = tuple(s for j, s in enumerate(b) if j not in matched_b)
    return MatchOutcome(pairs, iso_a, iso_b)


def fuse_match_history(outcome: MatchOutcome) -> MatchHistory:
    return frozenset((p.a.body_id, p.b.body_id) for p in outcome.pairs)


def transpose_history(hist: MatchHistory) -> MatchHistory:
    return frozenset((bid, aid) for aid, bid in hist)
