import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_skeleton, pelvis_only
from skelfusion.geometry import is_rotation, random_rotation, rot_z
from skelfusion.matching import MatchConfig, match_skeletons
from skelfusion.merging import (
    FusedFrame,
    PersonIds,
    check_weights,
    fuse_frame,
    merge_joint,
    merge_skeletons,
    weight_of,
)
from skelfusion.skeleton import Confidence, Joint, JointId, Skeleton

C = Confidence


def joint(pos, conf, axes=None, jid=JointId.HEAD):
    return Joint(jid, np.asarray(pos, dtype=float), np.eye(3) if axes is None else axes, conf)


def test_weight_table():
    assert weight_of(C.NONE) == 0
    assert weight_of(C.LOW) == 0.25
    assert weight_of(C.MEDIUM) == 0.5
    assert weight_of(C.HIGH) == 1
    with pytest.raises(ValueError):
        check_weights({C.NONE: 0, C.LOW: 0.5, C.MEDIUM: 0.25, C.HIGH: 1})
    with pytest.raises(ValueError):
        check_weights({C.NONE: -1, C.LOW: 0.5, C.MEDIUM: 0.6, C.HIGH: 1})


def test_zero_weight_passthrough():
    axes = rot_z(0.4).T
    i = joint([1, 2, 3], C.MEDIUM, axes)
    j = joint([9, 9, 9], C.NONE, random_rotation(np.random.default_rng(1)))
    m = merge_joint(i, j)
    assert np.array_equal(m.position, [1, 2, 3])
    assert np.array_equal(m.axes, axes)
    assert m.confidence == C.MEDIUM
    assert np.array_equal(merge_joint(j, i).position, [1, 2, 3])


def test_equal_weights_midpoint():
    m = merge_joint(joint([0, 0, 0], C.MEDIUM), joint([1, 0, 0], C.MEDIUM))
    assert np.allclose(m.position, [0.5, 0, 0], atol=0)


def test_hand_evaluated_weighted_blend():
    # 0 + (0.25 / 0.75) * 0.3
    m = merge_joint(joint([0, 0, 0], C.MEDIUM), joint([0.3, 0, 0], C.LOW))
    assert m.position[0] == pytest.approx(0.1, abs=1e-15)
    assert m.confidence == C.MEDIUM


def test_both_zero_weights():
    m = merge_joint(joint([0, 0, 0], C.NONE), joint([2, 0, 0], C.NONE))
    assert np.allclose(m.position, [1, 0, 0])
    assert m.confidence == C.NONE


def test_id_mismatch():
    with pytest.raises(ValueError):
        merge_joint(joint([0, 0, 0], C.LOW), joint([0, 0, 0], C.LOW, jid=JointId.NECK))


def test_axes_blend_then_orthonormalize():
    a, b = np.eye(3), rot_z(np.pi / 2).T
    m = merge_joint(joint([0, 0, 0], C.HIGH, a), joint([0, 0, 0], C.HIGH, b))
    assert np.allclose(m.axes, rot_z(np.pi / 4).T, atol=1e-12)


joint_st = st.tuples(
    st.integers(0, 2**32 - 1), st.sampled_from(list(C)), st.sampled_from(list(C))
)


@given(joint_st)
def test_merge_invariants(args):
    seed, ci, cj = args
    rng = np.random.default_rng(seed)
    i = joint(rng.normal(size=3), ci, random_rotation(rng))
    j = joint(rng.normal(size=3), cj, random_rotation(rng))
    try:
        m1, m2 = merge_joint(i, j), merge_joint(j, i)
    except ValueError:
        # antipodal axes can cancel exactly; only possible for degenerate draws
        return
    assert np.allclose(m1.position, m2.position, atol=1e-12)
    pi, pj, pm = i.position, j.position, m1.position
    assert abs(np.linalg.norm(pm - pi) + np.linalg.norm(pm - pj) - np.linalg.norm(pi - pj)) < 1e-9
    if m1.confidence > C.NONE:
        assert is_rotation(m1.axes, 1e-6)
    assert m1.confidence == (max(ci, cj) if weight_of(ci) + weight_of(cj) > 0 else C.NONE)


def test_merge_skeletons_examples(rng):
    a = make_skeleton(1, [0, 0, 1], conf=C.MEDIUM, rng=rng, axes=rot_z(0.3).T)
    same = merge_skeletons(a, a)
    for x, y in zip(same.joints, a.joints):
        assert np.array_equal(x.position, y.position)
        assert np.allclose(x.axes, y.axes, atol=1e-12)
    shifted = Skeleton(2, tuple(Joint(j.id, j.position + [0.2, 0, 0], j.axes, j.confidence) for j in a.joints))
    merged = merge_skeletons(a, shifted, body_id=9)
    assert merged.body_id == 9
    for x, y in zip(merged.joints, a.joints):
        assert np.allclose(x.position, y.position + [0.1, 0, 0], atol=1e-12)


def test_one_sided_joints_copied(rng):
    a = make_skeleton(1, [0, 0, 1], rng=rng)
    b = Skeleton(2, tuple(j for j in make_skeleton(2, [0, 0, 1], rng=rng).joints if j.id is not JointId.FOOT_L))
    out = merge_skeletons(b, a)
    assert out.joint(JointId.FOOT_L) is a.joint(JointId.FOOT_L)
    assert {j.id for j in out.joints} == set(JointId)


def test_statistical_noise_reduction():
    rng = np.random.default_rng(7)
    sigma, n = 0.02, 10_000
    noise_i = rng.normal(0, sigma, size=(n, 3))
    noise_j = rng.normal(0, sigma, size=(n, 3))
    err = np.array(
        [merge_joint(joint(a, C.HIGH), joint(b, C.HIGH)).position for a, b in zip(noise_i, noise_j)]
    )
    rms = np.sqrt(np.mean(err**2))
    assert abs(rms / (sigma / np.sqrt(2)) - 1) < 0.1


def test_fuse_frame_ordering_and_provenance():
    a = [pelvis_only(1, [0, 0, 1]), pelvis_only(2, [3, 0, 1]), pelvis_only(3, [9, 0, 1])]
    b = [pelvis_only(5, [3.2, 0, 1]), pelvis_only(4, [0.1, 0, 1]), pelvis_only(6, [-9, 0, 1])]
    out = match_skeletons(a, b, MatchConfig())
    fused = fuse_frame(out, 1000, "A", "B")
    kinds = [p.provenance()["kind"] for p in fused.persons]
    assert kinds == ["merged", "merged", "isolated", "isolated"]
    assert [p.sources for p in fused.persons] == [
        (("A", 1), ("B", 4)),
        (("A", 2), ("B", 5)),
        (("A", 3),),
        (("B", 6),),
    ]
    assert fused.persons[0].distance < fused.persons[1].distance
    assert len({p.skeleton.body_id for p in fused.persons}) == 4


def test_fuse_frame_isolated_passthrough():
    s = make_skeleton(3, [1, 2, 1], rng=np.random.default_rng(0))
    fused = fuse_frame(match_skeletons([s], [], MatchConfig()), 5)
    (p,) = fused.persons
    assert p.provenance() == {"kind": "isolated", "sources": [{"sensor_id": "A", "body_id": 3}]}
    for x, y in zip(p.skeleton.joints, s.joints):
        assert x is y


def test_person_ids_stable():
    ids = PersonIds()
    assert ids([("A", 1), ("B", 4)]) == ids([("B", 4), ("A", 1)]) == 0
    assert ids([("A", 2)]) == 1


def test_fused_frame_json_round_trip(rng):
    a = [make_skeleton(1, [0, 0, 1], rng=rng)]
    b = [make_skeleton(4, [0.1, 0, 1], rng=rng), make_skeleton(7, [4, 0, 1], rng=rng)]
    fused = fuse_frame(match_skeletons(a, b, MatchConfig()), 77)
    text = json.dumps(fused.to_dict())
    back = FusedFrame.from_dict(json.loads(text))
    assert json.dumps(back.to_dict()) == text
    assert back.persons[0].provenance()["distance"] == fused.persons[0].distance
