import json

import numpy as np
import pytest

from skelfusion.geometry import compose, invert
from skelfusion.sensor import Intrinsics, backproject
from skelfusion.simulator import (
    BodyModel,
    Box,
    NoiseModel,
    Scene,
    SimSensor,
    body_capsules,
    body_joints,
    calibration_scene,
    generate_session,
    ground_truth,
    look_at,
    observe_skeletons,
    pixel_rays,
    render_depth,
    scene_from_dict,
    scene_to_dict,
)
from skelfusion.skeleton import Confidence, JointId, read_frames, transform_skeleton

K_SMALL = Intrinsics.from_fov(31, 25, 60.0)


def sensor(sid="A", eye=(0, -3, 1.5), target=(0, 0, 1.0), k=K_SMALL, **kw):
    return SimSensor(sid, k, look_at(eye, target), **kw)


# -- bodies -------------------------------------------------------------------


def test_body_joints_examples():
    at_origin = BodyModel(((0.0, 0.0, 0.0, 0.0),), pelvis_height=0.95)
    s = body_joints(at_origin, 0)
    assert np.array_equal(s.pelvis.position, [0, 0, 0.95])
    assert {j.confidence for j in s.joints} == {Confidence.HIGH}
    turned = body_joints(BodyModel.standing(0, 0, np.pi), 0)
    for side in (JointId.SHOULDER_L, JointId.SHOULDER_R):
        assert np.isclose(turned.joint(side).position[0], -s.joint(side).position[0], atol=1e-12)
    moved = body_joints(BodyModel.standing(1.0, 0.0), 0)
    for a, b in zip(s.joints, moved.joints):
        assert np.allclose(b.position, a.position + [1, 0, 0], atol=1e-15)


def test_body_trajectory_interpolates():
    b = BodyModel(((0.0, 0.0, 0.0, 0.0), (2.0, 2.0, 0.0, np.pi / 2)))
    pelvis, heading = b.pose_at(1_000_000)
    assert np.allclose(pelvis, [1.0, 0.0, 0.95]) and heading == pytest.approx(np.pi / 4)
    assert np.allclose(b.pose_at(5_000_000)[0], [2.0, 0.0, 0.95])
    with pytest.raises(ValueError):
        BodyModel(((1.0, 0, 0, 0), (0.0, 0, 0, 0)))


def test_feet_above_floor():
    for j in body_joints(BodyModel.standing(0, 0), 0).joints:
        assert j.position[2] >= 0


def test_look_at_convention():
    pose = look_at([0, -3, 1], [0, 0, 1])
    assert np.allclose(pose.rotate([0, 0, 1]), [0, 1, 0])  # optical axis
    assert np.allclose(pose.rotate([1, 0, 0]), [1, 0, 0])  # image right
    assert np.allclose(pose.rotate([0, 1, 0]), [0, 0, -1])  # image down


# -- depth rendering ----------------------------------------------------------


def test_render_looking_up_is_empty():
    sc = Scene((sensor(eye=(0, 0, 1.0), target=(0, 0.01, 5.0)),))
    assert not render_depth(sc, "A", 0).data.any()


def test_render_wall_by_hand():
    wall = Box((-5, 2.0, -1), (5, 2.5, 5))
    cam = SimSensor("A", K_SMALL, look_at([0, 0, 1.0], [0, 1, 1.0]))
    img = render_depth(Scene((cam,), boxes=(wall,), floor=False), "A", 0)
    assert img.data[12, 15] == 2000
    noisy = Scene((cam,), boxes=(wall,), floor=False, noise=NoiseModel(depth_sigma_mm=2.0, seed=3))
    assert abs(int(render_depth(noisy, "A", 0).data[12, 15]) - 2000) <= 10


def test_render_floor_plane_residual():
    cam = sensor(eye=(0, 0, 1.5), target=(0, 2, 0), k=Intrinsics.from_fov(64, 48, 70.0))
    sc = Scene((cam,), noise=NoiseModel(depth_sigma_mm=1.0, seed=1))
    img = render_depth(sc, "A", 0)
    world = cam.pose.apply(backproject(img))
    assert len(world) > 1000
    assert np.abs(world[:, 2]).max() < 0.02


def test_render_respects_max_range():
    cam = SimSensor("A", K_SMALL, look_at([0, 0, 1.0], [0, 1, 1.0]), max_range=1.5)
    img = render_depth(Scene((cam,), boxes=(Box((-5, 2.0, -1), (5, 2.5, 5)),), floor=False), "A", 0)
    assert not img.data.any()


def _sdf(points, scene, t_us):
    best = np.full(len(points), np.inf)
    if scene.floor:
        best = np.minimum(best, points[:, 2])
    for box in scene.boxes:
        lo, hi = np.array(box.min), np.array(box.max)
        c, h = (lo + hi) / 2, (hi - lo) / 2
        q = np.abs(points - c) - h
        best = np.minimum(best, np.linalg.norm(np.maximum(q, 0), axis=1) + np.minimum(q.max(axis=1), 0))
    for body in scene.bodies:
        for a, b, r in body_capsules(body, t_us):
            ab = b - a
            denom = ab @ ab
            s = np.zeros(len(points)) if denom == 0 else np.clip((points - a) @ ab / denom, 0, 1)
            best = np.minimum(best, np.linalg.norm(points - (a + s[:, None] * ab), axis=1) - r)
    return best


def test_render_matches_brute_force_sphere_tracing():
    sc = calibration_scene(np.random.default_rng(9))
    sc = Scene(sc.sensors, sc.bodies + (BodyModel.standing(0.6, -0.7, 1.0),), sc.boxes, True, NoiseModel(), 1, 30)
    cam = sc.sensors[0]
    img = render_depth(sc, "A", 0)
    rays, zscale = pixel_rays(cam.intrinsics)
    pick = np.random.default_rng(0).choice(len(rays), 600, replace=False)
    o = cam.pose.translation
    d = cam.pose.rotate(rays[pick])
    t = np.zeros(len(pick))
    for _ in range(3000):
        step = _sdf(o + t[:, None] * d, sc, 0)
        t = np.where(t < 20, t + np.maximum(step, 0), t)
    hit = (_sdf(o + t[:, None] * d, sc, 0) < 1e-6) & (t * zscale[pick] <= cam.max_range)
    expected = np.where(hit, np.rint(t * zscale[pick] * 1000), 0)
    got = img.data.ravel()[pick].astype(float)
    assert np.all(np.abs(got - expected) <= 1)
    assert hit.sum() > 300


# -- skeleton observation -----------------------------------------------------


def test_noiseless_observation_round_trips_to_ground_truth():
    sc = calibration_scene(np.random.default_rng(2), joint_sigma=0, axis_sigma_deg=0, depth_sigma_mm=0)
    truth = body_joints(sc.bodies[0], 0)
    for cam in sc.sensors:
        (obs,) = observe_skeletons(sc, cam.sensor_id, 0).skeletons
        world = transform_skeleton(cam.pose, obs)
        for a, b in zip(world.joints, truth.joints):
            assert np.allclose(a.position, b.position, atol=1e-9)
            assert np.allclose(a.axes, b.axes, atol=1e-9)
        assert {j.confidence for j in obs.joints} == {Confidence.HIGH}


def test_body_behind_prop_is_low_confidence():
    cam = sensor(eye=(0, -3, 0.6), target=(0, 0, 0.6))
    low_box = Box((-1, -1.2, 0), (1, -1.0, 0.9))
    sc = Scene((cam,), (BodyModel.standing(0, 0),), (low_box,))
    (obs,) = observe_skeletons(sc, "A", 0).skeletons
    conf = {j.id: j.confidence for j in obs.joints}
    assert conf[JointId.FOOT_L] == Confidence.LOW
    assert conf[JointId.HEAD] == Confidence.HIGH


def test_body_behind_other_body_is_occluded():
    cam = sensor(eye=(0, -4, 1.2), target=(0, 0, 1.0), k=Intrinsics.from_fov(64, 48, 70.0))
    front, back = BodyModel.standing(0, -1.5), BodyModel.standing(0, 0.0)
    sc = Scene((cam,), (front, back))
    frame = observe_skeletons(sc, "A", 0)
    ids = [s.body_id for s in frame.skeletons]
    assert ids[0] == 101
    if len(ids) == 2:
        assert Confidence.LOW in {j.confidence for j in frame.skeletons[1].joints}


def test_tall_wall_hides_body_entirely():
    sc = Scene((sensor(),), (BodyModel.standing(0, 0),), (Box((-2, -1.5, 0), (2, -1.3, 3)),))
    assert observe_skeletons(sc, "A", 0).skeletons == ()


def test_out_of_frustum_body_absent():
    sc = Scene((sensor(),), (BodyModel.standing(0, 0), BodyModel.standing(30, 0)))
    assert [s.body_id for s in observe_skeletons(sc, "A", 0).skeletons] == [101]


def test_confidence_independent_of_seed():
    base = calibration_scene(np.random.default_rng(5))
    confs = []
    for seed in (0, 1, 2):
        sc = Scene(base.sensors, base.bodies, base.boxes, True, NoiseModel(0.05, 0.1, 0, seed=seed))
        confs.append([[j.confidence for j in s.joints] for s in observe_skeletons(sc, "B", 0).skeletons])
    assert confs[0] == confs[1] == confs[2]


# -- sessions -----------------------------------------------------------------


def two_sensor_scene(duration=1.0):
    return Scene(
        (sensor("A", eye=(-1, -3, 1.5)), sensor("B", eye=(1.5, -2.5, 1.6), phase_offset_us=7000)),
        (BodyModel.standing(0, 0),),
        (Box((0.5, 0.3, 0), (1.0, 0.8, 0.6)),),
        True,
        NoiseModel(0.01, 0.02, 1.0, seed=5),
        duration,
        30.0,
        (0.0,),
    )


def test_generate_session_inventory_and_timing(tmp_path):
    sc = two_sensor_scene()
    manifest = generate_session(sc, tmp_path)
    names = sorted(p.relative_to(tmp_path).as_posix() for p in tmp_path.rglob("*") if p.is_file())
    assert names == [
        "A.skeletons.jsonl", "B.skeletons.jsonl",
        "depth/A_0.json", "depth/A_0.pgm", "depth/B_7000.json", "depth/B_7000.pgm",
        "ground_truth.json", "session.json",
    ]
    a = read_frames(tmp_path / "A.skeletons.jsonl")
    b = read_frames(tmp_path / "B.skeletons.jsonl")
    assert len(a) == len(b) == 30
    assert [f.timestamp_us for f in b] == [f.timestamp_us + 7000 for f in a]
    assert a[1].timestamp_us == 33333
    assert manifest["sensors"][1]["frames"] == 30


def test_ground_truth_contents():
    sc = two_sensor_scene()
    gt = ground_truth(sc)
    truth = compose(invert(sc.sensors[0].pose), sc.sensors[1].pose)
    assert gt["sensors"][1]["extrinsic_4x4_row_major"] == [float(v) for v in truth.matrix().ravel()]
    assert gt["sensors"][1]["pose_4x4_row_major"] == [float(v) for v in sc.sensors[1].pose.matrix().ravel()]
    assert gt["sensors"][0]["extrinsic_4x4_row_major"] == [float(v) for v in np.eye(4).ravel()]
    assert gt["correspondence"] == {"A": {"101": 0}, "B": {"201": 0}}
    assert len(gt["frames"]) == 30


def test_ground_truth_contains_scene_extrinsic_verbatim():
    t_star = [0.0, -1.0, 0.0, 0.25, 0.0, 0.0, -1.0, 1.5, 1.0, 0.0, 0.0, -3.0, 0.0, 0.0, 0.0, 1.0]
    d = {
        "sensors": [
            {"sensor_id": "A", "position": [0, -3, 1.5], "look_at": [0, 0, 1]},
            {"sensor_id": "B", "extrinsic_4x4_row_major": t_star},
        ]
    }
    gt = ground_truth(scene_from_dict(d))
    assert gt["sensors"][1]["pose_4x4_row_major"] == t_star


def test_generate_session_deterministic(tmp_path):
    sc = two_sensor_scene(0.3)
    generate_session(sc, tmp_path / "one")
    generate_session(sc, tmp_path / "two")
    for p in (tmp_path / "one").rglob("*"):
        if p.is_file():
            assert p.read_bytes() == (tmp_path / "two" / p.relative_to(tmp_path / "one")).read_bytes()


def test_generate_session_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        generate_session(two_sensor_scene(0.1), blocker / "out")


def test_scene_dict_round_trip():
    sc = two_sensor_scene()
    d = scene_to_dict(sc)
    back = scene_from_dict(json.loads(json.dumps(d)))
    assert scene_to_dict(back) == d
    # extrinsic given verbatim survives the round trip
    assert np.array_equal(back.sensors[1].pose.matrix(), sc.sensors[1].pose.matrix())


def test_scene_from_dict_defaults_and_errors():
    sc = scene_from_dict({"sensors": [{"sensor_id": "A", "position": [0, -3, 1.5], "look_at": [0, 0, 1]}]})
    k = sc.sensors[0].intrinsics
    assert (k.width, k.height) == (320, 288)
    assert k.fx == pytest.approx(160 / np.tan(np.radians(37.5)))
    assert sc.sensors[0].max_range == 5.0
    with pytest.raises(ValueError):
        scene_from_dict({"sensors": [{"sensor_id": "A", "position": [0, 0, 1], "look_at": [0, 1, 1]}] * 2})
