import json

import numpy as np
import pytest

from skelfusion.cli import main
from skelfusion.geometry import transform_error
from skelfusion.sensor import DepthImage, Intrinsics, read_ply, write_depth
from skelfusion.simulator import calibration_scene, scene_to_dict


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def scene_file(tmp_path_factory):
    d = scene_to_dict(calibration_scene(seed=5))
    d["duration_s"] = 0.5
    path = tmp_path_factory.mktemp("scene") / "scene.json"
    path.write_text(json.dumps(d))
    return path


@pytest.fixture(scope="module")
def pipeline(scene_file, tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    assert main(["simulate", str(scene_file), str(root / "s")]) == 0
    assert main(["calibrate", str(root / "s"), str(root / "calib.json")]) == 0
    assert main(["fuse", str(root / "s"), str(root / "calib.json"), str(root / "fused.jsonl")]) == 0
    return root


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip() == "0.1.0"


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["fuse"])
    assert exc.value.code == 2


def test_simulate_one_sensor(tmp_path, capsys):
    d = scene_to_dict(calibration_scene())
    d["sensors"] = d["sensors"][:1]
    d["duration_s"] = 0.2
    (tmp_path / "one.json").write_text(json.dumps(d))
    code, _, err = run(capsys, "simulate", tmp_path / "one.json", tmp_path / "out", "--no-depth")
    assert code == 0, err
    manifest = json.loads((tmp_path / "out" / "session.json").read_text())
    assert [s["sensor_id"] for s in manifest["sensors"]] == ["A"]
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == ["A.skeletons.jsonl", "ground_truth.json", "session.json"]


def test_simulate_missing_scene(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", tmp_path / "nope.json", tmp_path / "out")
    assert code == 1
    assert "nope.json" in err


def test_simulate_seed_override(scene_file, tmp_path, capsys):
    run(capsys, "simulate", scene_file, tmp_path / "a", "--no-depth")
    run(capsys, "--seed", 99, "simulate", scene_file, tmp_path / "b", "--no-depth")
    assert (tmp_path / "a" / "A.skeletons.jsonl").read_bytes() != (tmp_path / "b" / "A.skeletons.jsonl").read_bytes()


def _depth(tmp_path, data, name="d.pgm"):
    img = DepthImage(Intrinsics(3, 3, 100.0, 100.0, 1.0, 1.0), np.asarray(data, dtype=np.uint16))
    write_depth(img, tmp_path / name, "A", 0)
    return tmp_path / name


def test_cloud_all_zero(tmp_path, capsys):
    pgm = _depth(tmp_path, np.zeros((3, 3)))
    code, _, err = run(capsys, "cloud", pgm, tmp_path / "c.ply")
    assert code == 0, err
    assert read_ply(tmp_path / "c.ply").shape == (0, 3)
    assert "element vertex 0" in (tmp_path / "c.ply").read_text()


def test_cloud_single_pixel(tmp_path, capsys):
    data = np.zeros((3, 3))
    data[2, 0] = 2000
    pgm = _depth(tmp_path, data)
    code, _, _ = run(capsys, "cloud", pgm, tmp_path / "d.json", tmp_path / "c.ply")
    assert code == 0
    # u=0, v=2 with cx=cy=1, f=100: x=(0-1)*2/100, y=(2-1)*2/100
    assert np.allclose(read_ply(tmp_path / "c.ply"), [[-0.02, 0.02, 2.0]])


def test_cloud_rejects_maxval(tmp_path, capsys):
    pgm = _depth(tmp_path, np.ones((3, 3)))
    raw = pgm.read_bytes().replace(b"65535", b"255\n", 1)
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(raw)
    code, _, err = run(capsys, "cloud", bad, tmp_path / "d.json", tmp_path / "c.ply")
    assert code == 1
    assert "65535" in err and not (tmp_path / "c.ply").exists()


def test_calibrate_recovers_truth(pipeline):
    calib = json.loads((pipeline / "calib.json").read_text())
    truth = json.loads((pipeline / "s" / "ground_truth.json").read_text())
    from skelfusion.geometry import RigidTransform

    est = {s["sensor_id"]: RigidTransform.from_matrix(s["extrinsic_4x4_row_major"]) for s in calib["sensors"]}
    ref = {s["sensor_id"]: RigidTransform.from_matrix(s["extrinsic_4x4_row_major"]) for s in truth["sensors"]}
    rot, trans = transform_error(est["B"], ref["B"])
    assert rot < 2.0 and trans < 0.05
    assert np.array_equal(est["A"].matrix(), np.eye(4))


def test_calibrate_duplicated_stream_gives_identity(pipeline, tmp_path, capsys):
    src = pipeline / "s"
    manifest = json.loads((src / "session.json").read_text())
    a = manifest["sensors"][0]
    dup = {**a, "sensor_id": "A2"}
    (tmp_path / "A.skeletons.jsonl").write_bytes((src / "A.skeletons.jsonl").read_bytes())
    lines = (src / "A.skeletons.jsonl").read_text().replace('"sensor_id":"A"', '"sensor_id":"A2"')
    dup["stream"] = "A2.skeletons.jsonl"
    (tmp_path / "A2.skeletons.jsonl").write_text(lines)
    (tmp_path / "session.json").write_text(json.dumps({"sensors": [a, dup]}))
    (tmp_path / "depth").symlink_to(src / "depth")
    code, _, err = run(capsys, "calibrate", tmp_path, tmp_path / "c.json")
    assert code == 0, err
    m = np.array(json.loads((tmp_path / "c.json").read_text())["sensors"][1]["extrinsic_4x4_row_major"]).reshape(4, 4)
    assert np.allclose(m, np.eye(4), atol=1e-6)


def test_calibrate_missing_depth(pipeline, tmp_path, capsys):
    import shutil

    shutil.copytree(pipeline / "s", tmp_path / "s")
    victim = sorted((tmp_path / "s" / "depth").glob("B_*.pgm"))[0]
    victim.unlink()
    code, _, err = run(capsys, "calibrate", tmp_path / "s", tmp_path / "c.json")
    assert code == 1
    assert victim.name in err


def test_fuse_unknown_sensor(pipeline, tmp_path, capsys):
    code, _, err = run(capsys, "fuse", pipeline / "s", pipeline / "calib.json", tmp_path / "f.jsonl", "--sensors", "A,Q")
    assert code == 1
    assert "Q" in err


def test_fuse_repeatable(pipeline, tmp_path, capsys):
    code, _, _ = run(capsys, "fuse", pipeline / "s", pipeline / "calib.json", tmp_path / "f.jsonl")
    assert code == 0
    assert (tmp_path / "f.jsonl").read_bytes() == (pipeline / "fused.jsonl").read_bytes()


def test_fuse_config_override(pipeline, tmp_path, capsys):
    code, _, _ = run(capsys, "--tick-rate", 10, "fuse", pipeline / "s", pipeline / "calib.json", tmp_path / "f.jsonl")
    assert code == 0
    assert len((tmp_path / "f.jsonl").read_text().splitlines()) == 5
    code, _, err = run(capsys, "--d-easy", 2, "--d-max", 1, "fuse", pipeline / "s", pipeline / "calib.json", tmp_path / "g.jsonl")
    assert code == 1 and "d_easy" in err


def test_eval_stdout_and_report(pipeline, tmp_path, capsys):
    code, out, err = run(
        capsys, "eval", pipeline / "fused.jsonl", pipeline / "s" / "ground_truth.json",
        "--session", pipeline / "s", "--calibration", pipeline / "calib.json", "--report-dir", tmp_path / "r",
    )
    assert code == 0, err
    report = json.loads(out)
    assert report["fused"]["matching_accuracy"] == 1.0
    assert set(report["single_sensor"]) == {"A", "B"}
    assert (tmp_path / "r" / "metrics.csv").exists()


def test_eval_timestamp_mismatch(pipeline, tmp_path, capsys):
    lines = (pipeline / "fused.jsonl").read_text().splitlines()
    obj = json.loads(lines[2])
    obj["timestamp_us"] += 7000
    lines[2] = json.dumps(obj)
    (tmp_path / "f.jsonl").write_text("\n".join(lines) + "\n")
    code, out, err = run(capsys, "eval", tmp_path / "f.jsonl", pipeline / "s" / "ground_truth.json")
    assert code == 1
    assert "no ground-truth frame" in err and out == ""
