"""Command-line entry point: simulate, cloud, calibrate, fuse, eval."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .calibration import CalibrationError
from .config import ConfigError, load_config
from .evaluation import EvalError, GroundTruth, evaluate, timelines
from .geometry import GeometryError
from .sensor import FormatError, atomic_write, backproject, read_depth, write_ply
from .session import (
    Session,
    SessionError,
    calibrate_session,
    fuse_session,
    fused_to_jsonl,
    load_calibration,
    read_fused,
)
from .skeleton import StreamError

log = logging.getLogger("skelfusion")

EXPECTED_ERRORS = (
    CalibrationError,
    ConfigError,
    EvalError,
    FormatError,
    GeometryError,
    SessionError,
    StreamError,
    ValueError,
    OSError,
)


def _config(args):
    overrides: dict = {}
    if args.d_easy is not None or args.d_max is not None:
        overrides["match"] = {k: v for k, v in (("d_easy", args.d_easy), ("d_max", args.d_max)) if v is not None}
    if args.tick_rate is not None:
        overrides["tick_rate_hz"] = args.tick_rate
    if args.tau_hold_ms is not None:
        overrides["tau_hold_ms"] = args.tau_hold_ms
    if args.icp_runs is not None or args.person_radius is not None:
        overrides["calibration"] = {
            k: v for k, v in (("icp_runs", args.icp_runs), ("person_radius", args.person_radius)) if v is not None
        }
    return load_config(args.config, overrides)


def cmd_simulate(args) -> int:
    from .simulator import generate_session, load_scene

    if not Path(args.scene).is_file():
        raise FileNotFoundError(f"scene file not found: {args.scene}")
    scene = load_scene(args.scene)
    if args.seed is not None:
        scene = dataclasses.replace(scene, noise=dataclasses.replace(scene.noise, seed=args.seed))
    manifest = generate_session(scene, args.out_dir, write_depth_images=not args.no_depth)
    frames = {s["sensor_id"]: s["frames"] for s in manifest["sensors"]}
    depth = sum(len(s["depth"]) for s in manifest["sensors"])
    print(
        f"simulated {len(frames)} sensor(s) {frames}, {depth} depth capture(s), seed {scene.noise.seed} -> {args.out_dir}",
        file=sys.stderr,
    )
    return 0


def cmd_cloud(args) -> int:
    img, meta = read_depth(args.depth_pgm, args.meta)
    cloud = backproject(img)
    write_ply(cloud, args.out_ply)
    print(f"{len(cloud)} points -> {args.out_ply}", file=sys.stderr)
    return 0


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    session = Session.load(args.session_dir)
    result = calibrate_session(session, cfg, args.reference)
    atomic_write(args.out_json, result.to_json())
    for s in result.sensors:
        if s.sensor_id == result.reference_sensor_id:
            print(f"{s.sensor_id}: reference (identity)", file=sys.stderr)
            continue
        t0, t1 = s.initial.translation, s.extrinsic.translation
        print(
            f"{s.sensor_id}: {s.joints_used} joints; initial t={t0.round(4).tolist()} -> "
            f"refined t={t1.round(4).tolist()}; ICP rms {[round(r, 5) for r in s.icp_rms]} "
            f"iterations {list(s.icp_iterations)}",
            file=sys.stderr,
        )
    return 0


def _load_fusion_inputs(session_dir, calibration, sensors=None):
    calib = load_calibration(calibration)
    session = Session.load(session_dir, sensors)
    return session, calib


def cmd_fuse(args) -> int:
    cfg = _config(args)
    sensors = args.sensors.split(",") if args.sensors else None
    session, calib = _load_fusion_inputs(args.session_dir, args.calibration, sensors)
    frames = fuse_session(session, calib, cfg)
    atomic_write(args.out_jsonl, fused_to_jsonl(frames))
    persons = sum(len(f.persons) for f in frames)
    print(f"{len(frames)} fused frames, {persons} person observations -> {args.out_jsonl}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    fused = read_fused(args.fused_jsonl)
    gt = GroundTruth.load(args.ground_truth)
    baselines = None
    if args.session or args.calibration:
        if not (args.session and args.calibration):
            raise ValueError("--session and --calibration must be given together")
        cfg = _config(args)
        calib = load_calibration(args.calibration)
        # baselines run on the fused ticks so every run is scored at the same instants
        ticks = [f.timestamp_us for f in fused]
        baselines = {}
        for sid in calib.sensor_ids():
            session = Session.load(args.session, [sid])
            baselines[sid] = fuse_session(session, calib, cfg, ticks)
    report = evaluate(fused, gt, baselines, args.tolerance_us)
    if args.report_dir:
        from .report import write_report

        written = write_report(report, timelines(fused, gt, baselines, args.tolerance_us), args.report_dir)
        print(f"report: {', '.join(str(p) for p in written)}", file=sys.stderr)
    json.dump(report, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skelfusion", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="pipeline config JSON (flags override file values)")
    p.add_argument("--seed", type=int, help="override the scene RNG seed (simulate)")
    p.add_argument("--verbose", "-v", action="store_true")
    tuning = p.add_argument_group("config overrides")
    tuning.add_argument("--d-easy", type=float)
    tuning.add_argument("--d-max", type=float)
    tuning.add_argument("--tick-rate", type=float, help="fusion ticks per second")
    tuning.add_argument("--tau-hold-ms", type=float)
    tuning.add_argument("--icp-runs", type=int)
    tuning.add_argument("--person-radius", type=float)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic session from a scene file")
    s.add_argument("scene")
    s.add_argument("out_dir")
    s.add_argument("--no-depth", action="store_true", help="skip depth captures")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("cloud", help="back-project a depth PGM to an ASCII PLY")
    s.add_argument("depth_pgm")
    s.add_argument("meta", nargs="?", help="sidecar JSON (default: <depth_pgm>.json)")
    s.add_argument("out_ply")
    s.set_defaults(func=cmd_cloud)

    s = sub.add_parser("calibrate", help="compute sensor extrinsics for a session")
    s.add_argument("session_dir")
    s.add_argument("out_json")
    s.add_argument("--reference", help="reference sensor id (default: first in session)")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("fuse", help="match and merge skeleton streams")
    s.add_argument("session_dir")
    s.add_argument("calibration")
    s.add_argument("out_jsonl")
    s.add_argument("--sensors", help="comma-separated subset of sensors to fuse")
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("eval", help="score fused output against ground truth (JSON to stdout)")
    s.add_argument("fused_jsonl")
    s.add_argument("ground_truth")
    s.add_argument("--session", help="session dir, to score each sensor alone as a baseline")
    s.add_argument("--calibration", help="calibration used for the baselines")
    s.add_argument("--report-dir", help="write CSV tables and PNG figures here")
    s.add_argument("--tolerance-us", type=int, default=1000, help="max fused/ground-truth timestamp gap")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except EXPECTED_ERRORS as exc:
        msg = str(exc)
        if isinstance(exc, OSError) and exc.filename and str(exc.filename) not in msg:
            msg = f"{exc.filename}: {msg}"
        print(f"skelfusion {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
