"""Write evaluation reports: delimited tables plus matplotlib figures."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .sensor import atomic_write  # noqa: E402
from .skeleton import JointId  # noqa: E402

# Fixed metadata keeps PNG bytes reproducible across runs.
_PNG_META = {"Software": None}

STYLE = {
    "figure.figsize": (6.4, 3.6),
    "figure.dpi": 100,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _runs(report: dict) -> dict[str, dict]:
    return {"fused": report["fused"], **report.get("single_sensor", {})}


def metrics_table(report: dict) -> str:
    rows = [["run", "ticks", "matching_accuracy", "coverage", "rms_m"]]
    for name, m in _runs(report).items():
        rms = "" if m["rms_m"] is None else f"{m['rms_m']:.6f}"
        rows.append([name, m["ticks"], f"{m['matching_accuracy']:.6f}", f"{m['coverage']:.6f}", rms])
    return _csv(rows)


def joint_table(report: dict) -> str:
    runs = _runs(report)
    rows = [["joint", *runs]]
    for jid in JointId:
        rows.append([jid.value, *(f"{m['per_joint_rms_m'][jid.value]:.6f}" if jid.value in m["per_joint_rms_m"] else "" for m in runs.values())])
    return _csv(rows)


def timeline_table(timelines: dict[str, list]) -> str:
    names = list(timelines)
    rows = [["timestamp_us", *(f"{n}_covered" for n in names), "expected"]]
    ref = timelines["fused"]
    by_name = {n: {t: c for t, c, _ in tl} for n, tl in timelines.items()}
    for t, _, expected in ref:
        rows.append([t, *(by_name[n].get(t, "") for n in names), expected])
    return _csv(rows)


def _save(fig, path: Path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata=_PNG_META)
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def plot_coverage(timelines: dict[str, list], path: Path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, tl in timelines.items():
            t = [row[0] / 1e6 for row in tl]
            frac = [row[1] / row[2] if row[2] else 0.0 for row in tl]
            ax.step(t, frac, where="mid", label=name, lw=1.8 if name == "fused" else 1.0)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("persons covered (fraction)")
        ax.set_ylim(-0.05, 1.05)
        ax.legend(loc="lower left")
        fig.tight_layout()
        _save(fig, path)


def plot_joint_rms(report: dict, path: Path) -> None:
    runs = _runs(report)
    joints = [j.value for j in JointId]
    width = 0.8 / max(len(runs), 1)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7.2, 3.6))
        for k, (name, m) in enumerate(runs.items()):
            vals = [100.0 * m["per_joint_rms_m"].get(j, float("nan")) for j in joints]
            ax.bar([i + (k - (len(runs) - 1) / 2) * width for i in range(len(joints))], vals, width, label=name)
        ax.set_xticks(range(len(joints)))
        ax.set_xticklabels(joints, rotation=45, ha="right")
        ax.set_ylabel("RMS error (cm)")
        ax.legend()
        fig.tight_layout()
        _save(fig, path)


def write_report(report: dict, timelines: dict[str, list], out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in (
        ("metrics.csv", metrics_table(report)),
        ("joint_rms.csv", joint_table(report)),
        ("coverage_timeline.csv", timeline_table(timelines)),
    ):
        atomic_write(out / name, text)
        written.append(out / name)
    plot_coverage(timelines, out / "coverage_timeline.png")
    plot_joint_rms(report, out / "joint_rms.png")
    written += [out / "coverage_timeline.png", out / "joint_rms.png"]
    return written
