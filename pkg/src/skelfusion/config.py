"""Pipeline configuration: one JSON document, every field optional.

Precedence, lowest to highest: built-in defaults, the ``--config`` file,
command-line flags.  Defaults::

    {
      "icp": {"max_iterations": 50, "convergence_eps": 1e-05,
              "max_correspondence_dist": 0.05, "downsample_cell": 0.02},
      "calibration": {"min_confidence": "medium", "person_radius": 2.0, "icp_runs": 2},
      "match": {"d_easy": 0.3, "d_max": 0.8},
      "tracking_area": {"min_sensor_distance": 0.0, "area_polygon": []},
      "weights": {"none": 0.0, "low": 0.25, "medium": 0.5, "high": 1.0},
      "tick_rate_hz": 30.0,
      "tau_hold_ms": 50.0
    }
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .calibration import CalibrationParams, IcpParams
from .matching import MatchConfig
from .merging import DEFAULT_WEIGHTS, check_weights
from .skeleton import Confidence, TrackingAreaConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    calibration: CalibrationParams = field(default_factory=CalibrationParams)
    match: MatchConfig = field(default_factory=MatchConfig)
    tracking_area: TrackingAreaConfig = field(default_factory=TrackingAreaConfig)
    weights: Mapping[Confidence, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    tick_rate_hz: float = 30.0
    tau_hold_ms: float = 50.0

    def __post_init__(self):
        if not self.tick_rate_hz > 0:
            raise ConfigError("tick_rate_hz must be > 0")
        if self.tau_hold_ms < 0:
            raise ConfigError("tau_hold_ms must be >= 0")
        object.__setattr__(self, "weights", check_weights(self.weights))

    @property
    def icp(self) -> IcpParams:
        return self.calibration.icp

    @property
    def tau_hold_us(self) -> int:
        return int(round(self.tau_hold_ms * 1000))

    def to_dict(self) -> dict:
        cal = self.calibration
        return {
            "icp": dataclasses.asdict(cal.icp),
            "calibration": {
                "min_confidence": cal.min_confidence.label,
                "person_radius": cal.person_radius,
                "icp_runs": cal.icp_runs,
            },
            "match": dataclasses.asdict(self.match),
            "tracking_area": {
                "min_sensor_distance": self.tracking_area.min_sensor_distance,
                "area_polygon": [list(p) for p in self.tracking_area.area_polygon],
            },
            "weights": {c.label: w for c, w in self.weights.items()},
            "tick_rate_hz": self.tick_rate_hz,
            "tau_hold_ms": self.tau_hold_ms,
        }


_SECTIONS = {"icp", "calibration", "match", "tracking_area", "weights", "tick_rate_hz", "tau_hold_ms"}


def config_from_dict(d: Mapping) -> PipelineConfig:
    unknown = set(d) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        icp = IcpParams(**d.get("icp", {}))
        cal = dict(d.get("calibration", {}))
        if "min_confidence" in cal:
            cal["min_confidence"] = Confidence.parse(cal["min_confidence"])
        calibration = CalibrationParams(icp=icp, **cal)
        match = MatchConfig(**d.get("match", {}))
        area = TrackingAreaConfig(**d.get("tracking_area", {}))
        weights = dict(DEFAULT_WEIGHTS)
        weights.update({Confidence.parse(k): float(v) for k, v in d.get("weights", {}).items()})
        return PipelineConfig(
            calibration,
            match,
            area,
            weights,
            float(d.get("tick_rate_hz", 30.0)),
            float(d.get("tau_hold_ms", 50.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None, overrides: Mapping | None = None) -> PipelineConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (section -> values)."""
    d: dict = {}
    if path is not None:
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    for key, value in (overrides or {}).items():
        if isinstance(value, Mapping):
            d[key] = {**d.get(key, {}), **value}
        else:
            d[key] = value
    return config_from_dict(d)
