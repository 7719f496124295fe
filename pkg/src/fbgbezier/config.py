"""Run configuration: JSON file merged over defaults, with CLI overrides."""
from __future__ import annotations

import copy
import json
from pathlib import Path

from .errors import UsageError
from .field_synth import ScenarioGrid, SynthParams
from .sensor_model import SensorGeometry

DEFAULTS = {
    "seed": None,
    "calibration": None,
    "output": "out",
    "frame_mode": "strain",
    "robot_length_mm": 40.0,
    "grid": {
        "amplitudes": [2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0],
        "frequencies": [0.2, 0.4, 0.6, 0.8, 1.0],
        "distances": [100.0, 90.0],
        "frame_rate": 30.0,
        "duration": 2.5,
    },
    "synth": {
        "gain": 2.5e-4,
        "corner_frequency": 0.6,
        "phase_lag": 0.3,
        "distance_exponent": 3.0,
        "noise_std": 2.0,
        "reference_distance": 100.0,
    },
    "split": [0.8, 0.0, 0.2],
    "forest": {"trees": 200, "min_leaf": 5, "mtry": 2, "bootstrap": True, "n_jobs": 1},
    "net": {"hidden": [64, 32, 16], "mu0": 1e-3, "mu_up": 10.0, "mu_down": 10.0,
            "max_epochs": 100, "patience": 6, "val_fraction": 0.15},
    "evaluate": {"n_mc": 10000, "histogram_bins": 41, "shape_samples": 100},
    "learning_curve": {"fractions": [0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0], "kind": "forest"},
    "network": {"host": "127.0.0.1", "port": 5005, "rate_hz": 30.0, "retries": 5,
                "retry_delay_s": 0.5},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


class Config(dict):
    """Nested configuration dictionary with typed accessors."""

    @classmethod
    def load(cls, path=None, **overrides) -> "Config":
        data = copy.deepcopy(DEFAULTS)
        base_dir = Path.cwd()
        if path is not None:
            path = Path(path)
            try:
                user = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(user, dict):
                raise UsageError(f"config {path} must hold a JSON object")
            data = _merge(data, user)
            base_dir = path.parent
        data = _merge(data, {k: v for k, v in overrides.items() if v is not None})
        cfg = cls(data)
        cal = cfg.get("calibration")
        if cal is not None:
            cal_path = Path(cal)
            if not cal_path.is_absolute():
                cal_path = base_dir / cal_path
            if not cal_path.exists():
                raise UsageError(f"calibration file {cal_path} does not exist")
            cfg["calibration"] = str(cal_path)
        return cfg

    @property
    def seed(self) -> int:
        seed = self.get("seed")
        if seed is None:
            raise UsageError("a seed is required (--seed N or \"seed\" in the config)")
        return int(seed)

    def geometry(self) -> SensorGeometry:
        if self.get("calibration"):
            return SensorGeometry.load(self["calibration"])
        return SensorGeometry()

    def grid(self) -> ScenarioGrid:
        return ScenarioGrid(**self["grid"])

    def synth(self) -> SynthParams:
        return SynthParams(**self["synth"])
