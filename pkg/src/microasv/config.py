"""Scenario configuration files.

A scenario is a YAML mapping; every section is optional and falls back to
the defaults below. ``nominal`` lists overrides applied to the unloaded
vehicle to form the controller's physics model.

    name: sine_payload_shift
    vehicle: {m: 0.25, I_zz: 0.0045, R_eff: 0.08}
    nominal: {}
    curve: {kind: sine}
    modes: [nominal, data_driven]
    weights: {Q: [100, 100, 10, 1, 1, 0.1], R: [0.1, 0.1, 0.1, 0.1]}
    identification: {window: 30.0, min_window: 4.0, refresh: 1.0}
    controller: {horizon: 1.0, grid: 20, solve_period: 1.0, rate: 100.0, guess: 0.2}
    events:
      - {kind: payload_set, time: 30.0, payload_kg: 2.0}
    duration: 120.0
    metrics_window: [35.0, 120.0]
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .controller import IdentificationSettings
from .dynamics import VehicleParams
from .ocp import CostWeights
from .reference import CurveSpec
from .simulator import ScenarioEvent

MODES = ("nominal", "data_driven")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ControllerSettings:
    horizon: float = 1.0
    grid: int = 20
    solve_period: float = 1.0
    rate: float = 100.0
    guess: float = 0.2
    warm_start: bool = True
    max_failures: int = 3

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    nominal_overrides: dict = field(default_factory=dict)
    curve: CurveSpec = field(default_factory=CurveSpec)
    modes: tuple[str, ...] = MODES
    weights: CostWeights = field(default_factory=CostWeights.default)
    identification: IdentificationSettings = field(default_factory=IdentificationSettings)
    controller: ControllerSettings = field(default_factory=ControllerSettings)
    events: list[ScenarioEvent] = field(default_factory=list)
    duration: float = 120.0
    noise_sigma: list[float] | float = 0.0
    seed: int = 0
    metrics_window: tuple[float, float] = (35.0, 120.0)
    dt_sim: float = 1e-3
    sweep_payloads: list[float] | None = None
    workers: int | None = None
    output_dir: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> "ScenarioConfig":
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        if not self.modes or any(m not in MODES for m in self.modes):
            raise ConfigError(f"modes must be a non-empty subset of {MODES}")
        if "data_driven" in self.modes and self.identification.refresh > self.duration:
            raise ConfigError("data_driven mode requires refresh <= duration")
        if self.metrics_window[0] >= self.metrics_window[1]:
            raise ConfigError("metrics_window must be increasing")
        sig = np.asarray(self.noise_sigma, float)
        if sig.shape not in ((), (6,)) or np.any(sig < 0):
            raise ConfigError("noise_sigma must be a non-negative scalar or 6-vector")
        try:
            self.vehicle.validate()
            self.nominal_params().validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def nominal_params(self) -> VehicleParams:
        """Controller model: the unloaded vehicle plus configured overrides."""
        return replace(self.vehicle, payload=0.0, **self.nominal_overrides)

    def disturbance_time(self) -> float | None:
        times = [e.time for e in self.events if e.kind == "disturbance"]
        return min(times) if times else None

    def event_times(self) -> list[float]:
        return sorted(e.time for e in self.events)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = copy.deepcopy(d or {})
        known = {"name", "vehicle", "nominal", "curve", "modes", "weights", "identification",
                 "controller", "events", "duration", "noise_sigma", "seed", "metrics_window",
                 "dt_sim", "sweep", "workers", "output_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            kw = {}
            if "name" in d:
                kw["name"] = str(d["name"])
            if "vehicle" in d:
                kw["vehicle"] = VehicleParams.from_dict(d["vehicle"])
            if "nominal" in d:
                kw["nominal_overrides"] = dict(d["nominal"] or {})
            if "curve" in d:
                kw["curve"] = CurveSpec.from_dict(d["curve"])
            if "modes" in d:
                kw["modes"] = tuple(d["modes"])
            if "weights" in d:
                kw["weights"] = CostWeights.from_dict(d["weights"])
            if "identification" in d:
                kw["identification"] = IdentificationSettings.from_dict(d["identification"])
            if "controller" in d:
                kw["controller"] = ControllerSettings(**d["controller"])
            if "events" in d:
                kw["events"] = [ScenarioEvent.from_dict(e) for e in d["events"] or []]
            for key in ("duration", "dt_sim"):
                if key in d:
                    kw[key] = float(d[key])
            if "noise_sigma" in d:
                kw["noise_sigma"] = d["noise_sigma"]
            if "seed" in d:
                kw["seed"] = int(d["seed"])
            if "metrics_window" in d:
                kw["metrics_window"] = tuple(float(v) for v in d["metrics_window"])
            if "sweep" in d:
                kw["sweep_payloads"] = _payload_list(d["sweep"])
            if "workers" in d:
                kw["workers"] = None if d["workers"] is None else int(d["workers"])
            if "output_dir" in d:
                kw["output_dir"] = d["output_dir"]
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        return cls(**kw)

    def to_dict(self) -> dict:
        nominal = {k: float(v) for k, v in self.nominal_overrides.items()}
        sigma = self.noise_sigma
        d = {
            "name": self.name,
            "vehicle": self.vehicle.to_dict(),
            "nominal": nominal,
            "curve": self.curve.to_dict(),
            "modes": list(self.modes),
            "weights": self.weights.to_dict(),
            "identification": self.identification.to_dict(),
            "controller": self.controller.to_dict(),
            "events": [e.to_dict() for e in self.events],
            "duration": self.duration,
            "noise_sigma": list(sigma) if isinstance(sigma, (list, tuple)) else float(sigma),
            "seed": self.seed,
            "metrics_window": list(self.metrics_window),
            "dt_sim": self.dt_sim,
        }
        if self.sweep_payloads is not None:
            d["sweep"] = {"payloads": list(self.sweep_payloads)}
        if self.workers is not None:
            d["workers"] = self.workers
        return d

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)


def _payload_list(s: dict) -> list[float]:
    if "payloads" in s:
        return [float(v) for v in s["payloads"]]
    start, stop, step = float(s.get("start", 0.0)), float(s["stop"]), float(s["step"])
    n = int(round((stop - start) / step))
    return [round(start + i * step, 10) for i in range(n + 1)]


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("microasv.presets").iterdir()
                  if p.name.endswith(".yaml"))


def load_config(source) -> ScenarioConfig:
    """Load a config from a YAML path or a preset name."""
    path = Path(source)
    if path.suffix not in (".yaml", ".yml") and not path.exists():
        res = resources.files("microasv.presets") / f"{source}.yaml"
        if not res.is_file():
            raise ConfigError(f"no config file or preset named {source!r} (presets: {preset_names()})")
        text = res.read_text()
    else:
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {source}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return ScenarioConfig.from_dict(data or {})
