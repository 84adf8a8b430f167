"""Fixed-step plant simulation with scenario events and 100 Hz logging."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import PlantRHS, VehicleParams, effective_mass_matrix
from .reference import CurveSpec, ReferenceTrajectory

CSV_COLUMNS = ["t", "X_G", "Y_G", "theta", "Xdot", "Ydot", "thetadot",
               "F1", "F2", "F3", "F4", "X_d", "Y_d", "theta_d", "e"]

_EPS_T = 1e-9


class IntegrationBlowup(RuntimeError):
    def __init__(self, t: float, last_state: np.ndarray):
        self.t = t
        self.last_state = np.asarray(last_state)
        super().__init__(f"non-finite state after t = {t:.3f} s")


class ControllerFault(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioEvent:
    kind: str
    time: float
    payload_kg: float = 0.0
    force_XY: tuple[float, float] = (0.0, 0.0)
    couple_Z: float = 0.0
    duration: float = 0.0

    def __post_init__(self):
        if self.kind not in ("payload_set", "disturbance"):
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.time < 0:
            raise ValueError("event time must be >= 0")
        if self.kind == "disturbance" and not self.duration > 0:
            raise ValueError("disturbance duration must be > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioEvent":
        d = dict(d)
        if "force_XY" in d:
            d["force_XY"] = tuple(float(v) for v in d["force_XY"])
        return cls(**d)

    def to_dict(self) -> dict:
        if self.kind == "payload_set":
            return {"kind": self.kind, "time": self.time, "payload_kg": self.payload_kg}
        return {"kind": self.kind, "time": self.time, "force_XY": list(self.force_XY),
                "couple_Z": self.couple_Z, "duration": self.duration}

    def active(self, t: float) -> bool:
        return self.time - _EPS_T <= t < self.time + self.duration - _EPS_T


@dataclass
class RunLog:
    t: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    refs: np.ndarray
    errors: np.ndarray
    failure: str | None = None
    true_params: list = field(default_factory=list)  # (time, VehicleParams) history

    def __len__(self):
        return len(self.t)

    def to_csv(self, path) -> None:
        data = np.column_stack([self.t, self.states, self.controls, self.refs[:, :3], self.errors])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for row in data:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "RunLog":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {rows[0]}")
        data = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, len(CSV_COLUMNS))
        refs = np.full((len(data), 6), np.nan)
        refs[:, :3] = data[:, 11:14]
        return cls(data[:, 0], data[:, 1:7], data[:, 7:11], refs, data[:, 14])

    def window(self, t0: float, t1: float) -> np.ndarray:
        return (self.t >= t0 - _EPS_T) & (self.t <= t1 + _EPS_T)


def tracking_error(states: np.ndarray, refs: np.ndarray) -> np.ndarray:
    return np.hypot(states[:, 0] - refs[:, 0], states[:, 1] - refs[:, 1])


def kinetic_energy(p: VehicleParams, x: np.ndarray) -> float:
    v = np.asarray(x, float)[3:]
    return 0.5 * float(v @ effective_mass_matrix(p) @ v)


def _rk4(rhs: PlantRHS, x, u, dt, extra):
    k1 = rhs(x, u, extra)
    x2 = [x[i] + 0.5 * dt * k1[i] for i in range(6)]
    k2 = rhs(x2, u, extra)
    x3 = [x[i] + 0.5 * dt * k2[i] for i in range(6)]
    k3 = rhs(x3, u, extra)
    x4 = [x[i] + dt * k3[i] for i in range(6)]
    k4 = rhs(x4, u, extra)
    return [x[i] + dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) for i in range(6)]


def rk4_step(p: VehicleParams, s, u, dt: float, extra=(0.0, 0.0, 0.0)) -> np.ndarray:
    """One classical RK4 step of x' = f(x, u) + M_eff^-1 extra, u and extra held."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    out = np.array(_rk4(PlantRHS(p), list(map(float, s)), list(map(float, u)), dt, tuple(extra)))
    if not np.isfinite(out).all():
        raise IntegrationBlowup(0.0, np.asarray(s, float))
    return out


Controller = Callable[[float, np.ndarray], np.ndarray]


def zero_controller(t: float, x: np.ndarray) -> np.ndarray:
    return np.zeros(4)


def run_scenario(p: VehicleParams, curve: CurveSpec | None, events: Sequence[ScenarioEvent],
                 controller: Controller, t_end: float, dt_sim: float = 1e-3, rate: float = 100.0,
                 noise_sigma=0.0, seed: int | None = None, x0=None) -> RunLog:
    """Simulate the plant under ``controller`` with a zero-order hold at ``rate``.

    The controller sees the logged (possibly noisy) state; the plant is
    always integrated from the true state. Payload events swap the plant
    parameters at the first sample at or after their time; disturbances add a
    constant generalized force over every control interval starting inside
    [time, time + duration).
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    ctrl_dt = 1.0 / rate
    n_sub = int(round(ctrl_dt / dt_sim))
    if abs(n_sub * dt_sim - ctrl_dt) > 1e-12:
        raise ValueError("control period must be an integer multiple of dt_sim")
    n_ticks = int(round(t_end * rate))
    times = np.arange(n_ticks) / rate

    ref = ReferenceTrajectory(curve) if curve is not None else None
    refs = ref.states(times) if ref is not None else np.zeros((n_ticks, 6))
    x = list(map(float, refs[0] if x0 is None else x0))

    sigma = np.broadcast_to(np.asarray(noise_sigma, float), (6,))
    rng = np.random.default_rng(seed)
    noisy = bool(np.any(sigma > 0))

    payload_events = sorted((e for e in events if e.kind == "payload_set"), key=lambda e: e.time)
    disturbances = [e for e in events if e.kind == "disturbance"]
    params = p.validate()
    rhs = PlantRHS(params)
    history = [(0.0, params)]

    states = np.empty((n_ticks, 6))
    controls = np.empty((n_ticks, 4))
    failure = None
    n_done = 0
    for k in range(n_ticks):
        tk = times[k]
        while payload_events and payload_events[0].time <= tk + _EPS_T:
            ev = payload_events.pop(0)
            params = params.with_payload(ev.payload_kg)
            rhs = PlantRHS(params)
            history.append((float(tk), params))
        meas = np.array(x)
        if noisy:
            meas = meas + sigma * rng.standard_normal(6)
        try:
            u = np.asarray(controller(float(tk), meas), float)
        except ControllerFault as exc:
            failure = f"controller fault at t={tk:.2f}: {exc}"
            break
        if u.shape != (4,) or not np.isfinite(u).all():
            failure = f"controller returned invalid input at t={tk:.2f}"
            break
        states[k] = meas
        controls[k] = u
        n_done = k + 1
        extra = [0.0, 0.0, 0.0]
        for ev in disturbances:
            if ev.active(tk):
                extra[0] += ev.force_XY[0]
                extra[1] += ev.force_XY[1]
                extra[2] += ev.couple_Z
        uu = u.tolist()
        last = x
        for _ in range(n_sub):
            x = _rk4(rhs, x, uu, dt_sim, extra)
        if not all(math.isfinite(v) for v in x):
            failure = f"integration blowup after t={tk:.2f}"
            x = last
            break

    states, controls = states[:n_done], controls[:n_done]
    refs = refs[:n_done]
    errors = tracking_error(states, refs) if ref is not None else np.hypot(states[:, 0], states[:, 1])
    return RunLog(times[:n_done], states, controls, refs, errors, failure, history)
