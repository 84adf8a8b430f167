"""Time-parametrized reference states for the sine and spiral curves."""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

CURVE_DEFAULTS = {
    "sine": {"v0": 0.05, "Y0": 0.3, "omega": 2 * math.pi / 1.5},
    "spiral": {"v0": 0.03, "Y0": 0.0, "omega": 0.5},
}


@dataclass(frozen=True)
class CurveSpec:
    """Parametric curve.

    sine:   X = v0 t,                 Y = Y0 sin(omega v0 t)   (omega in rad/m)
    spiral: X = v0 t - 1 + cos(w t),  Y = v0 t + sin(w t)      (omega in rad/s)
    """

    kind: str = "sine"
    v0: float = 0.05
    Y0: float = 0.3
    omega: float = 2 * math.pi / 1.5

    def __post_init__(self):
        if self.kind not in CURVE_DEFAULTS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if not (self.v0 > 0 and self.Y0 >= 0 and self.omega > 0):
            raise ValueError("curve requires v0 > 0, Y0 >= 0, omega > 0")

    @classmethod
    def default(cls, kind: str) -> "CurveSpec":
        return cls(kind=kind, **CURVE_DEFAULTS[kind])

    @classmethod
    def from_dict(cls, d: dict) -> "CurveSpec":
        kind = d.get("kind", "sine")
        vals = dict(CURVE_DEFAULTS[kind])
        vals.update({k: float(v) for k, v in d.items() if k != "kind"})
        return cls(kind=kind, **vals)

    def to_dict(self) -> dict:
        return asdict(self)


def _wrap(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def _kinematics(c: CurveSpec, t: np.ndarray):
    """Positions and first/second time derivatives of the curve."""
    if c.kind == "sine":
        k = c.omega * c.v0
        X = c.v0 * t
        Y = c.Y0 * np.sin(k * t)
        dX = np.full_like(t, c.v0)
        dY = c.Y0 * k * np.cos(k * t)
        ddX = np.zeros_like(t)
        ddY = -c.Y0 * k * k * np.sin(k * t)
    else:
        w = c.omega
        X = c.v0 * t - 1 + np.cos(w * t)
        Y = c.v0 * t + np.sin(w * t)
        dX = c.v0 - w * np.sin(w * t)
        dY = c.v0 + w * np.cos(w * t)
        ddX = -w * w * np.cos(w * t)
        ddY = -w * w * np.sin(w * t)
    return X, Y, dX, dY, ddX, ddY


def _heading_base(c: CurveSpec, t: np.ndarray) -> np.ndarray:
    """Continuous heading the true heading stays within pi/2 of.

    The sine velocity always has positive X component; the spiral velocity is
    v0 (1, 1) plus a vector of length omega rotating at omega, so its heading
    winds with omega t + pi/2 as long as v0 sqrt(2) < omega.
    """
    if c.kind == "sine":
        return np.zeros_like(t)
    return c.omega * t + np.pi / 2


class ReferenceTrajectory:
    """Evaluates the reference for one curve; owns the heading hold memo.

    Not shared across threads.
    """

    def __init__(self, curve: CurveSpec):
        self.curve = curve
        if curve.kind == "spiral" and math.sqrt(2) * curve.v0 >= curve.omega:
            raise ValueError("spiral heading unwrap requires sqrt(2) v0 < omega")
        self._last_heading = 0.0

    def states(self, t) -> np.ndarray:
        """Reference states at times ``t``, shape (len(t), 6)."""
        t = np.atleast_1d(np.asarray(t, float))
        X, Y, dX, dY, ddX, ddY = _kinematics(self.curve, t)
        sp2 = dX * dX + dY * dY
        moving = sp2 > 1e-24
        base = _heading_base(self.curve, t)
        raw = np.arctan2(dY, dX)
        th = base + _wrap(raw - base)
        thd = np.zeros_like(t)
        thd[moving] = (dX * ddY - dY * ddX)[moving] / sp2[moving]
        # stationary reference: hold previous heading
        for i in np.flatnonzero(~moving):
            th[i] = th[i - 1] if i > 0 else self._last_heading
        if moving.any():
            self._last_heading = float(th[np.flatnonzero(moving)[-1]])
        return np.column_stack([X, Y, th, dX, dY, thd])

    def state(self, t: float) -> np.ndarray:
        return self.states([t])[0]


def reference_state(c: CurveSpec, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be non-negative")
    return ReferenceTrajectory(c).state(t)


def reference_derivative_check(c: CurveSpec, t_end: float = 10.0, dt: float = 1e-4) -> np.ndarray:
    """Max relative error of closed-form velocities vs central differences.

    Returns one value per channel ``(Xdot, Ydot, thetadot)`` over a 10 s grid;
    a channel that is identically zero reports its absolute error.
    """
    ref = ReferenceTrajectory(c)
    t = np.arange(dt, t_end, 0.01)
    mid = ref.states(t)
    fwd = ref.states(t + dt)
    bwd = ref.states(t - dt)
    num = (fwd[:, [0, 1, 2]] - bwd[:, [0, 1, 2]]) / (2 * dt)
    ana = mid[:, [3, 4, 5]]
    scale = np.abs(ana).max(axis=0)
    err = np.abs(num - ana).max(axis=0)
    return np.where(scale > 0, err / np.where(scale > 0, scale, 1.0), err)
