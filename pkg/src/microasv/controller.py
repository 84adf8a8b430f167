"""Receding-horizon tracking controller and its online model source.

The controller re-solves the tracking problem every ``solve_period`` seconds
and plays the resulting control sequence at the tick rate, projecting each
command onto non-negative thrusts. In data-driven mode an
:class:`OnlineIdentifier` refits the model on a trailing window and publishes
it through a :class:`ModelStore`; the controller picks the latest model up at
its next solve, so a swap never alters the sequence already in flight.
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

import numpy as np

from .allocation import project_thrusts
from .ocp import (CostWeights, OCProblem, OCSolution, TPBVPConvergenceError, as_model,
                  extract_control_sequence, pontryagin_residuals, solve_tpbvp)
from .reference import CurveSpec, ReferenceTrajectory
from .simulator import ControllerFault
from .sysid import IdentificationError, LearnedModel, fit_trailing, window_candidates

log = logging.getLogger(__name__)

_EPS_T = 1e-9


class ModelStore:
    """Single-writer / single-reader holder with whole-model replacement."""

    def __init__(self, model: LearnedModel):
        self._lock = threading.Lock()
        self._model = model
        self.version = 0

    def get(self) -> LearnedModel:
        with self._lock:
            return self._model

    def publish(self, model: LearnedModel) -> None:
        with self._lock:
            self._model = model
            self.version += 1


@dataclass
class IdentificationSettings:
    """Online fitting: every ``refresh`` seconds, per equation, the longest
    trailing window from ``window``, ``window / 2``, ... ``min_window`` that
    passes the residual gate."""

    window: float = 30.0
    min_window: float = 4.0
    refresh: float = 1.0
    tests_per_second: float = 2.0
    min_tests: int = 20
    p: int = 7
    q: int = 7
    rank_tol: float = 1e-10
    max_residual: float | None = 0.02

    def __post_init__(self):
        if not (self.window > 0 and self.refresh > 0 and 0 < self.min_window <= self.window):
            raise ValueError("need window >= min_window > 0 and refresh > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "IdentificationSettings":
        return cls(**d)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class OnlineIdentifier:
    """Buffers (t, x, u) samples and refits every ``refresh`` seconds.

    A fit at time t uses samples before t, whose applied control is already
    known. Fits that update no equation leave the store untouched.
    """

    def __init__(self, store: ModelStore, settings: IdentificationSettings | None = None):
        self.store = store
        self.settings = settings or IdentificationSettings()
        self._t: list[float] = []
        self._x: list[np.ndarray] = []
        self._u: list[np.ndarray] = []
        self.next_fit = self.settings.refresh
        self.history: list[dict] = []

    def record(self, t: float, x, u) -> None:
        self._t.append(float(t))
        self._x.append(np.asarray(x, float).copy())
        self._u.append(np.asarray(u, float).copy())

    def maybe_fit(self, t: float) -> LearnedModel | None:
        s = self.settings
        if t < self.next_fit - _EPS_T:
            return None
        while self.next_fit <= t + _EPS_T:
            self.next_fit += s.refresh
        ts = np.array(self._t)
        if len(ts) < 2 or t - ts[0] < s.min_window - _EPS_T:
            return None
        entry = {"t": float(t)}
        try:
            model, chosen = fit_trailing(
                ts, np.array(self._x), np.array(self._u), t, window_candidates(s.window, s.min_window),
                s.tests_per_second, s.min_tests, s.p, s.q, previous=self.store.get(),
                rank_tol=s.rank_tol, max_residual=s.max_residual)
        except (IdentificationError, ValueError, np.linalg.LinAlgError) as exc:
            entry["error"] = str(exc)
            self.history.append(entry)
            log.warning("identification at t=%.2f failed: %s", t, exc)
            return None
        entry["windows"] = {str(k): v for k, v in chosen.items()}
        entry["failed_equations"] = sorted(model.failed)
        published = len(model.failed) < 3
        if published:
            self.store.publish(model)
        entry["published"] = published
        entry["coefficients"] = model.to_dict()
        self.history.append(entry)
        # keep only what future windows can use
        keep = ts > t - s.window - 1.0
        if not keep.all():
            first = int(np.argmax(keep))
            del self._t[:first], self._x[:first], self._u[:first]
        return model if published else None


class TrackingController:
    """Callable ``controller(t, x) -> thrusts`` for :func:`run_scenario`.

    Every ``solve_period`` seconds it reads the current model, solves the
    tracking problem from the measured state (warm-started from the previous
    solution) and queues the projected 100 Hz sequence. A failed solve keeps
    playing the previous plan, holding its last command once exhausted;
    more than ``max_failures`` consecutive failures raise
    :class:`ControllerFault`.
    """

    def __init__(self, store: ModelStore, curve: CurveSpec, weights: CostWeights | None = None,
                 rate: float = 100.0, horizon: float = 1.0, grid: int = 20,
                 solve_period: float = 1.0, guess: float = 0.2,
                 identifier: OnlineIdentifier | None = None, warm_start: bool = True,
                 max_failures: int = 3, check_residuals: bool = True):
        self.store = store
        self.reference = ReferenceTrajectory(curve)
        self.weights = weights or CostWeights.default()
        self.rate = rate
        self.horizon = horizon
        self.grid = grid
        self.solve_every = int(round(solve_period * rate))
        self.guess = guess
        self.identifier = identifier
        self.warm_start = warm_start
        self.max_failures = max_failures
        self.check_residuals = check_residuals

        self._tick = 0
        self._plan: np.ndarray | None = None
        self._plan_start = 0
        self._plan_model: LearnedModel | None = None
        self._last_sol: OCSolution | None = None
        self._failures = 0
        self.faulted = False
        self.diagnostics: list[dict] = []
        self.saturated_ticks = 0

    def _solve(self, t: float, x: np.ndarray) -> None:
        model = self.store.get()
        prob = OCProblem(model, self.weights, x, self.reference, t0=t,
                         horizon=self.horizon, grid=self.grid)
        warm = self._last_sol if self.warm_start else None
        entry = {"t": float(t), "model_version": self.store.version, "warm": warm is not None}
        try:
            sol = solve_tpbvp(prob, warm)
        except TPBVPConvergenceError as exc:
            self._failures += 1
            self._last_sol = None
            entry.update(converged=False, iterations=exc.best.iterations,
                         max_residual=exc.residual, wall_time=exc.best.wall_time)
            self.diagnostics.append(entry)
            log.warning("TPBVP failed at t=%.2f: %s", t, exc)
            if self._failures > self.max_failures:
                self.faulted = True
                raise ControllerFault(f"{self._failures} consecutive TPBVP failures") from exc
            if self._plan is None:
                # nothing to fall back on yet
                self._plan = np.zeros((1, 4))
                self._plan_start = self._tick
                self._plan_model = model
            return
        self._failures = 0
        self._last_sol = sol
        self._plan = extract_control_sequence(sol, self.rate)
        self._plan_start = self._tick
        self._plan_model = model
        entry.update(converged=True, iterations=sol.iterations, max_residual=sol.max_residual,
                     wall_time=sol.wall_time)
        if self.check_residuals:
            entry["residuals"] = pontryagin_residuals(prob, sol)
        self.diagnostics.append(entry)

    def __call__(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self.faulted:
            return np.zeros(4)
        if self._tick % self.solve_every == 0:
            if self.identifier is not None:
                self.identifier.maybe_fit(t)
            self._solve(t, x)
        k = min(self._tick - self._plan_start, len(self._plan) - 1)
        F, saturated = project_thrusts(self._plan_model, float(x[2]), self._plan[k], self.guess)
        self.saturated_ticks += int(saturated)
        if self.identifier is not None:
            self.identifier.record(t, x, F)
        self._tick += 1
        return F

    def summary(self) -> dict:
        conv = [d for d in self.diagnostics if d["converged"]]
        iters = [d["iterations"] for d in conv]
        res = {}
        for key in ("dynamics", "costate", "stationarity", "boundary"):
            vals = [d["residuals"][key] for d in conv if "residuals" in d]
            res[key] = max(vals) if vals else None
        return {
            "solves": len(self.diagnostics),
            "failures": len(self.diagnostics) - len(conv),
            "median_iterations": float(np.median(iters)) if iters else None,
            "max_wall_time_s": max((d["wall_time"] for d in self.diagnostics), default=None),
            "max_pontryagin_residual": res,
            "saturated_ticks": self.saturated_ticks,
            "faulted": self.faulted,
        }


def make_controller(mode: str, nominal, curve: CurveSpec, weights: CostWeights | None = None,
                    ident: IdentificationSettings | None = None, **kwargs) -> TrackingController:
    """Nominal mode keeps ``nominal`` forever; data-driven mode starts from it
    and refits online."""
    store = ModelStore(as_model(nominal))
    if mode == "nominal":
        return TrackingController(store, curve, weights, **kwargs)
    if mode == "data_driven":
        return TrackingController(store, curve, weights, identifier=OnlineIdentifier(store, ident), **kwargs)
    raise ValueError(f"unknown controller mode {mode!r}")
