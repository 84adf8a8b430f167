"""Weak-form online identification of the planar equations of motion.

Each acceleration channel is linear in a fixed library of basis functions.
Multiplying by compactly supported test functions and integrating by parts
moves the time derivative onto the test function, so the estimator only
needs logged velocities, never numerically differentiated data:

    sum_k wt_k phi_m(t_k) Theta(t_k) w  =  - sum_k wt_k dphi_m(t_k) v(t_k)

with trapezoidal weights ``wt_k``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dynamics import VehicleParams, true_basis_coefficients

EQ_COLUMNS = {
    1: ["Xdot"] + [f"F{i}_{f}" for i in range(1, 5) for f in ("sin", "cos")],
    2: ["Ydot"] + [f"F{i}_{f}" for i in range(1, 5) for f in ("sin", "cos")],
    3: ["thetadot", "F1", "F2", "F3", "F4"],
}


class IdentificationError(RuntimeError):
    pass


class WindowTooShortError(IdentificationError):
    pass


class RankDeficientError(IdentificationError):
    def __init__(self, eq_index: int, columns: list[str]):
        self.eq_index = eq_index
        self.columns = columns
        super().__init__(f"equation {eq_index}: library rank deficient in columns {columns}")


class PoorFitError(IdentificationError):
    """The library cannot explain the window, e.g. the plant changed inside it."""

    def __init__(self, eq_index: int, residual: float, limit: float):
        self.eq_index = eq_index
        self.residual = residual
        super().__init__(f"equation {eq_index}: relative weak residual {residual:.3g} exceeds {limit:.3g}")


@dataclass
class LearnedModel:
    """Basis coefficients of the three acceleration equations.

    The same object represents the nominal physics model (exact coefficients
    from :func:`true_basis_coefficients`) and identified models.
    """

    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    timestamp: float | None = None
    window: tuple[float, float] | None = None
    failed: dict = field(default_factory=dict)

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, float).reshape(9)
        self.w2 = np.asarray(self.w2, float).reshape(9)
        self.w3 = np.asarray(self.w3, float).reshape(5)
        if not all(np.isfinite(w).all() for w in (self.w1, self.w2, self.w3)):
            raise IdentificationError("non-finite coefficients")

    @classmethod
    def from_params(cls, p: VehicleParams) -> "LearnedModel":
        return cls(*true_basis_coefficients(p))

    # structured views used by the controller
    @property
    def damping(self) -> np.ndarray:
        return np.array([self.w1[0], self.w2[0], self.w3[0]])

    @property
    def sin_coeffs(self) -> np.ndarray:
        return np.vstack([self.w1[1::2], self.w2[1::2]])

    @property
    def cos_coeffs(self) -> np.ndarray:
        return np.vstack([self.w1[2::2], self.w2[2::2]])

    def input_map(self, theta: float) -> np.ndarray:
        """3x4 map from thrusts to accelerations at heading ``theta``."""
        G = np.empty((3, 4))
        G[:2] = self.sin_coeffs * math.sin(theta) + self.cos_coeffs * math.cos(theta)
        G[2] = self.w3[1:]
        return G

    def accel(self, x, u) -> np.ndarray:
        return model_eval(self, x, u)

    def f(self, x, u) -> np.ndarray:
        x = np.asarray(x, float)
        return np.concatenate([x[3:], model_eval(self, x, u)])

    def jacobians(self, x, u):
        return model_jacobians(self, x, u)

    def coefficients(self) -> np.ndarray:
        return np.concatenate([self.w1, self.w2, self.w3])

    def to_dict(self) -> dict:
        return {
            "w1": self.w1.tolist(),
            "w2": self.w2.tolist(),
            "w3": self.w3.tolist(),
            "timestamp": self.timestamp,
            "window": list(self.window) if self.window is not None else None,
            "failed": {str(k): v for k, v in self.failed.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LearnedModel":
        win = d.get("window")
        return cls(d["w1"], d["w2"], d["w3"], d.get("timestamp"),
                   tuple(win) if win is not None else None,
                   {int(k): v for k, v in d.get("failed", {}).items()})

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_json(cls, path) -> "LearnedModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def relative_coefficient_error(model: LearnedModel, truth: LearnedModel) -> np.ndarray:
    """Per-coefficient |w - w_true| / |w_true| (absolute error where w_true = 0)."""
    w, t = model.coefficients(), truth.coefficients()
    scale = np.where(np.abs(t) > 0, np.abs(t), 1.0)
    return np.abs(w - t) / scale


def model_eval(mdl: LearnedModel, x, u) -> np.ndarray:
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    return mdl.damping * x[3:] + mdl.input_map(x[2]) @ u


def model_jacobians(mdl: LearnedModel, x, u) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form (df/dx 6x6, df/du 6x4) of the state-space model."""
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    th = x[2]
    s, c = math.sin(th), math.cos(th)
    A = np.zeros((6, 6))
    A[:3, 3:] = np.eye(3)
    A[3:5, 2] = (mdl.sin_coeffs * c - mdl.cos_coeffs * s) @ u
    A[3:, 3:] = np.diag(mdl.damping)
    B = np.zeros((6, 4))
    B[3:] = mdl.input_map(th)
    return A, B


# --------------------------------------------------------------------------- test functions


@dataclass(frozen=True)
class TestFunction:
    """phi(t) = C (t - t_a)^p (t_b - t)^q on [t_a, t_b], zero elsewhere."""

    __test__ = False  # keep pytest from collecting this class

    t_a: float
    t_b: float
    p: int = 7
    q: int = 7

    def __post_init__(self):
        if not self.t_b > self.t_a:
            raise ValueError("test function support must have t_b > t_a")
        if self.p < 2 or self.q < 2:
            raise ValueError("p, q >= 2 needed for phi and dphi to vanish at the ends")

    @property
    def peak(self) -> float:
        return self.t_a + self.p / (self.p + self.q) * (self.t_b - self.t_a)

    @property
    def C(self) -> float:
        tp = self.peak
        return 1.0 / ((tp - self.t_a) ** self.p * (self.t_b - tp) ** self.q)

    def _scaled(self, t):
        t = np.asarray(t, float)
        tp = self.peak
        inside = (t > self.t_a) & (t < self.t_b)
        s1 = np.where(inside, (t - self.t_a) / (tp - self.t_a), 0.0)
        s2 = np.where(inside, (self.t_b - t) / (self.t_b - tp), 0.0)
        return s1, s2, tp

    def __call__(self, t):
        s1, s2, _ = self._scaled(t)
        return s1**self.p * s2**self.q

    def derivative(self, t):
        s1, s2, tp = self._scaled(t)
        p, q = self.p, self.q
        return (p / (tp - self.t_a)) * s1 ** (p - 1) * s2**q \
            - (q / (self.t_b - tp)) * s1**p * s2 ** (q - 1)


def build_test_functions(t_a: float, t_b: float, M: int = 60, p: int = 7, q: int = 7,
                         min_window: float = 2.0) -> list[TestFunction]:
    """M bumps with 50% overlap tiling [t_a, t_b], each peak-normalized to 1."""
    if t_b - t_a < min_window:
        raise WindowTooShortError(f"window {t_b - t_a:.3g} s shorter than {min_window} s")
    if M < 1:
        raise ValueError("need at least one test function")
    width = 2 * (t_b - t_a) / (M + 1)
    return [TestFunction(t_a + m * width / 2, t_a + m * width / 2 + width, p, q) for m in range(M)]


def trapezoid_weights(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, float)
    w = np.empty_like(t)
    dt = np.diff(t)
    w[0] = dt[0] / 2
    w[-1] = dt[-1] / 2
    w[1:-1] = (dt[:-1] + dt[1:]) / 2
    return w


def basis_library(states: np.ndarray, controls: np.ndarray, eq_index: int) -> np.ndarray:
    """Library matrix Theta (N x 9 or N x 5) in the fixed column order."""
    X = np.asarray(states, float)
    U = np.asarray(controls, float)
    if eq_index == 3:
        return np.column_stack([X[:, 5], U])
    s, c = np.sin(X[:, 2]), np.cos(X[:, 2])
    cols = [X[:, 2 + eq_index]]
    for i in range(4):
        cols += [U[:, i] * s, U[:, i] * c]
    return np.column_stack(cols)


def _state_factors(states: np.ndarray, eq_index: int) -> np.ndarray:
    """Per-thruster state factors multiplying each control column."""
    X = np.asarray(states, float)
    if eq_index == 3:
        return np.ones((len(X), 1))
    return np.column_stack([np.sin(X[:, 2]), np.cos(X[:, 2])])


def weak_system(t, states, controls, eq_index: int, tests: list[TestFunction], hold: bool = True):
    """Assemble (G, b) with G = Phi W Theta and b = -dPhi W v.

    With ``hold`` the control columns are integrated as zero-order-hold
    signals: u_k is taken constant on [t_k, t_k+1) and multiplies the
    trapezoid of phi * (state factor) over that interval. The plain
    trapezoid rule would treat u as piecewise linear, a half-sample lag.
    """
    t = np.asarray(t, float)
    wt = trapezoid_weights(t)
    phi = np.array([f(t) for f in tests])
    dPhi = np.array([f.derivative(t) for f in tests]) * wt
    Theta = basis_library(states, controls, eq_index)
    v = np.asarray(states, float)[:, 2 + eq_index]
    G = (phi * wt) @ Theta
    if hold:
        U = np.asarray(controls, float)
        S = _state_factors(states, eq_index)
        h = np.diff(t)
        n_f = S.shape[1]
        for k in range(S.shape[1]):
            g = phi * S[:, k]
            seg = 0.5 * h * (g[:, :-1] + g[:, 1:])
            G[:, 1 + k::n_f] = seg @ U[:-1]
    return G, -dPhi @ v


def solve_least_squares(G: np.ndarray, b: np.ndarray, eq_index: int = 0,
                        rank_tol: float = 1e-10) -> np.ndarray:
    """min ||G w - b|| by column-scaled pivoted QR; raises on rank deficiency."""
    names = EQ_COLUMNS.get(eq_index, [str(i) for i in range(G.shape[1])])
    norms = np.linalg.norm(G, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise RankDeficientError(eq_index, [names[i] for i in zero])
    Gs = G / norms
    Q, R, piv = scipy.linalg.qr(Gs, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    bad = np.flatnonzero(diag <= rank_tol * diag[0])
    if bad.size:
        raise RankDeficientError(eq_index, sorted(names[piv[i]] for i in bad))
    z = scipy.linalg.solve_triangular(R, Q.T @ b)
    w = np.empty_like(z)
    w[piv] = z
    return w / norms


def weak_regression(t, states, controls, eq_index: int, tests: list[TestFunction],
                    rank_tol: float = 1e-10, max_residual: float | None = None,
                    hold: bool = True) -> np.ndarray:
    """Coefficients of one equation.

    With ``max_residual`` set, a relative residual ||G w - b|| / ||b`` above
    it raises :class:`PoorFitError`.
    """
    if len(t) < 100:
        raise IdentificationError(f"window has {len(t)} samples, need at least 100")
    if eq_index not in EQ_COLUMNS:
        raise ValueError("eq_index must be 1, 2 or 3")
    G, b = weak_system(t, states, controls, eq_index, tests, hold)
    w = solve_least_squares(G, b, eq_index, rank_tol)
    if max_residual is not None:
        rel = float(np.linalg.norm(G @ w - b) / max(np.linalg.norm(b), 1e-300))
        if rel > max_residual:
            raise PoorFitError(eq_index, rel, max_residual)
    return w


def fit_window(t, states, controls, n_tests: int = 60, p: int = 7, q: int = 7,
               previous: LearnedModel | None = None, rank_tol: float = 1e-10,
               max_residual: float | None = None, hold: bool = True) -> LearnedModel:
    """Fit all three equations on the given samples.

    An equation whose library is rank deficient (or, with ``max_residual``,
    fits poorly) keeps the coefficients of ``previous``; without a previous
    model the error propagates.
    """
    t = np.asarray(t, float)
    tests = build_test_functions(t[0], t[-1], n_tests, p, q)
    ws, failed = [], {}
    for eq in (1, 2, 3):
        try:
            ws.append(weak_regression(t, states, controls, eq, tests, rank_tol, max_residual, hold))
        except (RankDeficientError, PoorFitError) as exc:
            if previous is None:
                raise
            failed[eq] = str(exc)
            ws.append((previous.w1, previous.w2, previous.w3)[eq - 1])
    return LearnedModel(*ws, timestamp=float(t[-1]), window=(float(t[0]), float(t[-1])), failed=failed)


def fit_model(log, window: float = 30.0, t_end: float | None = None, n_tests: int = 60,
              p: int = 7, q: int = 7, previous: LearnedModel | None = None,
              rank_tol: float = 1e-10, max_residual: float | None = None,
              hold: bool = True) -> LearnedModel:
    """Fit on the trailing ``window`` seconds of a run log.

    Uses samples with t_end - window < t <= t_end, so 3000 samples at 100 Hz
    make a 30 s window.
    """
    t = np.asarray(log.t, float)
    t_end = t[-1] if t_end is None else t_end
    dt = float(np.median(np.diff(t)))
    if t_end - t[0] + dt < window - 1e-9:
        raise WindowTooShortError(f"log spans {t_end - t[0] + dt:.3g} s, window needs {window} s")
    sel = (t > t_end - window + 1e-9) & (t <= t_end + 1e-9)
    return fit_window(t[sel], np.asarray(log.states)[sel], np.asarray(log.controls)[sel],
                      n_tests, p, q, previous, rank_tol, max_residual, hold)


def window_candidates(max_window: float, min_window: float) -> list[float]:
    """max_window, max_window / 2, ... down to (and including) min_window."""
    out, w = [], float(max_window)
    while w > min_window + 1e-9:
        out.append(w)
        w /= 2
    out.append(float(min_window))
    return out


def fit_trailing(t, states, controls, t_end: float, windows: list[float],
                 tests_per_second: float = 2.0, min_tests: int = 20, p: int = 7, q: int = 7,
                 previous: LearnedModel | None = None, rank_tol: float = 1e-10,
                 max_residual: float | None = None, hold: bool = True):
    """Per equation, fit the longest trailing window ending before ``t_end``
    that the library explains.

    Windows are tried longest first; a window is skipped when the samples do
    not cover it, or when the fit is rank deficient or (with
    ``max_residual``) leaves too large a residual, which happens when the
    plant changed inside it. An equation with no acceptable window keeps the
    coefficients of ``previous``. Returns ``(model, chosen)`` where
    ``chosen[eq]`` is the window length used, or None.
    """
    t = np.asarray(t, float)
    states = np.asarray(states, float)
    controls = np.asarray(controls, float)
    dt = float(np.median(np.diff(t))) if len(t) > 1 else 0.0
    ws, failed, chosen = [], {}, {}
    for eq in (1, 2, 3):
        w_eq, reason = None, "no window covered by data"
        for W in sorted(windows, reverse=True):
            sel = (t > t_end - W - 1e-9) & (t < t_end - 1e-9)
            if sel.sum() < 2 or t[sel][-1] - t[sel][0] + dt < W - 1e-6:
                continue
            ts = t[sel]
            n_tests = max(min_tests, int(round(tests_per_second * W)))
            try:
                tests = build_test_functions(ts[0], ts[-1], n_tests, p, q)
                w_eq = weak_regression(ts, states[sel], controls[sel], eq, tests, rank_tol,
                                       max_residual, hold)
            except IdentificationError as exc:
                reason = str(exc)
                continue
            chosen[eq] = W
            break
        if w_eq is None:
            if previous is None:
                raise IdentificationError(f"equation {eq}: {reason}")
            failed[eq] = reason
            chosen[eq] = None
            w_eq = (previous.w1, previous.w2, previous.w3)[eq - 1]
        ws.append(w_eq)
    used = [W for W in chosen.values() if W is not None]
    window = (float(t_end - max(used)), float(t_end)) if used else None
    return LearnedModel(*ws, timestamp=float(t_end), window=window, failed=failed), chosen
