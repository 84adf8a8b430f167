"""Tracking optimal control as a state/costate boundary value problem.

With the control-affine model

    x' = f(x, u) = [v; c * v + G(theta) u]

and running cost 1/2 e'Qe + 1/2 u'Ru (e = x - x_d), stationarity gives
u = -R^-1 G' lam_v, and the state/costate pair z = (x, lam) obeys a closed
12-dimensional ODE with x(t0) = x0 and lam(tf) = Q_f (x(tf) - x_d(tf)).
That system is discretized by trapezoidal collocation on a fixed mesh and
solved by damped Newton with analytic block Jacobians.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import VehicleParams
from .reference import CurveSpec, ReferenceTrajectory
from .sysid import LearnedModel

N_Z = 12


class TPBVPConvergenceError(RuntimeError):
    """Newton failed; carries the best iterate found."""

    def __init__(self, message: str, best: "OCSolution"):
        super().__init__(message)
        self.best = best
        self.residual = best.max_residual


def as_model(model) -> LearnedModel:
    if isinstance(model, VehicleParams):
        return LearnedModel.from_params(model)
    return model


@dataclass(frozen=True)
class CostWeights:
    Q: np.ndarray
    R: np.ndarray
    Q_f: np.ndarray

    def __post_init__(self):
        for name, shape in (("Q", (6, 6)), ("R", (4, 4)), ("Q_f", (6, 6))):
            A = np.array(getattr(self, name), float)
            if A.shape != shape:
                raise ValueError(f"{name} must be {shape}, got {A.shape}")
            if np.abs(A - A.T).max() > 1e-12:
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(A).min() <= 0 and name == "R":
                raise ValueError("R must be positive definite")
            if np.linalg.eigvalsh(A).min() < 0:
                raise ValueError(f"{name} must be positive semidefinite")
            A.setflags(write=False)
            object.__setattr__(self, name, A)

    def validate_spd(self) -> "CostWeights":
        """Raise unless all three matrices are strictly positive definite."""
        for name in ("Q", "R", "Q_f"):
            if np.linalg.eigvalsh(getattr(self, name)).min() <= 0:
                raise ValueError(f"{name} is not positive definite")
        return self

    @classmethod
    def default(cls) -> "CostWeights":
        Q = np.diag([100.0, 100.0, 10.0, 1.0, 1.0, 0.1])
        return cls(Q, 0.1 * np.eye(4), Q.copy())

    @classmethod
    def from_dict(cls, d: dict) -> "CostWeights":
        def mat(v, n):
            a = np.asarray(v, float)
            return np.diag(a) if a.ndim == 1 else a.reshape(n, n)
        base = cls.default()
        Q = mat(d["Q"], 6) if "Q" in d else base.Q
        R = mat(d["R"], 4) if "R" in d else base.R
        Q_f = mat(d["Q_f"], 6) if "Q_f" in d else Q
        return cls(Q, R, Q_f)

    def to_dict(self) -> dict:
        def enc(A):
            return np.diag(A).tolist() if np.count_nonzero(A - np.diag(np.diag(A))) == 0 else A.tolist()
        return {"Q": enc(self.Q), "R": enc(self.R), "Q_f": enc(self.Q_f)}


@dataclass
class OCProblem:
    model: LearnedModel
    weights: CostWeights
    x0: np.ndarray
    reference: object  # CurveSpec, ReferenceTrajectory, or callable t -> (n, 6)
    t0: float = 0.0
    horizon: float = 1.0
    grid: int = 20
    tol: float = 1e-9
    max_iter: int = 40

    def __post_init__(self):
        self.model = as_model(self.model)
        self.x0 = np.asarray(self.x0, float).reshape(6)
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.grid < 2:
            raise ValueError("grid must be >= 2")
        if isinstance(self.reference, CurveSpec):
            self.reference = ReferenceTrajectory(self.reference)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.horizon * np.arange(self.grid + 1) / self.grid

    def reference_nodes(self, times=None) -> np.ndarray:
        """Reference states at ``times`` with the heading shifted by whole
        turns so the initial heading error lies in [-pi, pi]."""
        times = self.times if times is None else np.asarray(times, float)
        ref = self.reference
        xd = np.array(ref.states(times) if hasattr(ref, "states") else ref(times), float)
        th0 = (ref.states([self.t0]) if hasattr(ref, "states") else ref(np.array([self.t0])))[0, 2]
        xd[:, 2] += 2 * math.pi * round((self.x0[2] - th0) / (2 * math.pi))
        return xd


@dataclass
class OCSolution:
    t: np.ndarray
    x: np.ndarray
    lam: np.ndarray
    u: np.ndarray
    xd: np.ndarray
    iterations: int = 0
    max_residual: float = float("nan")
    converged: bool = False
    wall_time: float = 0.0
    merit_history: list = field(default_factory=list)

    @property
    def z(self) -> np.ndarray:
        return np.hstack([self.x, self.lam])


# ---------------------------------------------------------------- pointwise

def _input_maps(model: LearnedModel, theta: np.ndarray):
    """G, dG/dtheta, d2G/dtheta2 at each heading, shape (n, 3, 4)."""
    s = np.sin(theta)[:, None, None]
    c = np.cos(theta)[:, None, None]
    S0, C0 = model.sin_coeffs[None], model.cos_coeffs[None]
    n = len(theta)
    G = np.empty((n, 3, 4))
    G1 = np.zeros((n, 3, 4))
    G[:, :2] = S0 * s + C0 * c
    G[:, 2] = model.w3[1:]
    G1[:, :2] = S0 * c - C0 * s
    G2 = np.zeros((n, 3, 4))
    G2[:, :2] = -G[:, :2]
    return G, G1, G2


def stationarity_control(model, weights: CostWeights, s, lam) -> np.ndarray:
    """u = -R^-1 (df/du)' lam."""
    model = as_model(model)
    s = np.asarray(s, float)
    lam = np.asarray(lam, float)
    G = model.input_map(float(s[2]))
    return -np.linalg.solve(weights.R, G.T @ lam[3:])


def costate_rhs(model, weights: CostWeights, s, lam, x_d, u=None) -> np.ndarray:
    """lam' = -(df/dx)' lam - Q (x - x_d), with df/dx taken at ``u``
    (the stationary control when ``u`` is None)."""
    model = as_model(model)
    s = np.asarray(s, float)
    lam = np.asarray(lam, float)
    if u is None:
        u = stationarity_control(model, weights, s, lam)
    A, _ = model.jacobians(s, u)
    return -A.T @ lam - weights.Q @ (s - np.asarray(x_d, float))


def hamiltonian(model, weights: CostWeights, s, lam, u, x_d) -> float:
    model = as_model(model)
    s = np.asarray(s, float)
    e = s - np.asarray(x_d, float)
    u = np.asarray(u, float)
    return float(0.5 * e @ weights.Q @ e + 0.5 * u @ weights.R @ u + np.asarray(lam) @ model.f(s, u))


def _node_terms(model: LearnedModel, weights: CostWeights, Z: np.ndarray, xd: np.ndarray,
                jacobian: bool = True):
    """Right-hand side F(z) at every node and, optionally, dF/dz (n, 12, 12)."""
    n = len(Z)
    x, lam = Z[:, :6], Z[:, 6:]
    v, lp, lv = x[:, 3:], lam[:, :3], lam[:, 3:]
    Rinv = np.linalg.inv(weights.R)
    c = model.damping
    G, G1, G2 = _input_maps(model, x[:, 2])
    GR = G @ Rinv
    P = GR @ G.transpose(0, 2, 1)
    G1R = G1 @ Rinv
    P1 = G1R @ G.transpose(0, 2, 1)
    P1 = P1 + P1.transpose(0, 2, 1)
    P1lv = np.einsum("nij,nj->ni", P1, lv)
    Plv = np.einsum("nij,nj->ni", P, lv)
    e = x - xd
    Qe = e @ weights.Q.T

    F = np.empty((n, N_Z))
    F[:, 0:3] = v
    F[:, 3:6] = c * v - Plv
    F[:, 6:12] = -Qe
    F[:, 8] += 0.5 * np.einsum("ni,ni->n", lv, P1lv)
    F[:, 9:12] -= lp + c * lv
    if not jacobian:
        return F, None
    P2 = G2 @ Rinv @ G.transpose(0, 2, 1)
    P2 = P2 + P2.transpose(0, 2, 1) + 2 * G1R @ G1.transpose(0, 2, 1)
    DF = np.zeros((n, N_Z, N_Z))
    idx3 = np.arange(3)
    DF[:, idx3, 3 + idx3] = 1.0
    DF[:, 3:6, 2] = -P1lv
    DF[:, 3 + idx3, 3 + idx3] = c
    DF[:, 3:6, 9:12] = -P
    DF[:, 6:12, 0:6] = -weights.Q
    DF[:, 8, 2] += 0.5 * np.einsum("ni,nij,nj->n", lv, P2, lv)
    DF[:, 8, 9:12] = P1lv
    DF[:, 9 + idx3, 6 + idx3] = -1.0
    DF[:, 9 + idx3, 9 + idx3] = -c
    return F, DF


def _controls(model: LearnedModel, weights: CostWeights, Z: np.ndarray) -> np.ndarray:
    G, _, _ = _input_maps(model, Z[:, 2])
    GtL = np.einsum("nij,ni->nj", G, Z[:, 9:12])
    return -np.linalg.solve(weights.R, GtL.T).T


# ---------------------------------------------------------------- collocation

def _residual(prob: OCProblem, Z: np.ndarray, xd: np.ndarray, h: float, jacobian: bool = True):
    N = prob.grid
    F, DF = _node_terms(prob.model, prob.weights, Z, xd, jacobian)
    r = np.empty(N_Z * (N + 1))
    r[:6] = Z[0, :6] - prob.x0
    r[6:6 + N_Z * N] = (Z[1:] - Z[:-1] - 0.5 * h * (F[1:] + F[:-1])).ravel()
    r[-6:] = Z[N, 6:] - prob.weights.Q_f @ (Z[N, :6] - xd[N])
    if not jacobian:
        return r, None
    J = np.zeros((len(r), len(r)))
    J[:6, :6] = np.eye(6)
    I = np.eye(N_Z)
    for k in range(N):
        rows = slice(6 + N_Z * k, 6 + N_Z * (k + 1))
        J[rows, N_Z * k:N_Z * (k + 1)] = -I - 0.5 * h * DF[k]
        J[rows, N_Z * (k + 1):N_Z * (k + 2)] = I - 0.5 * h * DF[k + 1]
    J[-6:, N_Z * N + 6:] = np.eye(6)
    J[-6:, N_Z * N:N_Z * N + 6] = -prob.weights.Q_f
    return r, J


def boundary_residual(sol: OCSolution, x0, weights: CostWeights, xd_f) -> np.ndarray:
    """[x(t0) - x0; lam(tf) - Q_f'(x(tf) - x_d(tf))]."""
    return np.concatenate([sol.x[0] - np.asarray(x0, float),
                           sol.lam[-1] - weights.Q_f.T @ (sol.x[-1] - np.asarray(xd_f, float))])


def pontryagin_residuals(prob: OCProblem, sol: OCSolution) -> dict:
    """Max-norm residuals of the first-order conditions at the mesh nodes."""
    h = prob.horizon / prob.grid
    F, _ = _node_terms(prob.model, prob.weights, sol.z, sol.xd, jacobian=False)
    defect = sol.z[1:] - sol.z[:-1] - 0.5 * h * (F[1:] + F[:-1])
    G, _, _ = _input_maps(prob.model, sol.x[:, 2])
    stat = sol.u @ prob.weights.R.T + np.einsum("nij,ni->nj", G, sol.lam[:, 3:])
    return {
        "dynamics": float(np.abs(defect[:, :6]).max()),
        "costate": float(np.abs(defect[:, 6:]).max()),
        "stationarity": float(np.abs(stat).max()),
        "boundary": float(np.abs(boundary_residual(sol, prob.x0, prob.weights, sol.xd[-1])).max()),
    }


def _initial_guess(prob: OCProblem, xd: np.ndarray, warm: OCSolution | None) -> np.ndarray:
    N = prob.grid
    Z = np.zeros((N + 1, N_Z))
    if warm is not None and len(warm.t) == N + 1:
        t = prob.times
        err = warm.x - warm.xd
        if t[0] < warm.t[-1] - 1e-9:
            # overlapping horizons: shift the previous solution and hold its
            # terminal error and costate over the tail
            for j in range(6):
                Z[:, j] = xd[:, j] + np.interp(t, warm.t, err[:, j])
                Z[:, 6 + j] = np.interp(t, warm.t, warm.lam[:, j])
        else:
            # no overlap: carry the previous error and costate profiles onto
            # the new reference
            Z[:, :6] = xd + err
            Z[:, 6:] = warm.lam
        Z[0, :6] = prob.x0
        return Z
    s = np.linspace(0.0, 1.0, N + 1)[:, None]
    Z[:, :6] = (1 - s) * prob.x0 + s * xd[N]
    return Z


def solve_tpbvp(prob: OCProblem, warm_start: OCSolution | None = None) -> OCSolution:
    """Damped Newton on the trapezoidal collocation system.

    Raises :class:`TPBVPConvergenceError` (carrying the best iterate) when the
    residual max-norm does not reach ``prob.tol`` within ``prob.max_iter``.
    """
    start = time.perf_counter()
    h = prob.horizon / prob.grid
    t = prob.times
    xd = prob.reference_nodes(t)
    Z = _initial_guess(prob, xd, warm_start)
    r, J = _residual(prob, Z, xd, h)
    merit = 0.5 * float(r @ r)
    history = [merit]
    it = 0
    ok = bool(np.abs(r).max() < prob.tol)
    while not ok and it < prob.max_iter:
        it += 1
        try:
            d = np.linalg.solve(J, -r).reshape(Z.shape)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(J, -r, rcond=None)[0].reshape(Z.shape)
        alpha = 1.0
        accepted = False
        while alpha > 1e-6:
            Zt = Z + alpha * d
            rt, _ = _residual(prob, Zt, xd, h, jacobian=False)
            mt = 0.5 * float(rt @ rt)
            if np.isfinite(mt) and mt <= (1 - 1e-4 * alpha) * merit:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        Z = Zt
        r, J = _residual(prob, Z, xd, h)
        merit = 0.5 * float(r @ r)
        history.append(merit)
        ok = bool(np.abs(r).max() < prob.tol)
    sol = OCSolution(t, Z[:, :6].copy(), Z[:, 6:].copy(), _controls(prob.model, prob.weights, Z), xd,
                     iterations=it, max_residual=float(np.abs(r).max()), converged=ok,
                     wall_time=time.perf_counter() - start, merit_history=history)
    if not ok:
        raise TPBVPConvergenceError(
            f"Newton stopped after {it} iterations with residual {sol.max_residual:.3e}", sol)
    return sol


def extract_control_sequence(sol: OCSolution, rate: float = 100.0) -> np.ndarray:
    """Raw controls at ``rate`` over the horizon by linear interpolation of
    the nodal values; shape (round(horizon * rate), 4)."""
    n = int(round((sol.t[-1] - sol.t[0]) * rate))
    ts = sol.t[0] + np.arange(n) / rate
    return np.column_stack([np.interp(ts, sol.t, sol.u[:, j]) for j in range(sol.u.shape[1])])


# ---------------------------------------------------------------- discrete cost and adjoint

def rollout(model, x0, U: np.ndarray, h: float, newton_tol: float = 1e-13) -> np.ndarray:
    """States from the implicit trapezoid rule with nodal controls ``U``."""
    model = as_model(model)
    X = np.empty((len(U), 6))
    X[0] = x0
    for j in range(len(U) - 1):
        fj = model.f(X[j], U[j])
        y = X[j] + h * fj
        for _ in range(50):
            A, _ = model.jacobians(y, U[j + 1])
            g = y - X[j] - 0.5 * h * (fj + model.f(y, U[j + 1]))
            dy = np.linalg.solve(np.eye(6) - 0.5 * h * A, -g)
            y = y + dy
            if np.abs(dy).max() < newton_tol:
                break
        X[j + 1] = y
    return X


def _trap_weights(n: int, h: float) -> np.ndarray:
    c = np.full(n, h)
    c[0] = c[-1] = 0.5 * h
    return c


def discrete_cost(model, weights: CostWeights, x0, U, xd, h) -> float:
    """Trapezoid-quadrature tracking cost plus terminal penalty."""
    X = rollout(model, x0, U, h)
    E = X - xd
    c = _trap_weights(len(U), h)
    run = 0.5 * (np.einsum("ni,ij,nj->n", E, weights.Q, E) + np.einsum("ni,ij,nj->n", U, weights.R, U))
    return float(c @ run + 0.5 * E[-1] @ weights.Q_f @ E[-1])


def discrete_cost_gradient(model, weights: CostWeights, x0, U, xd, h) -> np.ndarray:
    """dJ/dU for :func:`discrete_cost` by the discrete adjoint recursion."""
    model = as_model(model)
    U = np.asarray(U, float)
    X = rollout(model, x0, U, h)
    n = len(U)
    c = _trap_weights(n, h)
    AB = [model.jacobians(X[j], U[j]) for j in range(n)]
    Lx = (X - xd) @ weights.Q.T
    Lu = U @ weights.R.T
    grad = c[:, None] * Lu
    I = np.eye(6)
    # mu[j] multiplies the defect between nodes j and j+1
    mu = np.zeros((n - 1, 6))
    A, _ = AB[n - 1]
    rhs = -(c[n - 1] * Lx[n - 1] + weights.Q_f @ (X[n - 1] - xd[n - 1]))
    mu[n - 2] = np.linalg.solve((I - 0.5 * h * A).T, rhs)
    for j in range(n - 2, 0, -1):
        A, _ = AB[j]
        rhs = -c[j] * Lx[j] + (I + 0.5 * h * A).T @ mu[j]
        mu[j - 1] = np.linalg.solve((I - 0.5 * h * A).T, rhs)
    for j in range(n):
        _, B = AB[j]
        if j >= 1:
            grad[j] -= 0.5 * h * B.T @ mu[j - 1]
        if j <= n - 2:
            grad[j] -= 0.5 * h * B.T @ mu[j]
    return grad
