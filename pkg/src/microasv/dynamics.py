"""Planar rigid-body dynamics of the four-thruster micro surface vehicle.

State ordering is fixed throughout the package::

    x = [X_G, Y_G, theta, Xdot_G, Ydot_G, thetadot]
    u = [F1, F2, F3, F4]

Thrusters sit at the hull corners A, B, C, D (body frame, metres)::

    A = (-L/2,  L/2)   B = ( L/2,  L/2)
    D = (-L/2, -L/2)   C = ( L/2, -L/2)

and push along the body-frame unit vectors

    A: (-cos b, -sin b)   B: ( cos b, -sin b)
    C: ( cos b,  sin b)   D: (-cos b,  sin b)

With this layout equal thrust on all four jets cancels in force *and* moment,
so (1, 1, 1, 1) spans the null space of the thrust map and any wrench can be
produced with non-negative thrusts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict, replace

import numpy as np

N_STATE = 6
N_INPUT = 4

# body-frame corner positions in units of L/2, and thrust directions as
# (sign * cos(beta), sign * sin(beta))
_CORNERS = np.array([[-1.0, 1.0], [1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]])
_THRUST_SIGNS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])

_JV = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])  # COM velocity Jacobian
_JW = np.array([[0.0, 0.0, 1.0]])  # angular velocity Jacobian


class InvalidParameterError(ValueError):
    pass


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of the plant (SI units).

    ``mu_water`` is an effective linear-drag viscosity rather than the
    molecular value; at 1.0 Pa s the translational drag coefficient of the
    identified model is about -0.4 1/s, the magnitude seen in practice.
    """

    m: float = 0.25
    I_zz: float = 0.0045
    L: float = 0.025
    beta: float = math.pi / 4
    R_eff: float = 0.08
    rho_water: float = 1000.0
    mu_water: float = 1.0
    payload: float = 0.0

    def validate(self) -> "VehicleParams":
        checks = {
            "m": self.m > 0,
            "I_zz": self.I_zz > 0,
            "L": self.L > 0,
            "R_eff": self.R_eff > 0,
            "rho_water": self.rho_water > 0,
            "mu_water": self.mu_water > 0,
            "payload": self.payload >= 0,
            "beta": 0 < self.beta < math.pi / 2,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise InvalidParameterError(f"invalid vehicle parameters: {', '.join(bad)}")
        return self

    @property
    def total_mass(self) -> float:
        return self.m + self.payload

    def with_payload(self, payload: float) -> "VehicleParams":
        return replace(self, payload=float(payload))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleParams":
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise KeyError(f"unknown vehicle fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _rotation_derivative(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[-s, -c], [c, -s]])


def mass_matrix(p: VehicleParams, q: np.ndarray | None = None) -> np.ndarray:
    """M = Jv^T m Jv + Jw^T I_zz Jw.

    ``q`` is accepted so configuration derivatives can be taken; both
    Jacobians are constant, so it has no effect.
    """
    return _JV.T @ _JV * p.total_mass + _JW.T @ _JW * p.I_zz


def mass_matrix_partials(p: VehicleParams, q: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """dM/dq_k by central differences, shape (3, 3, 3) indexed [k, i, j]."""
    q = np.asarray(q, float)
    out = np.empty((3, 3, 3))
    for k in range(3):
        dq = np.zeros(3)
        dq[k] = eps
        out[k] = (mass_matrix(p, q + dq) - mass_matrix(p, q - dq)) / (2 * eps)
    return out


def coriolis_matrix(p: VehicleParams, qdot: np.ndarray, q: np.ndarray | None = None) -> np.ndarray:
    """C_ij = sum_k (dM_ij/dq_k - 1/2 dM_jk/dq_i) qdot_k."""
    q = np.zeros(3) if q is None else np.asarray(q, float)
    qdot = np.asarray(qdot, float)
    dM = mass_matrix_partials(p, q)
    C = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            C[i, j] = sum((dM[k, i, j] - 0.5 * dM[i, j, k]) * qdot[k] for k in range(3))
    return C


def corner_positions(p: VehicleParams) -> np.ndarray:
    """Body-frame thruster outlet positions A, B, C, D, shape (4, 2)."""
    return _CORNERS * (p.L / 2)


def thrust_directions(p: VehicleParams) -> np.ndarray:
    """Body-frame unit thrust vectors, shape (4, 2)."""
    return _THRUST_SIGNS * np.array([math.cos(p.beta), math.sin(p.beta)])


def point_jacobian(p: VehicleParams, theta: float, corner: int) -> np.ndarray:
    """2x3 Jacobian of a corner's inertial position w.r.t. (X_G, Y_G, theta)."""
    J = np.zeros((2, 3))
    J[:, :2] = np.eye(2)
    J[:, 2] = _rotation_derivative(theta) @ corner_positions(p)[corner]
    return J


def thruster_generalized_forces(p: VehicleParams, theta: float, u: np.ndarray) -> np.ndarray:
    """Q^thr = sum_i J_i^T R f_i, returned as (QX, QY, Qtheta)."""
    u = np.asarray(u, float)
    R = rotation_matrix(theta)
    dirs = thrust_directions(p)
    Q = np.zeros(3)
    for i in range(N_INPUT):
        Q += point_jacobian(p, theta, i).T @ (R @ (dirs[i] * u[i]))
    return Q


def body_thrust_map(p: VehicleParams) -> np.ndarray:
    """3x4 map from thrusts to body-frame (Fx, Fy, tau)."""
    r = corner_positions(p)
    d = thrust_directions(p)
    moments = r[:, 0] * d[:, 1] - r[:, 1] * d[:, 0]
    return np.vstack([d[:, 0], d[:, 1], moments])


def thrust_map(p: VehicleParams, theta: float) -> np.ndarray:
    """3x4 map B(theta) from thrusts to generalized forces."""
    T = np.eye(3)
    T[:2, :2] = rotation_matrix(theta)
    return T @ body_thrust_map(p)


def added_mass_matrix(p: VehicleParams) -> np.ndarray:
    R = p.R_eff
    return p.rho_water * np.diag([4 / 3 * math.pi * R**3, 4 / 3 * math.pi * R**3, math.pi * R**5 / 10])


def drag_matrix(p: VehicleParams) -> np.ndarray:
    R = p.R_eff
    return p.mu_water * np.diag([4 * math.pi * R, 4 * math.pi * R, 0.04 * math.pi * R**2])


def drag_generalized_forces(p: VehicleParams, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, float)
    R = rotation_matrix(s[2])
    body = -drag_matrix(p) @ np.concatenate([R.T @ s[3:5], s[5:6]])
    return _JV.T @ (R @ body[:2]) + _JW.T[:, 0] * body[2]


def effective_mass_matrix(p: VehicleParams) -> np.ndarray:
    return mass_matrix(p) + added_mass_matrix(p)


def eom_accel(p: VehicleParams, s: np.ndarray, u: np.ndarray) -> np.ndarray:
    s = np.asarray(s, float)
    Meff = effective_mass_matrix(p)
    rhs = thruster_generalized_forces(p, s[2], u) + drag_generalized_forces(p, s) \
        - coriolis_matrix(p, s[3:], s[:3]) @ s[3:]
    try:
        return np.linalg.solve(Meff, rhs)
    except np.linalg.LinAlgError as exc:
        raise InvalidParameterError("effective mass matrix is singular") from exc


def state_derivative(p: VehicleParams, s: np.ndarray, u: np.ndarray) -> np.ndarray:
    s = np.asarray(s, float)
    return np.concatenate([s[3:], eom_accel(p, s, u)])


def state_jacobians(p: VehicleParams, s: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Analytic (df/dx 6x6, df/du 6x4) of ``state_derivative``."""
    s = np.asarray(s, float)
    u = np.asarray(u, float)
    Minv = np.linalg.inv(effective_mass_matrix(p))
    D = drag_matrix(p)
    Bb = body_thrust_map(p)
    th = s[2]
    T = np.eye(3)
    T[:2, :2] = rotation_matrix(th)
    dT = np.zeros((3, 3))
    dT[:2, :2] = _rotation_derivative(th)

    A = np.zeros((6, 6))
    A[:3, 3:] = np.eye(3)
    # drag: Q = -T D T^T qdot
    dQ_dqdot = -T @ D @ T.T
    dQ_dth = dT @ Bb @ u - (dT @ D @ T.T + T @ D @ dT.T) @ s[3:]
    A[3:, 2] = Minv @ dQ_dth
    A[3:, 3:] = Minv @ dQ_dqdot
    B = np.zeros((6, 4))
    B[3:, :] = Minv @ T @ Bb
    return A, B


def true_basis_coefficients(p: VehicleParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact coefficients of the accelerations in the identification basis.

    Columns follow the library ordering used by :mod:`microasv.sysid`:
    ``[Xdot, F1 sin, F1 cos, ..., F4 sin, F4 cos]`` for X and Y and
    ``[thetadot, F1, F2, F3, F4]`` for theta.
    """
    Meff = effective_mass_matrix(p)
    D = drag_matrix(p)
    if not np.isclose(D[0, 0], D[1, 1]):
        raise InvalidParameterError("basis expansion assumes isotropic translational drag")
    Bb = body_thrust_map(p)
    fx, fy, tau = Bb
    # inertial X force = cos(th) fx - sin(th) fy ; Y force = sin(th) fx + cos(th) fy
    w1 = np.empty(9)
    w2 = np.empty(9)
    w1[0] = -D[0, 0] / Meff[0, 0]
    w2[0] = -D[1, 1] / Meff[1, 1]
    w1[1::2] = -fy / Meff[0, 0]
    w1[2::2] = fx / Meff[0, 0]
    w2[1::2] = fx / Meff[1, 1]
    w2[2::2] = fy / Meff[1, 1]
    w3 = np.concatenate([[-D[2, 2] / Meff[2, 2]], tau / Meff[2, 2]])
    return w1, w2, w3


class PlantRHS:
    """Scalar fast path of ``state_derivative`` plus an external generalized force.

    The simulator calls this ~10^6 times per scenario; it avoids numpy
    allocation on the hot path. Agreement with ``state_derivative`` is tested.
    """

    def __init__(self, p: VehicleParams):
        p.validate()
        Meff = effective_mass_matrix(p)
        D = drag_matrix(p)
        Bb = body_thrust_map(p)
        self.params = p
        self.inv_m = 1.0 / Meff[0, 0]
        self.inv_i = 1.0 / Meff[2, 2]
        self.d_t = D[0, 0]
        self.d_r = D[2, 2]
        self.fx = tuple(Bb[0])
        self.fy = tuple(Bb[1])
        self.tau = tuple(Bb[2])

    def __call__(self, x, u, extra=(0.0, 0.0, 0.0)):
        th, vx, vy, w = x[2], x[3], x[4], x[5]
        fx, fy, tau = self.fx, self.fy, self.tau
        bx = fx[0] * u[0] + fx[1] * u[1] + fx[2] * u[2] + fx[3] * u[3]
        by = fy[0] * u[0] + fy[1] * u[1] + fy[2] * u[2] + fy[3] * u[3]
        bt = tau[0] * u[0] + tau[1] * u[1] + tau[2] * u[2] + tau[3] * u[3]
        c, s = math.cos(th), math.sin(th)
        ax = (c * bx - s * by - self.d_t * vx + extra[0]) * self.inv_m
        ay = (s * bx + c * by - self.d_t * vy + extra[1]) * self.inv_m
        aw = (bt - self.d_r * w + extra[2]) * self.inv_i
        return (vx, vy, w, ax, ay, aw)

    def accel_extra(self, extra) -> np.ndarray:
        """M_eff^{-1} extra."""
        return np.array([extra[0] * self.inv_m, extra[1] * self.inv_m, extra[2] * self.inv_i])
