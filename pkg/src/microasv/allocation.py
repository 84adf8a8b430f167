"""Projection of unconstrained thrust commands onto non-negative thrusts.

The four-thruster map is 3x4, so a command ``raw_u`` can be shifted along the
null space of B(theta) without changing the generalized force it produces.
``project_thrusts`` picks the non-negative point of that affine set closest
to a uniform guess, which keeps the jets near a common operating thrust.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import dynamics
from .dynamics import VehicleParams


class Projection(NamedTuple):
    F: np.ndarray
    saturated: bool


def actuation_map(model, theta: float) -> np.ndarray:
    """B(theta) for either physical parameters or an identified model."""
    if isinstance(model, VehicleParams):
        return dynamics.thrust_map(model, theta)
    return model.input_map(theta)


def nnls(A: np.ndarray, b: np.ndarray, max_iter: int | None = None) -> np.ndarray:
    """Lawson-Hanson active-set solution of min ||A x - b|| s.t. x >= 0."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    m, n = A.shape
    max_iter = 3 * n + 10 if max_iter is None else max_iter
    tol = 10 * np.finfo(float).eps * max(m, n) * max(1.0, np.linalg.norm(A, 1))
    x = np.zeros(n)
    passive = np.zeros(n, bool)
    w = A.T @ (b - A @ x)
    for _ in range(max_iter):
        if passive.all() or w[~passive].max() <= tol:
            break
        j = np.flatnonzero(~passive)[np.argmax(w[~passive])]
        passive[j] = True
        while True:
            s = np.zeros(n)
            s[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
            if s[passive].min() > tol:
                x = s
                break
            idx = passive & (s <= tol)
            alpha = np.min(x[idx] / (x[idx] - s[idx]))
            x = x + alpha * (s - x)
            passive &= x > tol
            x[~passive] = 0.0
            if not passive.any():
                break
        w = A.T @ (b - A @ x)
    return x


def least_distance(G: np.ndarray, h: np.ndarray) -> np.ndarray | None:
    """min ||y|| s.t. G y >= h, via the NNLS dual; None if infeasible."""
    m, n = G.shape
    E = np.vstack([G.T, h[None, :]])
    f = np.zeros(n + 1)
    f[-1] = 1.0
    alpha = nnls(E, f)
    r = E @ alpha - f
    if np.linalg.norm(r) < 1e-12:
        return None
    return -r[:n] / r[n]


def _polish(B, b, guess, active):
    """Exact min ||F - g|| s.t. B F = b, F_i = 0 for i in ``active``."""
    E = np.eye(4)[list(active)]
    A = np.vstack([B, E])
    rhs = np.concatenate([b, np.zeros(len(active))])
    return guess + np.linalg.lstsq(A, rhs - A @ guess, rcond=None)[0]


def _project_feasible(B: np.ndarray, b: np.ndarray, guess: np.ndarray, rank_tol=1e-12):
    U, S, Vt = np.linalg.svd(B)
    r = int(np.sum(S > rank_tol * S[0])) if S.size and S[0] > 0 else 0
    V = Vt.T
    Fp = V[:, :r] @ ((U[:, :r].T @ b) / S[:r])
    N = V[:, r:]
    scale = max(1.0, float(np.abs(Fp).max()), float(np.abs(guess).max()))
    tol = 1e-9 * scale
    if N.shape[1] == 0:
        return Fp if np.all(Fp >= -tol) else None
    # F = Fp + N z ; ||F - g||^2 = ||z - N^T g||^2 + const
    z0 = N.T @ guess
    if N.shape[1] == 1:
        n = N[:, 0]
        pos, neg = n > 1e-14, n < -1e-14
        lo = np.max(-Fp[pos] / n[pos]) if pos.any() else -np.inf
        hi = np.min(-Fp[neg] / n[neg]) if neg.any() else np.inf
        if np.any(Fp[~(pos | neg)] < -tol) or lo > hi + tol / max(np.abs(n).max(), 1e-300):
            return None
        z = float(np.clip(z0[0], lo, max(lo, hi)))
        return np.maximum(Fp + n * z, 0.0)
    # general case: substitute y = z - N^T g and solve the least-distance problem
    y = least_distance(N, -Fp - N @ z0)
    if y is None:
        return None
    F = Fp + N @ (y + z0)
    if F.min() < -1e-6 * scale:
        return None
    # the NNLS dual is only accurate to roundoff; re-solve exactly on its active set
    polished = _polish(B, b, guess, np.flatnonzero(F <= 1e-6 * scale))
    if polished.min() >= -tol and np.abs(B @ polished - b).max() <= tol:
        return polished
    return F if F.min() >= -tol else None


def project_thrusts(model, theta: float, raw_u, guess: float = 0.2) -> Projection:
    """Non-negative thrusts closest to ``guess`` producing B(theta) raw_u.

    When no non-negative vector reproduces the command, the command is first
    replaced by the nearest reachable one (non-negative least squares on B)
    and the result is flagged as saturated.
    """
    raw_u = np.asarray(raw_u, float)
    B = actuation_map(model, theta)
    g = np.full(4, float(guess))
    b = B @ raw_u
    F = _project_feasible(B, b, g)
    saturated = F is None
    if saturated:
        F0 = nnls(B, b)
        F = _project_feasible(B, B @ F0, g)
        if F is None:
            F = F0
    return Projection(np.maximum(F, 0.0), saturated)
