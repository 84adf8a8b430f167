"""Tracking-error statistics and disturbance-response metrics."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .simulator import tracking_error

_EPS_T = 1e-9


class EmptyRangeError(ValueError):
    pass


def compute_tracking_error(log, t0: float | None = None, t1: float | None = None):
    """Pointwise e(t) from the logged positions and references, with the mean
    and max over [t0, t1] (the whole log by default)."""
    e = tracking_error(np.asarray(log.states), np.asarray(log.refs))
    t = np.asarray(log.t)
    lo = t[0] if t0 is None else t0
    hi = t[-1] if t1 is None else t1
    sel = (t >= lo - _EPS_T) & (t <= hi + _EPS_T)
    if not sel.any():
        raise EmptyRangeError(f"no samples in [{lo}, {hi}]")
    return e, float(e[sel].mean()), float(e[sel].max())


@dataclass
class DisturbanceMetrics:
    overshoot: float
    convergence_time: float
    converged: bool
    baseline: float
    peak_time: float


def compute_disturbance_metrics(t, e, t_dist: float, baseline_span: float = 5.0,
                                band: float = 1.5, hold: float = 1.0) -> DisturbanceMetrics:
    """Overshoot above the pre-disturbance baseline and time to settle.

    baseline = mean e over [t_dist - baseline_span, t_dist]; overshoot = max e
    after t_dist minus baseline; convergence is the first sample after the
    peak from which e <= band * baseline holds for ``hold`` seconds. If that
    never happens the time is the remaining duration and ``converged`` is
    False.
    """
    t = np.asarray(t, float)
    e = np.asarray(e, float)
    if t[-1] <= t_dist:
        raise EmptyRangeError("log does not extend past the disturbance")
    pre = (t >= t_dist - baseline_span - _EPS_T) & (t <= t_dist + _EPS_T)
    if not pre.any():
        raise EmptyRangeError("no samples before the disturbance")
    baseline = float(e[pre].mean())
    post = np.flatnonzero(t > t_dist + _EPS_T)
    k = post[int(np.argmax(e[post]))]
    overshoot = max(0.0, float(e[k]) - baseline)
    inside = e <= band * baseline
    # index of the first sample after a run of `inside` samples spanning `hold`
    for i in range(k, len(t)):
        if not inside[i]:
            continue
        j = np.searchsorted(t, t[i] + hold - _EPS_T)
        if j >= len(t):
            break
        if inside[i:j + 1].all():
            return DisturbanceMetrics(overshoot, float(t[i] - t_dist), True, baseline, float(t[k]))
    return DisturbanceMetrics(overshoot, float(t[-1] - t_dist), False, baseline, float(t[k]))


@dataclass
class MetricsReport:
    mean_err_m: float
    max_err_m: float
    window: tuple[float, float]
    phases: dict = field(default_factory=dict)
    overshoot_m: float | None = None
    convergence_s: float | None = None
    converged: bool | None = None
    coeff_rel_err: dict | None = None
    failure: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def _phase_stats(t, e, t0, t1):
    sel = (t >= t0 - _EPS_T) & (t <= t1 + _EPS_T)
    if not sel.any():
        return None
    return {"t0": float(t0), "t1": float(t1), "mean_err_m": float(e[sel].mean()),
            "max_err_m": float(e[sel].max())}


def build_report(log, window=(35.0, 120.0), event_times=(), disturbance_time: float | None = None,
                 coeff_rel_err: dict | None = None) -> MetricsReport:
    """Metrics over ``window`` clipped to the logged span, with per-phase
    statistics split at ``event_times``."""
    t = np.asarray(log.t)
    e = np.asarray(log.errors)
    lo, hi = max(window[0], float(t[0])), min(window[1], float(t[-1]))
    if lo > hi:
        lo, hi = float(t[0]), float(t[-1])
    sel = (t >= lo - _EPS_T) & (t <= hi + _EPS_T)
    if not sel.any():
        raise EmptyRangeError(f"no samples in [{lo}, {hi}]")
    edges = [float(t[0])] + sorted(x for x in event_times if t[0] < x < t[-1]) + [float(t[-1])]
    phases = {}
    for i in range(len(edges) - 1):
        st = _phase_stats(t, e, edges[i], edges[i + 1])
        if st is not None:
            phases[f"phase{i}"] = st
    rep = MetricsReport(float(e[sel].mean()), float(e[sel].max()), (lo, hi), phases,
                        coeff_rel_err=coeff_rel_err, failure=log.failure)
    if disturbance_time is not None and t[-1] > disturbance_time:
        dm = compute_disturbance_metrics(t, e, disturbance_time)
        rep.overshoot_m = dm.overshoot
        rep.convergence_s = dm.convergence_time
        rep.converged = dm.converged
    return rep
