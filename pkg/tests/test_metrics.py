from types import SimpleNamespace

import numpy as np
import pytest

from microasv.metrics import (EmptyRangeError, build_report, compute_disturbance_metrics,
                              compute_tracking_error)

T = np.arange(4001) / 100.0  # 0..40 s at 100 Hz


def fake_log(offset=(0.0, 0.0), t=T):
    refs = np.zeros((len(t), 6))
    refs[:, 0] = np.sin(t)
    refs[:, 1] = np.cos(t)
    states = refs.copy()
    states[:, 0] += offset[0]
    states[:, 1] += offset[1]
    errors = np.hypot(states[:, 0] - refs[:, 0], states[:, 1] - refs[:, 1])
    return SimpleNamespace(t=t, states=states, refs=refs, errors=errors, failure=None)


def test_perfect_tracking_is_zero():
    e, mean, mx = compute_tracking_error(fake_log())
    assert not e.any() and mean == 0.0 and mx == 0.0


def test_constant_offset_three_four_five():
    e, mean, mx = compute_tracking_error(fake_log((0.3, 0.4)))
    np.testing.assert_allclose(e, 0.5, rtol=1e-15)
    assert mean == pytest.approx(0.5) and mx == pytest.approx(0.5)


def test_windowed_statistics_exclude_learning_phase():
    lg = fake_log()
    lg.states[T < 30.0, 0] += 1.0  # large error only before 30 s
    lg.states[T >= 30.0, 1] += 0.1
    _, mean, mx = compute_tracking_error(lg, 30.0, 40.0)
    assert mean == pytest.approx(0.1) and mx == pytest.approx(0.1)
    _, mean_all, _ = compute_tracking_error(lg)
    assert mean_all > 0.5


def test_empty_range_raises():
    with pytest.raises(EmptyRangeError):
        compute_tracking_error(fake_log(), 50.0, 60.0)


def bump(t, t0=15.0, rise=1.0, fall=1.5, base=0.01, height=0.1):
    """Baseline plus a triangle: up for ``rise`` s from t0, down for ``fall`` s."""
    up = np.clip((t - t0) / rise, 0.0, 1.0)
    down = np.clip((t - t0 - rise) / fall, 0.0, 1.0)
    return base + height * (up - down)


def test_triangular_bump_analytic():
    e = bump(T)
    dm = compute_disturbance_metrics(T, e, 15.0)
    # peak 0.11 at 16 s; band 0.015 is reached when 0.1 (1 - s / 1.5) = 0.005,
    # i.e. s = 1.425 s after the peak; the first sample at or past 17.425 is 17.43
    assert dm.baseline == pytest.approx(0.01, abs=1e-15)
    assert dm.overshoot == pytest.approx(0.1, abs=1e-12)
    assert dm.peak_time == pytest.approx(16.0, abs=1e-12)
    assert dm.converged
    assert dm.convergence_time == pytest.approx(2.43, abs=1e-9)


def test_no_disturbance_has_no_overshoot():
    dm = compute_disturbance_metrics(T, np.full(len(T), 0.02), 15.0)
    assert dm.overshoot == pytest.approx(0.0, abs=1e-15)
    assert dm.converged and dm.convergence_time <= 0.01 + 1e-12


def test_never_converges_is_flagged():
    e = np.where(T > 15.0, 0.5, 0.01)
    dm = compute_disturbance_metrics(T, e, 15.0)
    assert not dm.converged
    assert dm.convergence_time == pytest.approx(T[-1] - 15.0)


def test_reentry_must_hold_one_second():
    e = bump(T)
    e[(T > 17.6) & (T < 17.9)] = 0.05  # a short excursion restarts the hold
    dm = compute_disturbance_metrics(T, e, 15.0)
    assert dm.convergence_time == pytest.approx(17.9 - 15.0, abs=1e-9)


def test_log_must_extend_past_disturbance():
    with pytest.raises(EmptyRangeError):
        compute_disturbance_metrics(T, np.zeros(len(T)), 45.0)


def test_build_report_fields():
    lg = fake_log((0.3, 0.4))
    lg.errors = bump(T) + 0.49
    rep = build_report(lg, window=(20.0, 40.0), event_times=[15.0], disturbance_time=15.0)
    d = rep.to_dict()
    for key in ("mean_err_m", "max_err_m", "overshoot_m", "convergence_s", "coeff_rel_err"):
        assert key in d
    assert d["window"] == [20.0, 40.0]
    assert set(rep.phases) == {"phase0", "phase1"}
    assert rep.overshoot_m == pytest.approx(0.1, abs=1e-12)
    assert all(v is None or v >= 0 for v in (rep.mean_err_m, rep.max_err_m, rep.convergence_s))


def test_build_report_clips_window():
    rep = build_report(fake_log((0.3, 0.4)), window=(35.0, 120.0))
    assert rep.window == (35.0, 40.0)
    assert rep.overshoot_m is None
