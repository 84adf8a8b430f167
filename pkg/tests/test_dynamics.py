import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from microasv import dynamics as dyn
from microasv.dynamics import VehicleParams
from microasv.simulator import rk4_step

finite = st.floats(-2.0, 2.0, allow_nan=False)
angles = st.floats(-10.0, 10.0, allow_nan=False)


def random_params(rng):
    return VehicleParams(m=rng.uniform(0.1, 1.0), I_zz=rng.uniform(1e-3, 1e-2),
                         L=rng.uniform(0.01, 0.1), R_eff=rng.uniform(0.02, 0.15),
                         mu_water=rng.uniform(0.0, 2.0), payload=rng.uniform(0.0, 2.0))


def test_mass_matrix_examples():
    assert np.array_equal(dyn.mass_matrix(VehicleParams(m=1.0, I_zz=1.0)), np.eye(3))
    M = dyn.mass_matrix(VehicleParams(payload=0.2))
    np.testing.assert_allclose(M, np.diag([0.45, 0.45, 0.0045]), rtol=0, atol=1e-15)


def test_mass_matrix_symmetric():
    rng = np.random.default_rng(0)
    for _ in range(20):
        M = dyn.mass_matrix(random_params(rng))
        assert np.array_equal(M, M.T)


def test_coriolis_is_zero():
    rng = np.random.default_rng(1)
    assert not dyn.coriolis_matrix(VehicleParams(), np.zeros(3)).any()
    for _ in range(50):
        p = random_params(rng)
        C = dyn.coriolis_matrix(p, rng.normal(size=3), rng.normal(size=3))
        assert np.linalg.norm(C) < 1e-14
        assert np.abs(dyn.mass_matrix_partials(p, rng.normal(size=3))).max() == 0.0


def test_zero_thrust_gives_zero_force():
    assert not dyn.thruster_generalized_forces(VehicleParams(), 0.7, np.zeros(4)).any()


def test_single_thruster_hand_cross_product():
    p = VehicleParams()
    Q = dyn.thruster_generalized_forces(p, 0.0, [1.0, 0, 0, 0])
    rA = np.array([-p.L / 2, p.L / 2])
    f = np.array([-math.cos(math.pi / 4), -math.sin(math.pi / 4)])
    np.testing.assert_allclose(Q, [f[0], f[1], rA[0] * f[1] - rA[1] * f[0]], atol=1e-15)


@given(theta=angles, F=st.floats(0.0, 5.0))
def test_equal_thrusts_cancel_translation(theta, F):
    Q = dyn.thruster_generalized_forces(VehicleParams(), theta, [F] * 4)
    assert abs(Q[0]) < 1e-12 and abs(Q[1]) < 1e-12


def test_equal_thrusts_span_null_space():
    # the corner layout makes (1, 1, 1, 1) the null space of the thrust map,
    # so equal thrusts also cancel in moment
    p = VehicleParams()
    for theta in np.linspace(-3, 3, 7):
        B = dyn.thrust_map(p, theta)
        assert np.linalg.matrix_rank(B) == 3
        np.testing.assert_allclose(B @ np.ones(4), 0.0, atol=1e-15)


def test_thrust_map_matches_generalized_forces():
    rng = np.random.default_rng(2)
    p = VehicleParams()
    for _ in range(20):
        th, u = rng.uniform(-4, 4), rng.uniform(0, 1, 4)
        np.testing.assert_allclose(dyn.thrust_map(p, th) @ u,
                                   dyn.thruster_generalized_forces(p, th, u), atol=1e-15)


def test_added_mass_examples():
    np.testing.assert_allclose(np.diag(dyn.added_mass_matrix(VehicleParams())),
                               [2.14466, 2.14466, 1.02944e-3], rtol=1e-5)
    assert not dyn.added_mass_matrix(VehicleParams(R_eff=0.0)).any()
    rng = np.random.default_rng(3)
    for _ in range(10):
        assert (np.diag(dyn.added_mass_matrix(random_params(rng))) > 0).all()


def test_drag_matrix_examples():
    np.testing.assert_allclose(np.diag(dyn.drag_matrix(VehicleParams(mu_water=1e-3))),
                               [1.00531e-3, 1.00531e-3, 8.04248e-7], rtol=1e-5)
    assert not dyn.drag_matrix(VehicleParams(mu_water=0.0)).any()
    rng = np.random.default_rng(4)
    for _ in range(10):
        D = dyn.drag_matrix(random_params(rng))
        assert np.array_equal(D, np.diag(np.diag(D))) and (D >= 0).all()


def test_drag_forces_examples():
    p = VehicleParams(mu_water=1e-3)
    assert not dyn.drag_generalized_forces(p, np.zeros(6)).any()
    Q = dyn.drag_generalized_forces(p, [0, 0, 0.3, 1.0, 0, 0])
    np.testing.assert_allclose(Q[:2], [-1.00531e-3, 0.0], rtol=1e-5, atol=1e-15)
    norms = [np.linalg.norm(dyn.drag_generalized_forces(p, [0, 0, th, 0.3, -0.4, 0])[:2])
             for th in np.linspace(0, 2 * np.pi, 8, endpoint=False)]
    np.testing.assert_allclose(norms, norms[0], rtol=1e-12)


@settings(max_examples=200)
@given(th=angles, vx=finite, vy=finite, w=finite, mu=st.floats(0.0, 3.0), R=st.floats(0.01, 0.2))
def test_drag_dissipates(th, vx, vy, w, mu, R):
    p = VehicleParams(mu_water=mu, R_eff=R)
    s = np.array([0, 0, th, vx, vy, w])
    assert s[3:] @ dyn.drag_generalized_forces(p, s) <= 1e-15


def test_effective_mass_examples():
    p = VehicleParams(m=0.45)
    np.testing.assert_allclose(np.diag(dyn.effective_mass_matrix(p)),
                               [2.59466, 2.59466, 5.52944e-3], rtol=1e-5)
    dry = VehicleParams(R_eff=0.0)
    np.testing.assert_array_equal(dyn.effective_mass_matrix(dry), dyn.mass_matrix(dry))
    rng = np.random.default_rng(5)
    for _ in range(20):
        assert np.linalg.eigvalsh(dyn.effective_mass_matrix(random_params(rng))).min() > 0


def test_eom_examples():
    p = VehicleParams()
    assert not dyn.eom_accel(p, np.zeros(6), np.zeros(4)).any()
    a = dyn.eom_accel(p, np.zeros(6), [0.3] * 4)
    np.testing.assert_allclose(a, 0.0, atol=1e-14)
    rng = np.random.default_rng(6)
    for _ in range(20):
        p = random_params(rng)
        s, u = rng.normal(size=6), rng.uniform(0, 1, 4)
        res = dyn.effective_mass_matrix(p) @ dyn.eom_accel(p, s, u) \
            - dyn.thruster_generalized_forces(p, s[2], u) - dyn.drag_generalized_forces(p, s)
        assert np.abs(res).max() < 1e-12


def test_eom_linear_in_u():
    rng = np.random.default_rng(7)
    p = VehicleParams()
    for _ in range(20):
        s, u1, u2 = rng.normal(size=6), rng.normal(size=4), rng.normal(size=4)
        a, b = rng.normal(size=2)
        f0 = dyn.eom_accel(p, s, np.zeros(4))
        lhs = dyn.eom_accel(p, s, a * u1 + b * u2) - f0
        rhs = a * (dyn.eom_accel(p, s, u1) - f0) + b * (dyn.eom_accel(p, s, u2) - f0)
        assert np.abs(lhs - rhs).max() < 1e-10


def test_state_derivative_structure():
    p = VehicleParams()
    assert not dyn.state_derivative(p, np.zeros(6), np.zeros(4)).any()
    s = np.array([1.0, 2.0, 0.4, 0.1, -0.2, 0.3])
    np.testing.assert_array_equal(dyn.state_derivative(p, s, np.ones(4))[:3], s[3:])


def test_state_derivative_matches_rollout():
    p = VehicleParams()
    u = np.array([0.3, 0.1, 0.2, 0.05])
    s = np.array([0.0, 0.0, 0.2, 0.01, 0.02, 0.1])
    errs = []
    for dt in (1e-2, 5e-3):
        xs = [s]
        for _ in range(2):
            xs.append(rk4_step(p, xs[-1], u, dt))
        fd = (xs[2] - xs[0]) / (2 * dt)
        errs.append(np.abs(fd - dyn.state_derivative(p, xs[1], u)).max())
    assert errs[1] < errs[0] / 3.5  # O(dt^2)


def _fd_jacobians(p, s, u, eps=1e-6):
    A = np.empty((6, 6))
    B = np.empty((6, 4))
    for j in range(6):
        d = np.zeros(6)
        d[j] = eps
        A[:, j] = (dyn.state_derivative(p, s + d, u) - dyn.state_derivative(p, s - d, u)) / (2 * eps)
    for j in range(4):
        d = np.zeros(4)
        d[j] = eps
        B[:, j] = (dyn.state_derivative(p, s, u + d) - dyn.state_derivative(p, s, u - d)) / (2 * eps)
    return A, B


def test_analytic_jacobians_match_fd():
    rng = np.random.default_rng(8)
    for _ in range(30):
        p = random_params(rng)
        s, u = rng.normal(size=6), rng.uniform(0, 1, 4)
        A, B = dyn.state_jacobians(p, s, u)
        Af, Bf = _fd_jacobians(p, s, u)
        assert np.abs(A - Af).max() <= 1e-5 * max(np.abs(Af).max(), 1.0)
        assert np.abs(B - Bf).max() <= 1e-5 * max(np.abs(Bf).max(), 1.0)


def test_true_basis_coefficients():
    p = VehicleParams(payload=0.2)
    w1, w2, w3 = dyn.true_basis_coefficients(p)
    assert (len(w1), len(w2), len(w3)) == (9, 9, 5)
    Meff = dyn.effective_mass_matrix(p)
    D = dyn.drag_matrix(p)
    assert w1[0] == pytest.approx(-D[0, 0] / Meff[0, 0], rel=1e-15)
    # doubling the translational inertia halves force coefficients
    M = dyn.effective_mass_matrix(p)[0, 0]
    big = VehicleParams(m=p.m, payload=p.payload + M)  # total translational inertia doubles
    v1, v2, _ = dyn.true_basis_coefficients(big)
    np.testing.assert_allclose(v1[1:], w1[1:] / 2, rtol=1e-12)
    np.testing.assert_allclose(v2[1:], w2[1:] / 2, rtol=1e-12)


def test_true_coefficients_reproduce_eom():
    from microasv.sysid import LearnedModel, model_eval
    rng = np.random.default_rng(9)
    for _ in range(20):
        p = random_params(rng)
        mdl = LearnedModel.from_params(p)
        s, u = rng.normal(size=6), rng.uniform(0, 1, 4)
        np.testing.assert_allclose(model_eval(mdl, s, u), dyn.eom_accel(p, s, u), rtol=0, atol=1e-10)


def test_plant_rhs_matches_state_derivative():
    rng = np.random.default_rng(10)
    for _ in range(20):
        p = random_params(rng)
        s, u = rng.normal(size=6), rng.uniform(0, 1, 4)
        np.testing.assert_allclose(dyn.PlantRHS(p)(s, u), dyn.state_derivative(p, s, u),
                                   rtol=1e-12, atol=1e-12)


def test_invalid_params_rejected():
    for bad in ({"m": -1.0}, {"I_zz": 0.0}, {"payload": -0.1}):
        with pytest.raises(dyn.InvalidParameterError):
            VehicleParams(**bad).validate()


def test_params_roundtrip():
    p = VehicleParams(payload=0.4, R_eff=0.1)
    assert VehicleParams.from_dict(p.to_dict()) == p
