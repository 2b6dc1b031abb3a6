import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.spatial.transform import Rotation

from bigfoot import ContactState, GeneralizedState
from bigfoot.kinematics import (angular_velocities, build_frames, consistent_rates,
                                holonomic_height, positions, rolling_constraint_matrix)

from conftest import random_state

angle = st.floats(-np.pi, np.pi, allow_nan=False)
contacts = st.sampled_from(list(ContactState))


def _state(th1, th2, phi, psi, contact=ContactState.A_EDGE, qdot=np.zeros(6)):
    return GeneralizedState([th1, th2, phi, psi, 0.0, 0.0], qdot, contact)


def _oracle_frames(th1, th2, phi, psi):
    """Body axes as rows, from intrinsic rotation sequences (yaw, roll, pitch)."""
    R2 = Rotation.from_euler("ZX", [psi, phi]).as_matrix().T
    R3 = Rotation.from_euler("ZXY", [psi, phi, th1]).as_matrix().T
    R4 = Rotation.from_euler("ZXY", [psi, phi, th2]).as_matrix().T
    return R2, R3, R4


def test_zero_angles_give_identity_frames(params):
    f = build_frames(_state(0, 0, 0, 0), params)
    for R in f:
        np.testing.assert_array_equal(R, np.eye(3))


def test_roll_quarter_turn_against_axis_angle(params):
    f = build_frames(_state(0, 0, np.pi / 2, 0), params)
    k2 = Rotation.from_rotvec([np.pi / 2, 0, 0]).apply([0, 0, 1])
    np.testing.assert_allclose(f.k2, k2, atol=1e-15)
    np.testing.assert_allclose(f.k2, [0, -1, 0], atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(angle, angle, angle, angle)
def test_frames_match_rotation_composition(th1, th2, phi, psi):
    from bigfoot import default_params
    f = build_frames(_state(th1, th2, phi, psi), default_params())
    R2, R3, R4 = _oracle_frames(th1, th2, phi, psi)
    np.testing.assert_allclose(f.R_2, R2, atol=1e-13)
    np.testing.assert_allclose(f.R_3, R3, atol=1e-13)
    np.testing.assert_allclose(f.R_4, R4, atol=1e-13)


def test_frames_orthonormal_on_random_states(params, rng):
    for _ in range(1000):
        beta = rng.uniform(-0.5, 0.5)
        p = params.replace(beta=beta) if _ % 100 == 0 else params
        f = build_frames(_state(*rng.uniform(-np.pi, np.pi, 4)), p)
        for R in f:
            assert np.abs(R @ R.T - np.eye(3)).max() < 1e-12
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


def test_leg_com_offset_at_zero_angles(params):
    r = positions(_state(0, 0, 0, 0), params)
    np.testing.assert_allclose(r["r_GA"] - r["r_D"], [0, -params.L_G, -params.H_G], atol=1e-18)
    np.testing.assert_allclose(r["r_GB"] - r["r_D"], [0, params.L_G, -params.H_G], atol=1e-18)


def test_shaft_centre_offset_on_leg_b(params):
    r = positions(_state(0, 0, 0, 0, ContactState.B_EDGE), params)
    np.testing.assert_allclose(r["r_D"] - r["r_A"], [0, -params.L, 0], atol=1e-18)


def test_shaft_com_is_shaft_centre(params, rng):
    for _ in range(50):
        r = positions(random_state(rng, params=params), params)
        np.testing.assert_array_equal(r["r_GD"], r["r_D"])


@pytest.mark.parametrize("contact, expected", [
    (ContactState.A_EDGE, "H"), (ContactState.B_EDGE, "H"),
    (ContactState.A_CURVE, "H_B"), (ContactState.B_CURVE, "H_B"),
])
def test_height_upright(params, contact, expected):
    assert holonomic_height(0.0, contact, params) == getattr(params, expected)


def _rolling_dz_dphi(phi, contact, params):
    """k-component of the stance joint velocity per unit roll rate, from rolling."""
    st_ = _state(0, 0, phi, 0, contact, qdot=[0, 0, 1.0, 0, 0, 0])
    f = build_frames(st_, params)
    w3 = angular_velocities(st_, params)["omega_3"]
    sigma = 1.0 if contact.stance_leg == "A" else -1.0
    if contact.is_edge:
        # material point under the edge is at rest: v_A = -w x (-H k2)
        v = np.cross(w3, params.H * f.k2)
    else:
        # sphere centre D sits H_B above the contact point; A is sigma L back along j2
        v = np.cross(w3, np.array([0, 0, params.H_B])) - np.cross(w3, sigma * params.L * f.j2)
    return v[2]


@pytest.mark.parametrize("contact", list(ContactState))
@pytest.mark.parametrize("phi", [0.1, -0.2, 0.35])
def test_height_matches_quadrature_of_rolling(params, contact, phi):
    z0 = holonomic_height(0.0, contact, params)
    dz, _ = integrate.quad(_rolling_dz_dphi, 0.0, phi, args=(contact, params), epsabs=1e-16)
    assert holonomic_height(phi, contact, params) == pytest.approx(z0 + dz, rel=1e-12, abs=1e-16)


def test_b_curve_height_example(params):
    z = holonomic_height(0.1, ContactState.B_CURVE, params)
    assert z == pytest.approx(params.H_B + params.L * np.sin(0.1), rel=1e-14)


def test_zero_rates_give_zero_omega(params):
    w = angular_velocities(_state(0.3, -0.2, 0.1, 1.0), params)
    for v in w.values():
        np.testing.assert_array_equal(v, 0.0)


def test_pure_yaw_rate(params):
    w = angular_velocities(_state(0, 0, 0, 0, qdot=[0, 0, 0, 1.0, 0, 0]), params)
    for v in w.values():
        np.testing.assert_allclose(v, [0, 0, 1.0])


def test_omega_difference_is_pitch_about_shaft(params, rng):
    for _ in range(200):
        s = random_state(rng, params=params)
        w = angular_velocities(s, params)
        f = build_frames(s, params)
        np.testing.assert_allclose(w["omega_1"] - w["omega_3"], s.qdot[0] * f.j2, atol=1e-14)
        np.testing.assert_allclose(w["omega_2"] - w["omega_3"], s.qdot[1] * f.j2, atol=1e-14)


def _omega_fd(s, params, h=1e-6):
    """Angular velocity of each body from the finite-difference rate of its frame."""
    qp = s.q + h * s.qdot
    qm = s.q - h * s.qdot
    out = []
    for k in (3, 4, 2):  # leg A, leg B, shaft
        Rp = build_frames(GeneralizedState(qp, s.qdot, s.contact), params)[k]
        Rm = build_frames(GeneralizedState(qm, s.qdot, s.contact), params)[k]
        R = build_frames(s, params)[k]
        W = ((Rp - Rm) / (2 * h)).T @ R
        out.append(np.array([W[2, 1], W[0, 2], W[1, 0]]))
    return out


def test_omega_matches_frame_derivative(params, rng):
    for _ in range(50):
        s = random_state(rng, params=params)
        w = angular_velocities(s, params)
        fd = _omega_fd(s, params)
        for key, v in zip(("omega_1", "omega_2", "omega_3"), fd):
            np.testing.assert_allclose(w[key], v, atol=1e-7)


def test_rolling_residual_zero_at_rest(params):
    rc = rolling_constraint_matrix(_state(0.2, 0.1, 0.1, 0.5), params)
    np.testing.assert_array_equal(rc.residual_fn(np.zeros(6)), 0.0)


def _contact_velocity_fd(s, params, h=1e-7):
    """Velocity of the stance foot's material contact point from moving positions."""
    def pos(sign):
        return positions(GeneralizedState(s.q + sign * h * s.qdot, s.qdot, s.contact), params)
    v_A = (pos(1)["r_A"] - pos(-1)["r_A"]) / (2 * h)
    r = positions(s, params)
    w = angular_velocities(s, params)["omega_1" if s.contact.stance_leg == "A" else "omega_2"]
    return v_A + np.cross(w, r["r_C"] - r["r_A"])


@pytest.mark.parametrize("contact", list(ContactState))
def test_contact_point_at_rest_under_rolling(params, rng, contact):
    for _ in range(50):
        s = random_state(rng, contact, params)
        v = _contact_velocity_fd(s, params)
        scale = params.H_B * np.abs(s.qdot[:4]).max()
        assert np.abs(v).max() < 1e-6 * scale


def test_theta1_rate_moves_hip_along_x(params):
    q = np.zeros(6)
    qd = consistent_rates(q, [1.0, 0, 0, 0], ContactState.A_EDGE, params)
    # edge contact point at -H k2 under the joint; rolling about j2 gives x_dot = H
    expected = -np.cross([0, 1.0, 0], [0, 0, -params.H])
    assert qd[4] == pytest.approx(expected[0], rel=1e-14)
    s = GeneralizedState(q, qd, ContactState.A_EDGE)
    assert np.abs(_contact_velocity_fd(s, params)).max() < 1e-12


def test_constraint_rank_two(params, rng):
    for _ in range(200):
        s = random_state(rng, params=params)
        J = rolling_constraint_matrix(s, params).J_c
        assert J.shape == (2, 6)
        sv = np.linalg.svd(J, compute_uv=False)
        assert sv[-1] > 1e-8 * sv[0]


def test_consistent_rates_satisfy_constraint(params, rng):
    for _ in range(200):
        s = random_state(rng, params=params)
        rc = rolling_constraint_matrix(s, params)
        assert np.abs(rc.residual_fn(s.qdot)).max() < 1e-15


@given(contacts)
def test_indicators_exclusive(contact):
    ind = contact.indicators
    assert sum(ind) == 1
    assert contact.swapped().swapped() is contact
    assert contact.swapped().stance_leg != contact.stance_leg
    assert contact.swapped().is_edge == contact.is_edge


@pytest.mark.parametrize("text, expected", [
    ("a", ContactState.A_EDGE), ("b", ContactState.B_EDGE), ("c", ContactState.A_CURVE),
    ("d", ContactState.B_CURVE), ("B_CURVE", ContactState.B_CURVE), (1, ContactState.B_EDGE),
])
def test_contact_parse(text, expected):
    assert ContactState.parse(text) is expected


def test_state_rejects_non_finite():
    with pytest.raises(ValueError):
        GeneralizedState([np.nan, 0, 0, 0, 0, 0], np.zeros(6))
