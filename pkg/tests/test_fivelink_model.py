import math

import numpy as np
import pytest

from src.errors import ModelError
from src.fivelink_model import (
    ACTUATION,
    N_DOF,
    RELABEL,
    STANCE_HIP,
    STANCE_KNEE,
    TRUNK,
    RobotParams,
    RobotState,
    center_of_mass,
    com_jacobian,
    constrained_accel,
    coriolis_matrix,
    dynamics_terms,
    embed_torques,
    foot_position,
    gravity_vector,
    impact_map,
    kinetic_energy,
    leg_joint_angles,
    link_points,
    mass_matrix,
    place_stance_foot,
    point_jacobian,
    potential_energy,
    stance_consistent_velocity,
    trunk_pitch,
    virtual_leg,
)

PARAMS = RobotParams()
H = 1e-6


def _random_q(rng) -> np.ndarray:
    return np.array(
        [
            rng.uniform(-0.6, 0.6),
            rng.uniform(-0.6, 0.6),
            rng.uniform(-1.2, -0.1),
            rng.uniform(-1.2, -0.1),
            rng.uniform(-0.3, 0.3),
            rng.uniform(-1.0, 1.0),
            rng.uniform(0.3, 0.5),
        ]
    )


def _random_state(rng) -> RobotState:
    return RobotState(_random_q(rng), rng.normal(scale=0.8, size=N_DOF))


def _fd(fn, q, direction):
    return (np.asarray(fn(q + H * direction)) - np.asarray(fn(q - H * direction))) / (2 * H)


def _link_angles(q):
    trunk = q[TRUNK]
    return {
        "trunk_com": trunk,
        "femur_com_swing": trunk + q[0],
        "femur_com_stance": trunk + q[1],
        "shin_com_swing": trunk + q[0] + q[2],
        "shin_com_stance": trunk + q[1] + q[3],
    }


def _link_table(p):
    return {
        "trunk_com": (p.m_t, p.J_t),
        "femur_com_swing": (p.m_f, p.J_f),
        "femur_com_stance": (p.m_f, p.J_f),
        "shin_com_swing": (p.m_s, p.J_s),
        "shin_com_stance": (p.m_s, p.J_s),
    }


def test_params_validation():
    with pytest.raises(ModelError):
        RobotParams(m_t=0.0)
    with pytest.raises(ModelError):
        RobotParams(c_f=0.5)
    assert PARAMS.total_mass == pytest.approx(12.5 + 2 * 1.4)


def test_state_shape_checked():
    with pytest.raises(ModelError):
        RobotState(np.zeros(5), np.zeros(7))
    with pytest.raises(ModelError):
        RobotState(np.zeros(7), np.zeros(7), stance_leg=3)


def test_mass_matrix_symmetric_positive_definite():
    rng = np.random.default_rng(1)
    for _ in range(200):
        D = mass_matrix(_random_q(rng), PARAMS)
        assert np.allclose(D, D.T, atol=1e-12)
        assert np.min(np.linalg.eigvalsh(D)) > 1e-6


def test_kinetic_energy_matches_link_velocities():
    rng = np.random.default_rng(2)
    table = _link_table(PARAMS)
    for _ in range(20):
        state = _random_state(rng)
        velocities = _fd(lambda q: np.stack([link_points(q, PARAMS)[name] for name in table]), state.q, state.qdot)
        rates = _fd(lambda q: np.array(list(_link_angles(q).values())), state.q, state.qdot)
        expected = sum(
            0.5 * m * v @ v + 0.5 * inertia * w**2 for (m, inertia), v, w in zip(table.values(), velocities, rates)
        )
        assert kinetic_energy(state, PARAMS) == pytest.approx(expected, rel=1e-7)


def test_point_jacobians_match_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(20):
        q = _random_q(rng)
        for name in ("hip", "foot_stance", "foot_swing", "trunk_top", "knee_swing"):
            J = point_jacobian(q, PARAMS, name)
            for k in range(N_DOF):
                e = np.eye(N_DOF)[k]
                assert np.allclose(J[:, k], _fd(lambda x: link_points(x, PARAMS)[name], q, e), atol=1e-6)


def test_com_jacobian_matches_finite_differences():
    rng = np.random.default_rng(4)
    q = _random_q(rng)
    J = com_jacobian(q, PARAMS)
    for k in range(N_DOF):
        assert np.allclose(J[:, k], _fd(lambda x: center_of_mass(x, PARAMS), q, np.eye(N_DOF)[k]), atol=1e-6)


def test_gravity_is_potential_gradient():
    rng = np.random.default_rng(5)
    for _ in range(20):
        q = _random_q(rng)
        grad = [_fd(lambda x: potential_energy(x, PARAMS), q, np.eye(N_DOF)[k]) for k in range(N_DOF)]
        assert np.allclose(gravity_vector(q, PARAMS), grad, atol=1e-6)


def test_coriolis_skew_property():
    rng = np.random.default_rng(6)
    for _ in range(20):
        state = _random_state(rng)
        D_dot = _fd(lambda q: mass_matrix(q, PARAMS), state.q, state.qdot)
        N = D_dot - 2.0 * coriolis_matrix(state.q, state.qdot, PARAMS)
        assert np.allclose(N, -N.T, atol=1e-6)


def test_constrained_accel_satisfies_contact_equations():
    rng = np.random.default_rng(7)
    for _ in range(50):
        state = _random_state(rng)
        u = rng.normal(scale=20.0, size=4)
        terms = dynamics_terms(state, PARAMS)
        qdd, F = constrained_accel(state, u, PARAMS, terms)
        assert np.allclose(terms.J_st @ qdd + terms.Jdot_qdot_st, 0.0, atol=1e-8)
        residual = terms.D @ qdd + terms.h - ACTUATION @ embed_torques(u) - terms.J_st.T @ F
        assert np.allclose(residual, 0.0, atol=1e-8)


def test_no_gravity_no_motion_stays_at_rest():
    p = RobotParams(g=0.0)
    rng = np.random.default_rng(8)
    state = RobotState(_random_q(rng), np.zeros(N_DOF))
    qdd, F = constrained_accel(state, np.zeros(4), p)
    assert np.linalg.norm(qdd) < 1e-8
    assert np.linalg.norm(F) < 1e-8


def test_external_force_enters_right_hand_side():
    rng = np.random.default_rng(9)
    state = _random_state(rng)
    terms = dynamics_terms(state, PARAMS)
    push = com_jacobian(state.q, PARAMS).T @ np.array([30.0, 0.0])
    base, _ = constrained_accel(state, np.zeros(4), PARAMS, terms)
    pushed, _ = constrained_accel(state, np.zeros(4), PARAMS, terms, external=push)
    assert not np.allclose(base, pushed)


def test_embed_torques_shape():
    assert np.array_equal(embed_torques([1, 2, 3, 4]), [1, 2, 3, 4, 0, 0, 0])
    with pytest.raises(ModelError):
        embed_torques([1, 2, 3])


def test_relabel_is_an_involution():
    assert np.array_equal(RELABEL @ RELABEL, np.eye(N_DOF))


def test_impact_invariants():
    rng = np.random.default_rng(10)
    for _ in range(1000):
        state = _random_state(rng)
        result = impact_map(state, PARAMS)
        D = mass_matrix(state.q, PARAMS)
        J_sw = point_jacobian(state.q, PARAMS, "foot_swing")
        assert np.allclose(J_sw @ result.qdot_plus, 0.0, atol=1e-9)
        assert np.allclose(D @ (result.qdot_plus - state.qdot), J_sw.T @ result.delta_F, atol=1e-9)
        ke_minus = 0.5 * state.qdot @ D @ state.qdot
        ke_plus = 0.5 * result.qdot_plus @ D @ result.qdot_plus
        assert ke_plus <= ke_minus + 1e-9 * max(1.0, ke_minus)


def test_impact_relabels_legs():
    rng = np.random.default_rng(11)
    state = _random_state(rng)
    after = impact_map(state, PARAMS).state
    assert after.stance_leg == 2
    assert np.allclose(foot_position(after.q, PARAMS, "stance"), foot_position(state.q, PARAMS, "swing"))
    assert np.allclose(after.q[5:], state.q[5:])


def test_leg_joint_angles_reach_requested_virtual_leg():
    q5 = -0.09
    for L, alpha in ((0.35, math.pi / 2 + 0.12), (0.30, math.pi / 2 - 0.3), (0.37, math.pi / 2)):
        hip, knee = leg_joint_angles(L, alpha, q5, PARAMS)
        assert knee < 0
        q = np.zeros(N_DOF)
        q[STANCE_HIP], q[STANCE_KNEE], q[TRUNK] = hip, knee, q5
        leg = virtual_leg(RobotState(q, np.zeros(N_DOF)), PARAMS, "stance")
        assert leg.L == pytest.approx(L, abs=1e-12)
        assert leg.alpha == pytest.approx(alpha, abs=1e-12)
    with pytest.raises(ModelError):
        leg_joint_angles(0.5, math.pi / 2, 0.0, PARAMS)


def test_virtual_leg_rates_match_finite_differences():
    rng = np.random.default_rng(12)
    state = _random_state(rng)
    leg = virtual_leg(state, PARAMS, "swing")

    def length(q):
        return virtual_leg(RobotState(q, state.qdot), PARAMS, "swing").L

    def angle(q):
        return virtual_leg(RobotState(q, state.qdot), PARAMS, "swing").alpha

    assert leg.Ldot == pytest.approx(_fd(length, state.q, state.qdot), abs=1e-6)
    assert leg.alphadot == pytest.approx(_fd(angle, state.q, state.qdot), abs=1e-6)


def test_stance_consistent_velocity_pins_the_foot():
    rng = np.random.default_rng(13)
    q = place_stance_foot(_random_q(rng), PARAMS, (0.2, 0.0))
    assert np.allclose(foot_position(q, PARAMS, "stance"), [0.2, 0.0])
    qdot = stance_consistent_velocity(q, rng.normal(size=5), PARAMS)
    assert np.allclose(point_jacobian(q, PARAMS, "foot_stance") @ qdot, 0.0, atol=1e-12)


def test_trunk_pitch_convention():
    q = np.zeros(N_DOF)
    assert trunk_pitch(q) == pytest.approx(math.pi / 2)
    q[TRUNK] = -0.09
    assert trunk_pitch(q) == pytest.approx(math.pi / 2 - 0.09)
    # leaning forward puts the trunk top ahead of the hip
    assert link_points(q, PARAMS)["trunk_top"][0] > 0
