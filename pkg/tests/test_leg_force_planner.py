import math

import numpy as np
import pytest

from src.errors import ZeroLegLength
from src.fivelink_model import RobotParams
from src.fivelink_simulator import initial_state
from src.leg_force_planner import (
    DesiredFootForce,
    PlannerGains,
    plan_forces,
    retraction_length,
    stacked_polar_force,
    stacked_task_force,
    stance_force,
    swing_force,
)
from src.template_control import vbla_touchdown


def test_gain_validation():
    with pytest.raises(ValueError):
        PlannerGains(k=0.0)
    with pytest.raises(ValueError):
        PlannerGains(mu_vbla=2.0)
    assert PlannerGains(mu_fric_hat=0.6).fdc().mu_fric_hat == 0.6


def test_polar_to_global():
    upright = DesiredFootForce.from_polar(1, 100.0, 0.0, math.pi / 2)
    assert upright.global_force == pytest.approx((0.0, 100.0), abs=1e-12)
    assert upright.theta_p == pytest.approx(0.0, abs=1e-12)
    tangential = DesiredFootForce.from_polar(1, 0.0, 10.0, math.pi / 2)
    assert tangential.global_force == pytest.approx((10.0, 0.0), abs=1e-12)
    tilted = DesiredFootForce.from_polar(2, 50.0, 5.0, 1.3)
    assert math.hypot(*tilted.global_force) == pytest.approx(math.hypot(50.0, 5.0))
    assert tilted.polar == (50.0, 5.0)


def test_retraction_window():
    L0 = 0.37
    assert retraction_length(math.pi / 2, L0) == pytest.approx(0.8 * L0)
    assert retraction_length(math.pi / 2 - math.pi / 9, L0) == pytest.approx(0.8 * L0)
    assert retraction_length(math.pi / 2 + math.pi / 18, L0) == pytest.approx(0.8 * L0)
    assert retraction_length(math.pi / 2 + 0.3, L0) == L0
    assert retraction_length(math.pi / 2 - 0.5, L0) == L0


def test_stance_spring_and_unilateral_floor():
    gains = PlannerGains()
    upright = stance_force(0.35, 0.0, 0.0, math.pi / 2, 0.0, 0.0, gains)
    assert upright.F_r == pytest.approx(gains.k * 0.02)
    assert upright.F_t == pytest.approx(0.0, abs=1e-12)
    damped = stance_force(0.35, 0.1, 0.0, math.pi / 2, 0.0, 0.0, gains)
    assert damped.F_r == pytest.approx(gains.k * 0.02 - gains.k_d * 0.1)
    stretched = stance_force(0.40, 0.0, 0.0, math.pi / 2, 0.0, 0.0, gains)
    assert stretched.F_r == 0.0
    with pytest.raises(ZeroLegLength):
        stance_force(0.0, 0.0, 0.0, math.pi / 2, 0.0, 0.0, gains)


def test_stance_tangential_force_follows_trunk_error():
    gains = PlannerGains()
    forward = stance_force(0.35, 0.0, 0.0, math.pi / 2, 0.05, 0.0, gains)
    backward = stance_force(0.35, 0.0, 0.0, math.pi / 2, -0.05, 0.0, gains)
    assert forward.F_t == pytest.approx(forward.F_r * math.tan(-gains.c * 0.05))
    assert backward.F_t == pytest.approx(-forward.F_t)


def test_stance_direction_clamped_to_cone():
    gains = PlannerGains(mu_fric_hat=0.3)
    force = stance_force(0.33, 0.0, 0.0, math.pi / 2, 0.5, 0.0, gains)
    assert abs(force.F_t / force.F_r) <= 0.3 + 1e-12


def test_swing_force_at_target_is_zero():
    gains = PlannerGains()
    v = (0.6, 0.0)
    attack = vbla_touchdown(v, gains.L0, gains.mu_vbla, 9.81)
    alpha = math.pi - attack
    force = swing_force(retraction_length(alpha, gains.L0), 0.0, alpha, 0.0, v, gains)
    assert force.F_r == pytest.approx(0.0, abs=1e-9)
    assert force.F_t == pytest.approx(0.0, abs=1e-9)


def test_swing_force_pulls_toward_target_length():
    gains = PlannerGains()
    alpha = math.pi / 2  # under the hip: retracted target
    short = swing_force(0.2, 0.0, alpha, 0.0, (0.6, 0.0), gains)
    assert short.F_r == pytest.approx(gains.k * (0.8 * gains.L0 - 0.2))
    with pytest.raises(ZeroLegLength):
        swing_force(0.0, 0.0, alpha, 0.0, (0.6, 0.0), gains)


def test_plan_forces_labels_and_stacking():
    params = RobotParams()
    state = initial_state(params)
    stance, swing = plan_forces(state, params, PlannerGains())
    assert stance.leg == state.stance_leg
    assert swing.leg == state.swing_leg
    assert stance.F_r > 0
    assert np.array_equal(stacked_task_force(stance, swing), [stance.F_x, stance.F_y, swing.F_x, swing.F_y])
    assert np.array_equal(stacked_polar_force(stance, swing), [stance.F_r, stance.F_t, swing.F_r, swing.F_t])
