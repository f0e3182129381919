import math

import numpy as np
import pytest

from src.btslip_model import (
    FootContact,
    LegAction,
    LegGeometry,
    Phase,
    TemplateParams,
    TemplateState,
    btslip_dynamics,
    leg_geometry,
)
from src.errors import EmptyFeasibleSet, InvalidMeasurement, ReferenceOutOfRange, SingularDecoupling, ZeroVector
from src.template_control import (
    MAX_STIFFNESS_FACTOR,
    MIN_STIFFNESS_FRACTION,
    CombinedController,
    FdcController,
    FdcGains,
    FeedbackGains,
    ReferenceGait,
    TemplateController,
    VppController,
    VppInput,
    beta_bounds,
    clamp_beta,
    fdc_beta,
    fdc_beta_tilde,
    stiffness_feedback,
    vbla_touchdown,
    vpp_tan_beta,
    vpp_torque,
)

EPS = 1e-3


def _flat_reference(y=1.05, xdot=1.0) -> ReferenceGait:
    knots = np.linspace(0.0, 1.0, 9)
    return ReferenceGait(stride_length=1.0, x_knots=knots, y_knots=np.full(9, y), xdot_knots=np.full(9, xdot))


def _closed_loop_accel(state: TemplateState, u, params: TemplateParams, vpp: VppInput) -> np.ndarray:
    actions = {}
    for leg in state.contact_legs:
        geom = leg_geometry(state, leg, params)
        F_s = (params.k0 + u[leg]) * (params.L0 - geom.L)
        actions[leg] = LegAction(F_s, vpp_torque(geom, F_s, vpp, params))
    return btslip_dynamics(state, actions, params)


def test_vpp_redirect_example():
    p = TemplateParams()
    geom = LegGeometry(L=0.95, alpha=math.pi / 2 + 0.1, psi=0.1, eta=0.0, hip=(0.0, 0.95), foot=(0.0, 0.0))
    assert vpp_tan_beta(geom, VppInput(), p) == pytest.approx(0.017377, abs=1e-5)
    assert vpp_torque(geom, 800.0, VppInput(), p) == pytest.approx(13.21, abs=1e-2)


def test_vpp_torque_vanishes_for_aligned_leg():
    p = TemplateParams()
    geom = LegGeometry(L=0.9, alpha=math.pi / 2, psi=0.0, eta=0.0, hip=(0.0, 0.9), foot=(0.0, 0.0))
    assert vpp_torque(geom, 1000.0, VppInput(r_vpp=0.0), p) == pytest.approx(0.0, abs=1e-12)


def test_vpp_torque_linear_in_spring_force():
    p = TemplateParams()
    geom = LegGeometry(L=0.93, alpha=1.4, psi=-0.17, eta=0.0, hip=(0.0, 0.93), foot=(0.0, 0.0))
    one = vpp_torque(geom, 1.0, VppInput(), p)
    assert vpp_torque(geom, 750.0, VppInput(), p) == pytest.approx(750.0 * one)


def test_fdc_law_example():
    assert fdc_beta_tilde(0.05, -0.2, FdcGains()) == pytest.approx(-0.3)
    assert fdc_beta(0.05, -0.2, FdcGains(), alpha=math.pi / 2) == pytest.approx(-0.3)


def test_fdc_redirect_opposes_trunk_deviation():
    for deviation in (-0.3, -0.05, 0.05, 0.3):
        assert math.copysign(1.0, fdc_beta_tilde(deviation, 0.0, FdcGains())) == -math.copysign(1.0, deviation)


def test_fdc_rejects_invalid_deviation():
    with pytest.raises(InvalidMeasurement):
        fdc_beta(2.0, 0.0, FdcGains(), alpha=math.pi / 2)
    with pytest.raises(InvalidMeasurement):
        fdc_beta(math.nan, 0.0, FdcGains(), alpha=math.pi / 2)


def test_fdc_gain_validation():
    with pytest.raises(ValueError):
        FdcGains(c=0.0)
    with pytest.raises(ValueError):
        FdcGains(mu_vbla=1.5)


def test_beta_bounds_unilateral_and_friction():
    lo, hi = beta_bounds(math.pi / 2)
    assert lo == pytest.approx(-math.pi / 2 + EPS)
    assert hi == pytest.approx(math.pi / 2 - EPS)
    lo, hi = beta_bounds(math.pi / 2, mu_hat=0.5)
    assert lo == pytest.approx(-math.atan(0.5) + EPS)
    assert hi == pytest.approx(math.atan(0.5) - EPS)
    # forward leg: no force may point back into the ground
    assert beta_bounds(1.2)[1] == pytest.approx(1.2 - EPS)


def test_beta_bounds_empty():
    with pytest.raises(EmptyFeasibleSet):
        beta_bounds(-0.5, mu_hat=0.1)


def test_clamp_saturates_and_is_idempotent():
    clamped = clamp_beta(2.0, math.pi / 2)
    assert clamped == pytest.approx(math.pi / 2 - EPS)
    assert clamp_beta(clamped, math.pi / 2) == clamped
    for raw in np.linspace(-3.0, 3.0, 13):
        once = clamp_beta(raw, 1.3, mu_hat=0.8)
        assert clamp_beta(once, 1.3, mu_hat=0.8) == once
        lo, hi = beta_bounds(1.3, mu_hat=0.8)
        assert lo <= once <= hi


def test_vbla_examples():
    assert vbla_touchdown((1.0, 0.0), 1.0, 0.5, 9.81) == pytest.approx(1.2614, abs=1e-3)
    assert vbla_touchdown((0.0, 0.0), 1.0, 0.5, 9.81) == pytest.approx(math.pi / 2)
    assert vbla_touchdown((1.3, -0.2), 1.0, 0.0, 9.81) == pytest.approx(math.pi / 2)


def test_vbla_flattens_with_velocity_weight():
    angles = [vbla_touchdown((1.1, 0.0), 1.0, mu, 9.81) for mu in (0.2, 0.4, 0.6, 0.8)]
    assert all(a > b for a, b in zip(angles, angles[1:]))



def test_vbla_lands_further_ahead_when_faster():
    for mu in (0.2, 0.5, 1.0):
        angles = [vbla_touchdown((v, 0.0), 1.0, mu, 9.81) for v in (0.5, 0.8, 1.1, 1.4, 1.7)]
        assert all(a > b for a, b in zip(angles, angles[1:]))

def test_vbla_errors():
    with pytest.raises(ZeroVector):
        vbla_touchdown((0.0, 0.0), 1.0, 1.0, 9.81)
    with pytest.raises(ValueError):
        vbla_touchdown((1.0, 0.0), 0.0, 0.5, 9.81)
    with pytest.raises(ValueError):
        vbla_touchdown((1.0, 0.0), 1.0, -0.1, 9.81)


def test_reference_gait_periodic_extension():
    x = np.linspace(0.0, 1.2, 50)
    y = 1.05 + 0.02 * np.cos(2 * np.pi * x / 1.2)
    ref = ReferenceGait.from_samples(x, y, np.full_like(x, 1.1), knots=128)
    assert ref.stride_length == pytest.approx(1.2)
    assert ref.ybar(0.3) == pytest.approx(ref.ybar(1.5), abs=1e-12)
    assert ref.ybar(0.0) == pytest.approx(1.07, abs=1e-3)
    assert ref.xdotbar(0.7) == pytest.approx(1.1)


def test_reference_gait_without_extension_raises_outside():
    x = np.linspace(0.0, 1.0, 20)
    ref = ReferenceGait.from_samples(x, 1.0 + 0.1 * x, np.ones_like(x), knots=32, periodic=False)
    with pytest.raises(ReferenceOutOfRange):
        ref.ybar(1.5)


def test_single_support_feedback_imposes_error_dynamics():
    p = TemplateParams()
    vpp = VppInput()
    gains = FeedbackGains()
    state = TemplateState(0.0, 1.05, math.pi / 2, 1.0, 0.05, 0.0, Phase.SINGLE_SUPPORT, (FootContact(1, 0.05),))
    u = stiffness_feedback(state, _flat_reference(y=1.04), gains, p, vpp)
    acc = _closed_loop_accel(state, u, p, vpp)
    assert acc[1] == pytest.approx(-gains.k1 * 0.05 - gains.k2 * 0.01, abs=1e-8)


def test_double_support_feedback_tracks_height_and_speed():
    p = TemplateParams()
    vpp = VppInput()
    gains = FeedbackGains()
    feet = (FootContact(1, -0.2), FootContact(2, 0.25))
    state = TemplateState(0.0, 1.05, math.pi / 2, 1.1, 0.0, 0.0, Phase.DOUBLE_SUPPORT, feet)
    u = stiffness_feedback(state, _flat_reference(y=1.05, xdot=1.0), gains, p, vpp)
    acc = _closed_loop_accel(state, u, p, vpp)
    assert acc[0] == pytest.approx(-gains.k3 * 0.1, abs=1e-8)
    assert acc[1] == pytest.approx(0.0, abs=1e-8)


def test_touchdown_instant_uses_height_row_only():
    p = TemplateParams()
    vpp = VppInput()
    gains = FeedbackGains()
    feet = (FootContact(1, -0.1), FootContact(2, math.sqrt(1.0 - 0.95**2)))
    state = TemplateState(0.0, 1.05, math.pi / 2, 1.1, -0.02, 0.0, Phase.DOUBLE_SUPPORT, feet)
    u = stiffness_feedback(state, _flat_reference(y=1.04), gains, p, vpp)
    acc = _closed_loop_accel(state, u, p, vpp)
    assert acc[1] == pytest.approx(-gains.k1 * -0.02 - gains.k2 * 0.01, abs=1e-8)



def test_stiffness_increment_is_bounded():
    p = TemplateParams()
    state = TemplateState(0.0, 1.05, math.pi / 2, 1.0, -1.0, 0.0, Phase.SINGLE_SUPPORT, (FootContact(1, 0.05),))
    u = stiffness_feedback(state, _flat_reference(y=1.30), FeedbackGains(), p, VppInput())
    assert u[1] == pytest.approx((MAX_STIFFNESS_FACTOR - 1.0) * p.k0)
    lifted = TemplateState(0.0, 1.05, math.pi / 2, 1.0, 1.0, 0.0, Phase.SINGLE_SUPPORT, (FootContact(1, 0.05),))
    u = stiffness_feedback(lifted, _flat_reference(y=0.80), FeedbackGains(), p, VppInput())
    assert u[1] == pytest.approx(-(1.0 - MIN_STIFFNESS_FRACTION) * p.k0)

def test_uncompressed_leg_cannot_be_decoupled():
    p = TemplateParams()
    state = TemplateState(0.0, 1.1, math.pi / 2, 1.0, 0.0, 0.0, Phase.SINGLE_SUPPORT, (FootContact(1, 0.0),))
    with pytest.raises(SingularDecoupling):
        stiffness_feedback(state, _flat_reference(), FeedbackGains(), p, VppInput())
    # the closed loop falls back to the nominal spring
    controller = CombinedController(_flat_reference())
    assert controller.stiffness(state, p) == {1: p.k0}


def test_passive_controller_is_conservative():
    p = TemplateParams()
    state = TemplateState(0.0, 1.0, math.pi / 2, 1.0, 0.0, 0.0, Phase.SINGLE_SUPPORT, (FootContact(1, 0.0),))
    actions = TemplateController().leg_actions(state, p)
    assert actions[1].F_s == pytest.approx(p.k0 * 0.1)
    assert actions[1].tau == 0.0
    stretched = TemplateState(0.0, 1.2, math.pi / 2, 1.0, 0.0, 0.0, Phase.SINGLE_SUPPORT, (FootContact(1, 0.0),))
    assert TemplateController().leg_actions(stretched, p)[1].F_s == 0.0
    with pytest.raises(ValueError):
        TemplateController(touchdown="bogus")


def test_vpp_controller_stride_policy():
    moved = VppInput(r_vpp=0.12, gamma=0.01)
    controller = VppController(stride_policy=lambda S: moved)
    assert controller.name == "vpp+dlqr"
    controller.on_vlo(np.array([1.07, math.pi / 2, 1.1, 0.0, 0.0]), 0.0)
    assert controller.vpp_input() == moved
    assert VppController().name == "vpp"


def test_fdc_controller_touchdown_and_torque():
    p = TemplateParams()
    controller = FdcController()
    state = TemplateState(0.0, 1.0, math.pi / 2, 1.0, 0.0, 0.0, Phase.SINGLE_SUPPORT, (FootContact(1, -0.1),))
    assert controller.attack_angle(state, p) == pytest.approx(vbla_touchdown((1.0, 0.0), p.L0, 0.5, p.g))
    geom = leg_geometry(state, 1, p)
    # upright and still: the force points through the CoM
    assert controller.hip_torque(state, geom, 500.0, p) == pytest.approx(500.0 * geom.L * math.tan(geom.eta))
