"""
Desired foot-end forces for the 5-link robot.

The stance leg acts as a virtual spring whose force is redirected by the force
direction law; the swing leg follows a PD law on its virtual length and angle,
aiming at the VBLA touchdown direction and retracting mid-swing.

Forces are expressed on the hip-minus-foot task coordinates in the polar frame
e_r = (cos a, sin a), e_t = (sin a, -cos a) of the virtual leg, and globally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ZeroLegLength
from .fivelink_model import TRUNK, RobotParams, RobotState, center_of_mass, com_jacobian, foot_position, trunk_pitch, virtual_leg
from .template_control import FdcGains, clamp_beta, fdc_beta_tilde, vbla_touchdown


@dataclass(frozen=True)
class PlannerGains:
    k: float = 7500.0
    k_d: float = 100.0
    c: float = 10.0
    c_sw: float = 10.0
    d: float = 1.0
    mu_vbla: float = 0.5
    L0: float = 0.37
    mu_fric_hat: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("k", "k_d", "c", "c_sw", "d", "L0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"planner gain {name} must be positive")
        if not 0.0 <= self.mu_vbla <= 1.0:
            raise ValueError("mu_vbla must lie in [0, 1]")

    def fdc(self) -> FdcGains:
        return FdcGains(c=self.c, d=self.d, mu_vbla=self.mu_vbla, mu_fric_hat=self.mu_fric_hat)


@dataclass(frozen=True)
class DesiredFootForce:
    leg: int
    F_r: float
    F_t: float
    F_x: float
    F_y: float
    theta_p: float  # angle of the force from the vertical

    @property
    def polar(self) -> Tuple[float, float]:
        return self.F_r, self.F_t

    @property
    def global_force(self) -> Tuple[float, float]:
        return self.F_x, self.F_y

    @classmethod
    def from_polar(cls, leg: int, F_r: float, F_t: float, alpha: float) -> "DesiredFootForce":
        ca, sa = math.cos(alpha), math.sin(alpha)
        F_x = F_r * ca + F_t * sa
        F_y = F_r * sa - F_t * ca
        return cls(leg=leg, F_r=F_r, F_t=F_t, F_x=F_x, F_y=F_y, theta_p=math.atan2(F_x, F_y))


def retraction_length(alpha: float, L0: float) -> float:
    """Swing target length: shortened while the leg passes under the hip."""
    offset = alpha - math.pi / 2
    if -math.pi / 9 <= offset <= math.pi / 18:
        return 0.8 * L0
    return L0


def stance_force(
    L: float,
    Ldot: float,
    eta: float,
    alpha: float,
    phi_tilde: float,
    phi_tilde_dot: float,
    gains: PlannerGains,
    leg: int = 1,
) -> DesiredFootForce:
    if L <= 0:
        raise ZeroLegLength("stance leg length is zero")
    F_r = max(0.0, gains.k * (gains.L0 - L) - gains.k_d * Ldot)
    beta = clamp_beta(eta + fdc_beta_tilde(phi_tilde, phi_tilde_dot, gains.fdc()), alpha, gains.mu_fric_hat)
    return DesiredFootForce.from_polar(leg, F_r, F_r * math.tan(beta), alpha)


def swing_force(
    L: float,
    Ldot: float,
    alpha: float,
    alphadot: float,
    v: Sequence[float],
    gains: PlannerGains,
    g: float = 9.81,
    leg: int = 2,
) -> DesiredFootForce:
    if L <= 0:
        raise ZeroLegLength("swing leg length is zero")
    attack_target = vbla_touchdown(v, gains.L0, gains.mu_vbla, g)
    L_d = retraction_length(alpha, gains.L0)
    F_r = gains.k * (L_d - L) - gains.k_d * Ldot
    # attack angle is pi - alpha; its error and the alpha rate both push alpha back
    tau_sw = gains.c_sw * (attack_target - (math.pi - alpha)) + alphadot
    return DesiredFootForce.from_polar(leg, F_r, tau_sw / L, alpha)


def plan_forces(
    state: RobotState, params: RobotParams, gains: PlannerGains
) -> Tuple[DesiredFootForce, DesiredFootForce]:
    """(stance, swing) desired forces for the current robot state."""
    q, qdot = state.q, state.qdot
    stance = virtual_leg(state, params, "stance")
    swing = virtual_leg(state, params, "swing")

    com = center_of_mass(q, params)
    foot = foot_position(q, params, "stance")
    eta = stance.alpha - math.atan2(com[1] - foot[1], com[0] - foot[0])
    phi_tilde = trunk_pitch(q) - math.pi / 2
    v = com_jacobian(q, params) @ qdot

    return (
        stance_force(stance.L, stance.Ldot, eta, stance.alpha, phi_tilde, qdot[TRUNK], gains, leg=state.stance_leg),
        swing_force(swing.L, swing.Ldot, swing.alpha, swing.alphadot, v, gains, params.g, leg=state.swing_leg),
    )


def stacked_task_force(stance: DesiredFootForce, swing: DesiredFootForce) -> np.ndarray:
    return np.array([stance.F_x, stance.F_y, swing.F_x, swing.F_y])


def stacked_polar_force(stance: DesiredFootForce, swing: DesiredFootForce) -> np.ndarray:
    return np.array([stance.F_r, stance.F_t, swing.F_r, swing.F_t])
