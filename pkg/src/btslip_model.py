"""
Bipedal trunk spring-loaded inverted pendulum (BTSLIP): a rigid trunk on two
massless spring legs walking with single and double support phases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import LegNotInContact, ModelError, NoContactLegs, ZeroLegLength
from .terrain import HeightFunction

LEGS = (1, 2)


def wrap_angle(angle: float) -> float:
    """Map an angle into (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


def normalize_attack_angle(alpha0: float) -> float:
    """Accept either touchdown spelling (70.6 deg or its supplement 110 deg)."""
    return math.pi - alpha0 if alpha0 > math.pi / 2 else alpha0


@dataclass(frozen=True)
class TemplateParams:
    m: float = 80.0
    J: float = 4.58
    r_h: float = 0.1
    r_vpp: float = 0.1
    L0: float = 1.0
    k0: float = 20000.0
    g: float = 9.81
    alpha0: float = math.radians(70.6)

    def __post_init__(self) -> None:
        for name in ("m", "J", "r_h", "r_vpp", "L0", "k0", "g", "alpha0"):
            if getattr(self, name) <= 0:
                raise ModelError(f"template parameter {name} must be positive")
        if self.L0 <= self.r_h:
            raise ModelError("leg rest length must exceed the CoM-hip distance")
        object.__setattr__(self, "alpha0", normalize_attack_angle(self.alpha0))


class Phase(Enum):
    SINGLE_SUPPORT = "SingleSupport"
    DOUBLE_SUPPORT = "DoubleSupport"


@dataclass(frozen=True)
class FootContact:
    leg: int
    x: float
    y: float = 0.0


@dataclass(frozen=True)
class TemplateState:
    x: float
    y: float
    phi: float
    xdot: float
    ydot: float
    phidot: float
    phase: Phase = Phase.SINGLE_SUPPORT
    feet: Tuple[FootContact, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        expected = 1 if self.phase is Phase.SINGLE_SUPPORT else 2
        if len(self.feet) != expected:
            raise ModelError(f"{self.phase.value} needs {expected} foot contacts, got {len(self.feet)}")
        if len({foot.leg for foot in self.feet}) != len(self.feet):
            raise ModelError("duplicate leg index in foot contacts")
        for foot in self.feet:
            if foot.leg not in LEGS or not (math.isfinite(foot.x) and math.isfinite(foot.y)):
                raise ModelError(f"invalid foot contact {foot}")

    @classmethod
    def from_vector(cls, vec: Sequence[float], phase: Phase, feet: Tuple[FootContact, ...]) -> "TemplateState":
        x, y, phi, xdot, ydot, phidot = (float(v) for v in vec)
        return cls(x, y, phi, xdot, ydot, phidot, phase, feet)

    def vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.phi, self.xdot, self.ydot, self.phidot])

    @property
    def contact_legs(self) -> Tuple[int, ...]:
        return tuple(foot.leg for foot in self.feet)

    @property
    def swing_leg(self) -> Optional[int]:
        if self.phase is not Phase.SINGLE_SUPPORT:
            return None
        return 3 - self.feet[0].leg

    def foot(self, leg: int) -> FootContact:
        for foot in self.feet:
            if foot.leg == leg:
                return foot
        raise LegNotInContact(f"leg {leg} is not in contact")

    def hip(self, r_h: float) -> Tuple[float, float]:
        return hip_position(self.x, self.y, self.phi, r_h)

    def shifted(self, dx: float) -> "TemplateState":
        feet = tuple(replace(foot, x=foot.x + dx) for foot in self.feet)
        return replace(self, x=self.x + dx, feet=feet)


@dataclass(frozen=True)
class LegGeometry:
    L: float
    alpha: float
    psi: float
    eta: float
    hip: Tuple[float, float]
    foot: Tuple[float, float]


@dataclass(frozen=True)
class LegAction:
    """Axial spring force and hip torque commanded for one contact leg."""

    F_s: float
    tau: float


def hip_position(x: float, y: float, phi: float, r_h: float) -> Tuple[float, float]:
    return x - r_h * math.cos(phi), y - r_h * math.sin(phi)


def geometry_from_points(hip: Tuple[float, float], foot: Tuple[float, float], phi: float, r_h: float) -> LegGeometry:
    dx = hip[0] - foot[0]
    dy = hip[1] - foot[1]
    L = math.hypot(dx, dy)
    alpha = math.atan2(dy, dx)
    psi = wrap_angle(alpha - phi)
    eta = math.atan2(r_h * math.sin(psi), L + r_h * math.cos(psi))
    return LegGeometry(L=L, alpha=alpha, psi=psi, eta=eta, hip=hip, foot=foot)


def leg_geometry(state: TemplateState, leg: int, params: TemplateParams) -> LegGeometry:
    foot = state.foot(leg)
    return geometry_from_points(state.hip(params.r_h), (foot.x, foot.y), state.phi, params.r_h)


def spring_force(stiffness: float, L0: float, L: float) -> float:
    """Unilateral axial leg force."""
    return max(0.0, stiffness * (L0 - L))


def leg_wrench(F_s: float, tau: float, geom: LegGeometry) -> Tuple[float, float]:
    """Global force exerted on the trunk by one leg."""
    if geom.L <= 1e-12:
        raise ZeroLegLength("leg length is zero")
    ca, sa = math.cos(geom.alpha), math.sin(geom.alpha)
    f_t = tau / geom.L
    return F_s * ca + f_t * sa, F_s * sa - f_t * ca


def btslip_dynamics(
    state: TemplateState,
    actions: Mapping[int, LegAction],
    params: TemplateParams,
    external: Tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> np.ndarray:
    """Accelerations (xdd, ydd, phidd); ``external`` is a CoM wrench (Fx, Fy, M)."""
    if not state.feet:
        raise NoContactLegs("walking model has no flight phase")
    fx_total, fy_total, moment = external
    sphi, cphi = math.sin(state.phi), math.cos(state.phi)
    for leg in state.contact_legs:
        if leg not in actions:
            raise ModelError(f"no force/torque supplied for contact leg {leg}")
        action = actions[leg]
        geom = leg_geometry(state, leg, params)
        fx, fy = leg_wrench(action.F_s, action.tau, geom)
        fx_total += fx
        fy_total += fy
        moment += action.tau + params.r_h * (fx * sphi - fy * cphi)
    return np.array(
        [
            fx_total / params.m,
            fy_total / params.m - params.g,
            moment / params.J,
        ]
    )


# ----------------------------------------------------------------------
# Phase transitions
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Guards:
    touchdown: float
    takeoff: Dict[int, float]


def touchdown_point(
    hip: Tuple[float, float], params: TemplateParams, attack_angle: float, terrain: Optional[HeightFunction] = None
) -> Tuple[float, float]:
    """End of the landing ray hip + L0 * (cos a, -sin a) and the ground below it."""
    x_f = hip[0] + params.L0 * math.cos(attack_angle)
    return x_f, terrain(x_f) if terrain is not None else 0.0


def touchdown_guard(
    state: TemplateState, params: TemplateParams, attack_angle: float, terrain: Optional[HeightFunction] = None
) -> float:
    hip = state.hip(params.r_h)
    _, ground = touchdown_point(hip, params, attack_angle, terrain)
    return hip[1] - params.L0 * math.sin(attack_angle) - ground


def guards(
    state: TemplateState,
    params: TemplateParams,
    terrain: Optional[HeightFunction] = None,
    attack_angle: Optional[float] = None,
) -> Guards:
    attack = params.alpha0 if attack_angle is None else attack_angle
    takeoff = {leg: leg_geometry(state, leg, params).L - params.L0 for leg in state.contact_legs}
    return Guards(touchdown=touchdown_guard(state, params, attack, terrain), takeoff=takeoff)


def apply_touchdown(
    state: TemplateState, params: TemplateParams, attack_angle: float, terrain: Optional[HeightFunction] = None
) -> TemplateState:
    """SS -> DS: place the swing foot; velocities are continuous (massless legs)."""
    if state.phase is not Phase.SINGLE_SUPPORT:
        raise ModelError("touchdown only happens from single support")
    x_f, y_f = touchdown_point(state.hip(params.r_h), params, attack_angle, terrain)
    new_foot = FootContact(leg=state.swing_leg, x=x_f, y=y_f)
    feet = tuple(sorted(state.feet + (new_foot,), key=lambda foot: foot.leg))
    return replace(state, phase=Phase.DOUBLE_SUPPORT, feet=feet)


def apply_takeoff(state: TemplateState, leg: int) -> TemplateState:
    """DS -> SS: remove the leg that reached its rest length."""
    if state.phase is not Phase.DOUBLE_SUPPORT:
        raise ModelError("takeoff only happens from double support")
    feet = tuple(foot for foot in state.feet if foot.leg != leg)
    return replace(state, phase=Phase.SINGLE_SUPPORT, feet=feet)


def is_fallen(state: TemplateState, params: TemplateParams) -> bool:
    _, y_h = state.hip(params.r_h)
    return state.y <= 0.0 or y_h <= 0.2 * params.L0


def template_energy(state: TemplateState, params: TemplateParams, stiffness: Optional[Mapping[int, float]] = None) -> float:
    """Kinetic + gravitational + spring energy."""
    kinetic = 0.5 * params.m * (state.xdot**2 + state.ydot**2) + 0.5 * params.J * state.phidot**2
    potential = params.m * params.g * state.y
    for leg in state.contact_legs:
        k = params.k0 if stiffness is None else stiffness.get(leg, params.k0)
        compression = max(0.0, params.L0 - leg_geometry(state, leg, params).L)
        potential += 0.5 * k * compression**2
    return kinetic + potential
