"""
Control laws for the BTSLIP template.

* VPP: hip torques redirect every leg force through a virtual pivot above the CoM.
* FDC: hip torques aim the leg force so that it always produces a trunk-righting
  moment, clamped to the feasible (unilateral / friction) directions.
* VBLA: swing-leg touchdown direction from the normalized CoM velocity.
* Feedback linearization: leg-stiffness increments that drive the CoM height
  (and in double support the forward speed) onto a periodic reference gait.

The controller classes at the bottom compose these laws for the closed loop.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .btslip_model import LegAction, LegGeometry, Phase, TemplateParams, TemplateState, leg_geometry, spring_force
from .errors import (
    DegenerateDenominator,
    EmptyFeasibleSet,
    InvalidMeasurement,
    ReferenceOutOfRange,
    SingularDecoupling,
    ZeroVector,
)
from .numerics import pseudo_inverse

logger = logging.getLogger(__name__)

FEASIBLE_MARGIN = 1e-3
DECOUPLING_THRESHOLD = 1e-9
TOUCHDOWN_LENGTH_TOL = 1e-6
MIN_STIFFNESS_FRACTION = 0.05
MAX_STIFFNESS_FACTOR = 4.0


@dataclass(frozen=True)
class FdcGains:
    c: float = 10.0
    d: float = 1.0
    mu_vbla: float = 0.5
    mu_fric_hat: Optional[float] = None

    def __post_init__(self) -> None:
        if self.c <= 0 or self.d <= 0:
            raise ValueError("FDC gains c and d must be positive")
        if not 0.0 <= self.mu_vbla <= 1.0:
            raise ValueError("mu_vbla must lie in [0, 1]")
        if self.mu_fric_hat is not None and self.mu_fric_hat <= 0:
            raise ValueError("friction estimate must be positive")


@dataclass(frozen=True)
class VppInput:
    r_vpp: float = 0.1
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if self.r_vpp < 0:
            raise ValueError("r_vpp must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.r_vpp, self.gamma])


@dataclass(frozen=True)
class FeedbackGains:
    """Gains of the height (k1, k2) and forward-speed (k3) error dynamics."""

    k1: float = 20.0
    k2: float = 100.0
    k3: float = 10.0

    def __post_init__(self) -> None:
        if min(self.k1, self.k2, self.k3) <= 0:
            raise ValueError("feedback gains must be positive")


# ----------------------------------------------------------------------
# Reference gait
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ReferenceGait:
    """CoM height and forward speed of one stride, parameterized by x.

    Knots start at x = 0 (the stride's first VLO); evaluation points are taken
    relative to the same origin. With ``periodic`` the profile repeats every
    ``stride_length``.
    """

    stride_length: float
    x_knots: np.ndarray
    y_knots: np.ndarray
    xdot_knots: np.ndarray
    periodic: bool = True
    _ybar: CubicSpline = field(init=False, repr=False)
    _xdotbar: CubicSpline = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.stride_length <= 0:
            raise ValueError("stride length must be positive")
        bc = "periodic" if self.periodic else "not-a-knot"
        extrapolate = "periodic" if self.periodic else False
        y = np.array(self.y_knots, dtype=float)
        xdot = np.array(self.xdot_knots, dtype=float)
        if self.periodic:
            y[-1] = y[0]
            xdot[-1] = xdot[0]
        object.__setattr__(self, "_ybar", CubicSpline(self.x_knots, y, bc_type=bc, extrapolate=extrapolate))
        object.__setattr__(self, "_xdotbar", CubicSpline(self.x_knots, xdot, bc_type=bc, extrapolate=extrapolate))

    @classmethod
    def from_samples(
        cls, x: Sequence[float], y: Sequence[float], xdot: Sequence[float], knots: int = 512, periodic: bool = True
    ) -> "ReferenceGait":
        """Resample a recorded stride onto a uniform x grid."""
        x = np.asarray(x, dtype=float)
        order = np.argsort(x, kind="stable")
        x, y, xdot = x[order], np.asarray(y, dtype=float)[order], np.asarray(xdot, dtype=float)[order]
        x = x - x[0]
        stride = float(x[-1])
        grid = np.linspace(0.0, stride, knots)
        return cls(
            stride_length=stride,
            x_knots=grid,
            y_knots=np.interp(grid, x, y),
            xdot_knots=np.interp(grid, x, xdot),
            periodic=periodic,
        )

    def _check(self, x: float, value: float) -> float:
        if not math.isfinite(value):
            raise ReferenceOutOfRange(f"reference gait undefined at x={x:.4f}")
        return value

    def ybar(self, x: float, nu: int = 0) -> float:
        return self._check(x, float(self._ybar(x, nu)))

    def xdotbar(self, x: float, nu: int = 0) -> float:
        return self._check(x, float(self._xdotbar(x, nu)))


# ----------------------------------------------------------------------
# Control laws
# ----------------------------------------------------------------------
def vpp_tan_beta(geom: LegGeometry, vpp: VppInput, params: TemplateParams) -> float:
    psi = geom.psi
    numerator = params.r_h * math.sin(psi) + vpp.r_vpp * math.sin(psi - vpp.gamma)
    denominator = geom.L + params.r_h * math.cos(psi) + vpp.r_vpp * math.cos(psi - vpp.gamma)
    if abs(denominator) < 1e-9:
        raise DegenerateDenominator(f"VPP redirect denominator {denominator:.3e}")
    return numerator / denominator


def vpp_torque(geom: LegGeometry, F_s: float, vpp: VppInput, params: TemplateParams) -> float:
    """Hip torque that points the leg force at the virtual pivot (trunk pitch enters through ``geom.psi``)."""
    return F_s * geom.L * vpp_tan_beta(geom, vpp, params)


def beta_bounds(alpha: float, mu_hat: Optional[float] = None, eps: float = FEASIBLE_MARGIN) -> Tuple[float, float]:
    """Closed interval of admissible redirect angles for a leg at angle alpha."""
    lo = -math.pi / 2 + eps
    hi = math.pi / 2 - eps
    if mu_hat is None:
        lo = max(lo, alpha - math.pi + eps)
        hi = min(hi, alpha - eps)
    else:
        cone = math.atan(mu_hat)
        lo = max(lo, alpha - math.pi / 2 - cone + eps)
        hi = min(hi, alpha - math.pi / 2 + cone - eps)
    if lo > hi:
        raise EmptyFeasibleSet(f"no admissible force direction for leg angle {alpha:.4f}")
    return lo, hi


def clamp_beta(beta: float, alpha: float, mu_hat: Optional[float] = None, eps: float = FEASIBLE_MARGIN) -> float:
    lo, hi = beta_bounds(alpha, mu_hat, eps)
    return min(max(beta, lo), hi)


def fdc_beta_tilde(phi_tilde: float, phi_tilde_dot: float, gains: FdcGains) -> float:
    return -gains.c * phi_tilde - gains.d * phi_tilde_dot


def fdc_beta(
    phi_tilde: float, phi_tilde_dot: float, gains: FdcGains, alpha: float, offset: float = 0.0
) -> float:
    """Force-direction law; ``offset`` is the leg-to-CoM-line angle (eta)."""
    if not (math.isfinite(phi_tilde) and -math.pi / 2 <= phi_tilde <= math.pi / 2):
        raise InvalidMeasurement(f"trunk deviation {phi_tilde} outside [-pi/2, pi/2]")
    raw = offset + fdc_beta_tilde(phi_tilde, phi_tilde_dot, gains)
    beta = clamp_beta(raw, alpha, gains.mu_fric_hat)
    if beta != raw:
        logger.debug(f"FDC redirect clamped from {raw:.4f} to {beta:.4f}")
    return beta


def vbla_touchdown(v: Sequence[float], L_ref: float, mu: float, g: float) -> float:
    """Touchdown attack angle from the velocity-gravity blend."""
    if L_ref <= 0:
        raise ValueError("reference leg length must be positive")
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    scale = math.sqrt(g * L_ref)
    o_x = mu * v[0] / scale
    o_y = mu * v[1] / scale - (1.0 - mu)
    if math.hypot(o_x, o_y) < 1e-12:
        raise ZeroVector("velocity-gravity blend vanished")
    return math.atan2(abs(o_y), o_x)


# ----------------------------------------------------------------------
# Feedback linearization of the leg stiffness
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class _LegInputMap:
    drift_x: float
    drift_y: float
    b_x: float
    b_y: float


def _input_maps(state: TemplateState, params: TemplateParams, vpp: VppInput) -> Dict[int, _LegInputMap]:
    """Per-leg drift and input columns of (xdd, ydd) for k_i = k0 + u_i."""
    maps: Dict[int, _LegInputMap] = {}
    for leg in state.contact_legs:
        geom = leg_geometry(state, leg, params)
        tan_b = vpp_tan_beta(geom, vpp, params)
        ca, sa = math.cos(geom.alpha), math.sin(geom.alpha)
        e_x = ca + tan_b * sa
        e_y = sa - tan_b * ca
        compression = max(0.0, params.L0 - geom.L)
        per_u = compression / params.m
        maps[leg] = _LegInputMap(
            drift_x=params.k0 * per_u * e_x,
            drift_y=params.k0 * per_u * e_y,
            b_x=per_u * e_x,
            b_y=per_u * e_y,
        )
    return maps


def stiffness_feedback(
    state: TemplateState,
    ref: ReferenceGait,
    gains: FeedbackGains,
    params: TemplateParams,
    vpp: VppInput,
    x_ref: Optional[float] = None,
) -> Dict[int, float]:
    """Stiffness increments u_i (k_i = k0 + u_i) linearizing the CoM errors.

    ``x_ref`` is the abscissa at which the reference is evaluated (defaults to
    the CoM x).
    """
    xr = state.x if x_ref is None else x_ref
    ybar, dy, ddy = ref.ybar(xr), ref.ybar(xr, 1), ref.ybar(xr, 2)
    maps = _input_maps(state, params, vpp)
    xdd0 = sum(m.drift_x for m in maps.values())
    ydd0 = sum(m.drift_y for m in maps.values()) - params.g

    h1 = state.y - ybar
    lf_h1 = state.ydot - dy * state.xdot
    lf2_h1 = ydd0 - ddy * state.xdot**2 - dy * xdd0
    target1 = -lf2_h1 - gains.k1 * lf_h1 - gains.k2 * h1
    row1 = {leg: m.b_y - dy * m.b_x for leg, m in maps.items()}

    legs = state.contact_legs
    if state.phase is Phase.SINGLE_SUPPORT:
        (leg,) = legs
        if abs(row1[leg]) < DECOUPLING_THRESHOLD:
            raise SingularDecoupling(f"decoupling term {row1[leg]:.3e} in single support")
        u = {leg: target1 / row1[leg]}
    else:
        at_touchdown = any(abs(leg_geometry(state, leg, params).L - params.L0) < TOUCHDOWN_LENGTH_TOL for leg in legs)
        row = np.array([[row1[leg] for leg in legs]])
        if at_touchdown:
            if np.max(np.abs(row)) < DECOUPLING_THRESHOLD:
                raise SingularDecoupling("decoupling row vanished at touchdown")
            sol = pseudo_inverse(row) @ np.array([target1])
        else:
            h2 = state.xdot - ref.xdotbar(xr)
            lf_h2 = xdd0 - ref.xdotbar(xr, 1) * state.xdot
            A = np.vstack([row, [[maps[leg].b_x for leg in legs]]])
            if abs(np.linalg.det(A)) < DECOUPLING_THRESHOLD**2:
                raise SingularDecoupling("double-support decoupling matrix is singular")
            sol = np.linalg.solve(A, np.array([target1, -lf_h2 - gains.k3 * h2]))
        u = {leg: float(value) for leg, value in zip(legs, np.ravel(sol))}

    floor = -(1.0 - MIN_STIFFNESS_FRACTION) * params.k0
    ceiling = (MAX_STIFFNESS_FACTOR - 1.0) * params.k0
    for leg, value in u.items():
        clamped = min(max(value, floor), ceiling)
        if clamped != value:
            logger.debug(f"stiffness increment {value:.1f} clamped to {clamped:.1f} for leg {leg}")
            u[leg] = clamped
    return u


# ----------------------------------------------------------------------
# Closed-loop controllers
# ----------------------------------------------------------------------
StridePolicy = Callable[[np.ndarray], VppInput]


class TemplateController:
    """Base closed-loop controller: conservative springs, fixed or VBLA touchdown."""

    name = "passive"

    def __init__(self, touchdown: str = "fixed", mu_vbla: float = 0.5):
        if touchdown not in ("fixed", "vbla"):
            raise ValueError(f"unknown touchdown rule {touchdown!r}")
        self.touchdown = touchdown
        self.mu_vbla = mu_vbla

    def attack_angle(self, state: TemplateState, params: TemplateParams) -> float:
        if self.touchdown == "vbla":
            return vbla_touchdown((state.xdot, state.ydot), params.L0, self.mu_vbla, params.g)
        return params.alpha0

    def stiffness(self, state: TemplateState, params: TemplateParams) -> Dict[int, float]:
        return {leg: params.k0 for leg in state.contact_legs}

    def hip_torque(self, state: TemplateState, geom: LegGeometry, F_s: float, params: TemplateParams) -> float:
        return 0.0

    def leg_actions(self, state: TemplateState, params: TemplateParams) -> Dict[int, LegAction]:
        stiffness = self.stiffness(state, params)
        actions: Dict[int, LegAction] = {}
        for leg in state.contact_legs:
            geom = leg_geometry(state, leg, params)
            F_s = spring_force(stiffness[leg], params.L0, geom.L)
            actions[leg] = LegAction(F_s=F_s, tau=self.hip_torque(state, geom, F_s, params))
        return actions

    def on_vlo(self, section: np.ndarray, x: float) -> None:
        """Once-per-stride hook called at every vertical leg orientation."""

    def vpp_input(self) -> Optional[VppInput]:
        return None


PassiveController = TemplateController


class VppController(TemplateController):
    """VPP redirect; an optional stride policy re-places the pivot at each VLO."""

    name = "vpp"

    def __init__(
        self,
        vpp: VppInput = VppInput(),
        stride_policy: Optional[StridePolicy] = None,
        touchdown: str = "fixed",
        mu_vbla: float = 0.5,
    ):
        super().__init__(touchdown, mu_vbla)
        self.vpp = vpp
        self.stride_policy = stride_policy
        if stride_policy is not None:
            self.name = "vpp+dlqr"

    def hip_torque(self, state: TemplateState, geom: LegGeometry, F_s: float, params: TemplateParams) -> float:
        return vpp_torque(geom, F_s, self.vpp, params)

    def on_vlo(self, section: np.ndarray, x: float) -> None:
        if self.stride_policy is not None:
            self.vpp = self.stride_policy(section)
            logger.debug(f"VPP moved to r={self.vpp.r_vpp:.4f} gamma={self.vpp.gamma:.4f}")

    def vpp_input(self) -> Optional[VppInput]:
        return self.vpp


class CombinedController(VppController):
    """VPP + DLQR for posture, stiffness feedback linearization for the CoM."""

    name = "combined"

    def __init__(
        self,
        reference: ReferenceGait,
        vpp: VppInput = VppInput(),
        stride_policy: Optional[StridePolicy] = None,
        gains: FeedbackGains = FeedbackGains(),
        touchdown: str = "fixed",
        mu_vbla: float = 0.5,
    ):
        super().__init__(vpp, stride_policy, touchdown, mu_vbla)
        self.name = "combined"
        self.reference = reference
        self.gains = gains
        self.x_origin: Optional[float] = None

    def on_vlo(self, section: np.ndarray, x: float) -> None:
        super().on_vlo(section, x)
        self.x_origin = x

    def stiffness(self, state: TemplateState, params: TemplateParams) -> Dict[int, float]:
        if self.x_origin is None:
            self.x_origin = state.x
        try:
            u = stiffness_feedback(
                state, self.reference, self.gains, params, self.vpp, x_ref=state.x - self.x_origin
            )
        except SingularDecoupling as exc:
            logger.debug(f"stiffness feedback off: {exc}")
            u = {}
        return {leg: params.k0 + u.get(leg, 0.0) for leg in state.contact_legs}


class FdcController(TemplateController):
    """Force-direction control with VBLA leg placement."""

    name = "fdc"

    def __init__(self, gains: FdcGains = FdcGains(), touchdown: str = "vbla"):
        super().__init__(touchdown, gains.mu_vbla)
        self.gains = gains

    def hip_torque(self, state: TemplateState, geom: LegGeometry, F_s: float, params: TemplateParams) -> float:
        beta = fdc_beta(state.phi - math.pi / 2, state.phidot, self.gains, geom.alpha, offset=geom.eta)
        return F_s * geom.L * math.tan(beta)
