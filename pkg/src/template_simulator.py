"""
Hybrid closed-loop integration of the BTSLIP template.

Continuous phases are integrated with ``integrate_with_events``; touchdown,
takeoff, vertical-leg-orientation (VLO) and fall guards end a segment, the
discrete transition is applied and integration restarts. Disturbance window
edges also split segments so the applied force is constant per segment.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .btslip_model import (
    LEGS,
    FootContact,
    Phase,
    TemplateParams,
    TemplateState,
    apply_takeoff,
    apply_touchdown,
    btslip_dynamics,
    hip_position,
    leg_geometry,
    leg_wrench,
    template_energy,
    touchdown_guard,
)
from .disturbance import DisturbanceWindow, ExternalForce, apply_disturbance, breakpoints
from .numerics import Direction, EventFunction, Tolerances, integrate_with_events
from .template_control import TemplateController
from .terrain import HeightFunction

logger = logging.getLogger(__name__)

FALL_HIP = 0
FALL_PITCH = 1
FALL_COM = 2
TOUCHDOWN = 3
TAKEOFF = {1: 4, 2: 5}
VLO = 6
SLACK_TOL = 1e-9

_FALL_REASONS = {FALL_HIP: "hip_height", FALL_PITCH: "trunk_pitch", FALL_COM: "com_height"}


@dataclass(frozen=True)
class FallCriteria:
    hip_height_frac: float = 0.2
    com_height_frac: float = 0.3
    pitch_band: float = 1.0


@dataclass
class HybridEvent:
    time: float
    kind: str
    leg: Optional[int]
    state: TemplateState


@dataclass
class HybridRun:
    status: str  # "completed", "fell" or "section"
    final_time: float
    final_state: TemplateState
    rows: List[Dict[str, object]] = field(default_factory=list)
    events: List[HybridEvent] = field(default_factory=list)
    vlo_sections: List[np.ndarray] = field(default_factory=list)
    vlo_x: List[float] = field(default_factory=list)
    fall_reason: Optional[str] = None

    @property
    def fell(self) -> bool:
        return self.status == "fell"

    def count(self, kind: str) -> int:
        return sum(1 for event in self.events if event.kind == kind)


def section_vector(state: TemplateState) -> np.ndarray:
    """Section coordinates (y, phi, xdot, ydot, phidot); x is dropped."""
    return np.array([state.y, state.phi, state.xdot, state.ydot, state.phidot])


def state_from_section(
    S: Sequence[float],
    params: TemplateParams,
    x: float = 0.0,
    stance_leg: int = 1,
    terrain: Optional[HeightFunction] = None,
) -> TemplateState:
    """Single-support state at VLO: the stance foot lies right below the hip."""
    y, phi, xdot, ydot, phidot = (float(v) for v in S)
    x_h, _ = hip_position(x, y, phi, params.r_h)
    foot = FootContact(leg=stance_leg, x=x_h, y=terrain(x_h) if terrain is not None else 0.0)
    return TemplateState(x, y, phi, xdot, ydot, phidot, Phase.SINGLE_SUPPORT, (foot,))


class TemplateSimulator:
    def __init__(
        self,
        params: TemplateParams,
        controller: TemplateController,
        terrain: Optional[HeightFunction] = None,
        disturbances: Sequence[DisturbanceWindow] = (),
        tolerances: Tolerances = Tolerances(),
        fall: FallCriteria = FallCriteria(),
        max_step: float = 0.01,
    ):
        self.params = params
        self.controller = controller
        self.terrain = terrain
        self.disturbances = list(disturbances)
        self.tolerances = tolerances
        self.fall = fall
        self.max_step = max_step
        self.last_run: Optional[HybridRun] = None

    # ------------------------------------------------------------------
    def run(self, state0: TemplateState, t_end: float, t0: float = 0.0, max_vlo: Optional[int] = None, record: bool = True) -> HybridRun:
        """Integrate from ``state0`` until ``t_end``, a fall, or ``max_vlo`` sections."""
        t, state = t0, state0
        past_vlo = self._past_vlo(state)
        run = HybridRun(status="completed", final_time=t, final_state=state)
        self.last_run = run
        edges = [edge for edge in breakpoints(self.disturbances) if t0 < edge < t_end]

        reason = self._fallen_reason(state)
        if reason is not None:
            return self._finish_fall(run, t, state, reason)

        while t < t_end - 1e-12:
            seg_end = next((edge for edge in edges if edge > t + 1e-12), t_end)
            forces = apply_disturbance(self.disturbances, t)
            phase, feet = state.phase, state.feet
            events = self._events(phase, feet, past_vlo, state)

            def rhs(_t: float, vec: np.ndarray) -> np.ndarray:
                s = TemplateState.from_vector(vec, phase, feet)
                actions = self.controller.leg_actions(s, self.params)
                acc = btslip_dynamics(s, actions, self.params, self._external_wrench(s, forces))
                return np.concatenate((vec[3:], acc))

            traj = integrate_with_events(rhs, state.vector(), (t, seg_end), events, self.tolerances, self.max_step)
            if record:
                start = 1 if run.rows else 0
                for time, vec in zip(traj.times[start:], traj.states[start:]):
                    run.rows.append(self._row(float(time), TemplateState.from_vector(vec, phase, feet), forces, ""))
            t = traj.final_time
            state = TemplateState.from_vector(traj.final_state, phase, feet)

            idx = traj.terminated_by
            if idx is None:
                continue
            if idx in _FALL_REASONS:
                return self._finish_fall(run, t, state, _FALL_REASONS[idx], record, forces)
            if idx == TOUCHDOWN:
                attack = self.controller.attack_angle(state, self.params)
                landing = state.swing_leg
                state = apply_touchdown(state, self.params, attack, self.terrain)
                self._log_event(run, t, "touchdown", landing, state, forces, record)
                slack = self._slack_leg(state, landing)
                if slack is not None:
                    # a trailing leg already past L0 has no rising takeoff crossing left
                    state = apply_takeoff(state, slack)
                    past_vlo = self._past_vlo(state)
                    self._log_event(run, t, "takeoff", slack, state, forces, record)
            elif idx in TAKEOFF.values():
                leg = next(leg for leg, index in TAKEOFF.items() if index == idx)
                state = apply_takeoff(state, leg)
                past_vlo = self._past_vlo(state)
                self._log_event(run, t, "takeoff", leg, state, forces, record)
            elif idx == VLO:
                past_vlo = True
                section = section_vector(state)
                run.vlo_sections.append(section)
                run.vlo_x.append(state.x)
                self.controller.on_vlo(section, state.x)
                self._log_event(run, t, "vlo", state.feet[0].leg, state, forces, record)
                if max_vlo is not None and len(run.vlo_sections) >= max_vlo:
                    run.status = "section"
                    break

        run.final_time = t
        run.final_state = state
        return run

    # ------------------------------------------------------------------
    def _events(self, phase: Phase, feet: Tuple[FootContact, ...], past_vlo: bool, state: TemplateState) -> List[EventFunction]:
        p = self.params
        crit = self.fall
        events = [
            EventFunction(FALL_HIP, lambda t, v: v[1] - p.r_h * math.sin(v[2]) - crit.hip_height_frac * p.L0, Direction.FALLING, True),
            EventFunction(FALL_PITCH, lambda t, v: crit.pitch_band - abs(v[2] - math.pi / 2), Direction.FALLING, True),
            EventFunction(FALL_COM, lambda t, v: v[1] - crit.com_height_frac * p.L0, Direction.FALLING, True),
        ]
        if phase is Phase.SINGLE_SUPPORT:
            if past_vlo:

                def touchdown(t: float, v: np.ndarray) -> float:
                    s = TemplateState.from_vector(v, phase, feet)
                    return touchdown_guard(s, p, self.controller.attack_angle(s, p), self.terrain)

                events.append(EventFunction(TOUCHDOWN, touchdown, Direction.FALLING, True))
            else:
                x_f = feet[0].x

                def vlo(t: float, v: np.ndarray) -> float:
                    return v[0] - p.r_h * math.cos(v[2]) - x_f

                if vlo(0.0, state.vector()) < -1e-12:
                    events.append(EventFunction(VLO, vlo, Direction.RISING, True))
        else:
            for foot in feet:
                fx, fy = foot.x, foot.y

                def takeoff(t: float, v: np.ndarray, fx: float = fx, fy: float = fy) -> float:
                    x_h, y_h = hip_position(v[0], v[1], v[2], p.r_h)
                    return math.hypot(x_h - fx, y_h - fy) - p.L0

                events.append(EventFunction(TAKEOFF[foot.leg], takeoff, Direction.RISING, True))
        return events

    def _slack_leg(self, state: TemplateState, landing: int) -> Optional[int]:
        for leg in state.contact_legs:
            if leg != landing and leg_geometry(state, leg, self.params).L - self.params.L0 > SLACK_TOL:
                return leg
        return None

    def _past_vlo(self, state: TemplateState) -> bool:
        if state.phase is not Phase.SINGLE_SUPPORT:
            return True
        x_h, _ = state.hip(self.params.r_h)
        return x_h - state.feet[0].x >= -1e-12

    def _fallen_reason(self, state: TemplateState) -> Optional[str]:
        p, crit = self.params, self.fall
        _, y_h = state.hip(p.r_h)
        if y_h <= crit.hip_height_frac * p.L0:
            return "hip_height"
        if abs(state.phi - math.pi / 2) >= crit.pitch_band:
            return "trunk_pitch"
        if state.y <= crit.com_height_frac * p.L0:
            return "com_height"
        return None

    def _finish_fall(
        self, run: HybridRun, t: float, state: TemplateState, reason: str, record: bool = True, forces: Sequence[ExternalForce] = ()
    ) -> HybridRun:
        logger.warning(f"template fell at t={t:.3f}s ({reason})")
        run.status = "fell"
        run.fall_reason = reason
        run.final_time = t
        run.final_state = state
        run.events.append(HybridEvent(t, "fall", None, state))
        if record:
            run.rows.append(self._row(t, state, forces, "fall"))
        return run

    def _log_event(
        self, run: HybridRun, t: float, kind: str, leg: Optional[int], state: TemplateState, forces: Sequence[ExternalForce], record: bool
    ) -> None:
        logger.debug(f"{kind} leg={leg} t={t:.4f}")
        run.events.append(HybridEvent(t, kind, leg, state))
        if record:
            run.rows.append(self._row(t, state, forces, kind))

    # ------------------------------------------------------------------
    def _application_point(self, state: TemplateState, point: str) -> Tuple[float, float]:
        if point == "stance_foot":
            foot = min(state.feet, key=lambda f: f.x)
            return foot.x, foot.y
        if point == "right_foot":
            if 2 in state.contact_legs:
                foot = state.foot(2)
                return foot.x, foot.y
            return state.hip(self.params.r_h)
        return state.x, state.y

    def _external_wrench(self, state: TemplateState, forces: Sequence[ExternalForce]) -> Tuple[float, float, float]:
        fx_total = fy_total = moment = 0.0
        for force in forces:
            fx_total += force.fx
            fy_total += force.fy
            if force.point != "com":
                px, py = self._application_point(state, force.point)
                moment += (px - state.x) * force.fy - (py - state.y) * force.fx
        return fx_total, fy_total, moment

    def _row(self, t: float, state: TemplateState, forces: Sequence[ExternalForce], event: str) -> Dict[str, object]:
        p = self.params
        stiffness = self.controller.stiffness(state, p)
        actions = self.controller.leg_actions(state, p)
        fx_ext, fy_ext, _ = self._external_wrench(state, forces)
        row: Dict[str, object] = {
            "time": t,
            "x": state.x,
            "y": state.y,
            "phi": state.phi,
            "xdot": state.xdot,
            "ydot": state.ydot,
            "phidot": state.phidot,
            "phase": "SS" if state.phase is Phase.SINGLE_SUPPORT else "DS",
        }
        for leg in LEGS:
            in_contact = leg in state.contact_legs
            row[f"contact_{leg}"] = int(in_contact)
            if in_contact:
                geom = leg_geometry(state, leg, p)
                action = actions[leg]
                grf_x, grf_y = leg_wrench(action.F_s, action.tau, geom)
                values = (state.foot(leg).x, geom.L, stiffness[leg], action.F_s, action.tau, grf_x, grf_y)
            else:
                values = (math.nan,) * 7
            for name, value in zip(("foot_x", "L", "k", "F_s", "tau", "grf_x", "grf_y"), values):
                row[f"{name}_{leg}"] = value
        vpp = self.controller.vpp_input()
        row["r_vpp"] = vpp.r_vpp if vpp is not None else math.nan
        row["gamma"] = vpp.gamma if vpp is not None else math.nan
        row["f_ext_x"] = fx_ext
        row["f_ext_y"] = fy_ext
        row["energy"] = template_energy(state, p, stiffness)
        row["event"] = event
        return row
