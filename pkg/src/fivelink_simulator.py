"""
Closed-loop walking of the 5-link robot: stance dynamics with a pinned foot,
swing-foot strike, impact map and relabeling.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .disturbance import DisturbanceWindow, ExternalForce, apply_disturbance, breakpoints
from .fivelink_model import (
    BASE_X,
    BASE_Y,
    N_DOF,
    STANCE_HIP,
    TRUNK,
    RobotParams,
    RobotState,
    center_of_mass,
    com_jacobian,
    constrained_accel,
    dynamics_terms,
    foot_position,
    impact_map,
    kinetic_energy,
    leg_joint_angles,
    place_stance_foot,
    point_jacobian,
    potential_energy,
    stance_consistent_velocity,
    trunk_pitch,
)
from .leg_force_planner import PlannerGains, plan_forces, stacked_polar_force, stacked_task_force
from .numerics import Direction, EventFunction, Tolerances, integrate_with_events
from .terrain import HeightFunction
from .torque_mapper import osc_torques, polar_jt_torques

logger = logging.getLogger(__name__)

FALL_PITCH = 0
FALL_COM = 1
IMPACT = 2

MAPPERS = ("osc", "polar-jt")


@dataclass(frozen=True)
class WalkerSettings:
    min_step: float = 0.05  # swing foot must pass the stance foot by this much before it can land
    pitch_band: float = 1.0
    com_height_frac: float = 0.3
    max_step: float = 0.005


class FiveLinkController:
    """Leg-force planner followed by a torque mapper."""

    def __init__(self, gains: PlannerGains = PlannerGains(), mapper: str = "osc"):
        if mapper not in MAPPERS:
            raise ValueError(f"unknown torque mapper {mapper!r}")
        self.gains = gains
        self.mapper = mapper

    def torques(self, state: RobotState, params: RobotParams, terms=None) -> np.ndarray:
        stance, swing = plan_forces(state, params, self.gains)
        if self.mapper == "osc":
            terms = terms or dynamics_terms(state, params)
            return osc_torques(stacked_task_force(stance, swing), terms)
        return polar_jt_torques(state, stacked_polar_force(stance, swing), params)


@dataclass
class WalkEvent:
    time: float
    kind: str
    state: RobotState


@dataclass
class WalkRun:
    status: str
    final_time: float
    final_state: RobotState
    rows: List[Dict[str, object]] = field(default_factory=list)
    events: List[WalkEvent] = field(default_factory=list)
    sections: List[np.ndarray] = field(default_factory=list)
    fall_reason: Optional[str] = None

    @property
    def fell(self) -> bool:
        return self.status == "fell"


def section_of(state: RobotState) -> np.ndarray:
    """Post-impact coordinates without the forward base position."""
    keep = [i for i in range(2 * N_DOF) if i != BASE_X]
    return state.vector()[keep]


def initial_state(
    params: RobotParams,
    L_stance: float = 0.35,
    alpha_stance: float = math.pi / 2 + 0.12,
    L_swing: float = 0.33,
    alpha_swing: float = math.pi / 2 - 0.35,
    q5: float = -0.09,
    forward_speed: float = 0.5,
    jitter: float = 0.0,
    seed: int = 0,
) -> RobotState:
    """Start of a stance phase with the stance foot at the origin.

    The stance hip rate is chosen so the hip moves forward at ``forward_speed``;
    ``jitter`` adds seeded Gaussian noise to the joint rates.
    """
    q = np.zeros(N_DOF)
    q[TRUNK] = q5
    q[1], q[3] = leg_joint_angles(L_stance, alpha_stance, q5, params)
    q[0], q[2] = leg_joint_angles(L_swing, alpha_swing, q5, params)
    q = place_stance_foot(q, params)

    rates = np.zeros(TRUNK + 1)
    rates[STANCE_HIP] = 1.0
    base_per_rate = stance_consistent_velocity(q, rates, params)[BASE_X:]
    rates[STANCE_HIP] = float(linalg.lstsq(base_per_rate.reshape(2, 1), np.array([forward_speed, 0.0]))[0][0])
    rates[0] = -rates[STANCE_HIP]
    if jitter > 0:
        rates = rates + np.random.default_rng(seed).normal(0.0, jitter, size=rates.shape)
    return RobotState(q, stance_consistent_velocity(q, rates, params), stance_leg=1)


class FiveLinkSimulator:
    def __init__(
        self,
        params: RobotParams,
        controller: FiveLinkController,
        terrain: Optional[HeightFunction] = None,
        disturbances: Sequence[DisturbanceWindow] = (),
        tolerances: Tolerances = Tolerances(),
        settings: WalkerSettings = WalkerSettings(),
    ):
        self.params = params
        self.controller = controller
        self.terrain = terrain
        self.disturbances = list(disturbances)
        self.tolerances = tolerances
        self.settings = settings
        self.last_run: Optional[WalkRun] = None

    def _ground(self, x: float) -> float:
        return self.terrain(x) if self.terrain is not None else 0.0

    def _generalized_force(self, state: RobotState, forces: Sequence[ExternalForce]) -> Optional[np.ndarray]:
        if not forces:
            return None
        total = np.zeros(N_DOF)
        for force in forces:
            if force.point == "com":
                J = com_jacobian(state.q, self.params)
            elif force.point == "stance_foot" or (force.point == "right_foot" and state.stance_leg == 2):
                J = point_jacobian(state.q, self.params, "foot_stance")
            else:
                J = point_jacobian(state.q, self.params, "foot_swing")
            total += J.T @ np.array([force.fx, force.fy])
        return total

    def _accel(self, state: RobotState, forces: Sequence[ExternalForce]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        terms = dynamics_terms(state, self.params)
        u = self.controller.torques(state, self.params, terms)
        qdd, F_st = constrained_accel(state, u, self.params, terms, self._generalized_force(state, forces))
        return qdd, F_st, u

    def _events(self, stance_x: float, nominal_com: float) -> List[EventFunction]:
        p, s = self.params, self.settings

        def impact(t: float, v: np.ndarray) -> float:
            foot = foot_position(v[:N_DOF], p, "swing")
            return (foot[1] - self._ground(foot[0])) + max(0.0, stance_x + s.min_step - foot[0])

        return [
            EventFunction(FALL_PITCH, lambda t, v: s.pitch_band - abs(v[TRUNK]), Direction.FALLING, True),
            EventFunction(FALL_COM, lambda t, v: center_of_mass(v[:N_DOF], p)[1] - s.com_height_frac * nominal_com, Direction.FALLING, True),
            EventFunction(IMPACT, impact, Direction.FALLING, True),
        ]

    def run(self, state0: RobotState, t_end: float, t0: float = 0.0, max_impacts: Optional[int] = None, record: bool = True) -> WalkRun:
        t, state = t0, state0
        nominal_com = float(center_of_mass(state0.q, self.params)[1])
        edges = [edge for edge in breakpoints(self.disturbances) if t0 < edge < t_end]
        run = WalkRun(status="completed", final_time=t, final_state=state)
        self.last_run = run

        while t < t_end - 1e-12:
            seg_end = next((edge for edge in edges if edge > t + 1e-12), t_end)
            forces = apply_disturbance(self.disturbances, t)
            stance_leg = state.stance_leg
            stance_x = float(foot_position(state.q, self.params, "stance")[0])

            def rhs(_t: float, vec: np.ndarray) -> np.ndarray:
                qdd, _, _ = self._accel(RobotState.from_vector(vec, stance_leg), forces)
                return np.concatenate((vec[N_DOF:], qdd))

            traj = integrate_with_events(
                rhs, state.vector(), (t, seg_end), self._events(stance_x, nominal_com), self.tolerances, self.settings.max_step
            )
            if record:
                start = 1 if run.rows else 0
                for time, vec in zip(traj.times[start:], traj.states[start:]):
                    run.rows.append(self._row(float(time), RobotState.from_vector(vec, stance_leg), forces, ""))
            t = traj.final_time
            state = RobotState.from_vector(traj.final_state, stance_leg)

            if traj.terminated_by in (FALL_PITCH, FALL_COM):
                reason = "trunk_pitch" if traj.terminated_by == FALL_PITCH else "com_height"
                logger.warning(f"robot fell at t={t:.3f}s ({reason})")
                run.status, run.fall_reason = "fell", reason
                run.events.append(WalkEvent(t, "fall", state))
                if record:
                    run.rows.append(self._row(t, state, forces, "fall"))
                break
            if traj.terminated_by == IMPACT:
                state = impact_map(state, self.params).state
                run.sections.append(section_of(state))
                run.events.append(WalkEvent(t, "impact", state))
                logger.debug(f"impact at t={t:.4f}, stance leg now {state.stance_leg}")
                if record:
                    run.rows.append(self._row(t, state, forces, "impact"))
                if max_impacts is not None and len(run.sections) >= max_impacts:
                    run.status = "section"
                    break

        run.final_time = t
        run.final_state = state
        return run

    def _row(self, t: float, state: RobotState, forces: Sequence[ExternalForce], event: str) -> Dict[str, object]:
        p = self.params
        qdd, F_st, u = self._accel(state, forces)
        com = center_of_mass(state.q, p)
        com_v = com_jacobian(state.q, p) @ state.qdot
        swing_foot = foot_position(state.q, p, "swing")
        row: Dict[str, object] = {"time": t}
        for i in range(5):
            row[f"q{i + 1}"] = state.q[i]
        row["x_b"], row["y_b"] = state.q[BASE_X], state.q[BASE_Y]
        for i in range(5):
            row[f"qdot{i + 1}"] = state.qdot[i]
        row["xdot_b"], row["ydot_b"] = state.qdot[BASE_X], state.qdot[BASE_Y]
        for i in range(4):
            row[f"u{i + 1}"] = u[i]
        row["com_x"], row["com_y"] = com
        row["com_xdot"], row["com_ydot"] = com_v
        row["phi"] = trunk_pitch(state.q)
        row["stance_leg"] = state.stance_leg
        row["grf_x"], row["grf_y"] = F_st
        row["swing_foot_height"] = swing_foot[1] - self._ground(swing_foot[0])
        row["energy"] = kinetic_energy(state, p) + potential_energy(state.q, p)
        f_ext = [sum(f.fx for f in forces), sum(f.fy for f in forces)]
        row["f_ext_x"], row["f_ext_y"] = f_ext
        row["event"] = event
        return row
