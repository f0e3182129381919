"""
Walking state machine and ankle torque laws for a robot with flat feet.

The machine only consumes measurements (heel/toe heights, toe and CoM
abscissae), so it runs against recorded event traces as well as inside a
simulation loop.

Phases, named after the leg that starts the cycle in swing:

* S1 pre-swing: swing toe still on the ground, stance leg in stance mode;
* S2 initial swing: swing foot airborne; push-off is armed once the CoM
  passes the stance toe;
* S3 mid-swing: stance leg pushing off;
* S4 terminal swing: swing heel has landed; as soon as the trailing heel lifts
  the roles swap and the cycle restarts in S1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Tuple

import numpy as np
import pandas as pd

from .errors import InvalidMeasurement

logger = logging.getLogger(__name__)

CONTACT_EPS = 1e-3
TRACE_COLUMNS = ("time", "heel_1", "toe_1", "heel_2", "toe_2", "toe_x_1", "toe_x_2", "com_x")
PUSH_OFF_LAWS = ("as_printed", "error_based")


class FootCondition(str, Enum):
    HEEL_STRIKE = "HeelStrike"
    FOOT_FLAT = "FootFlat"
    HEEL_OFF = "HeelOff"
    TOE_OFF = "ToeOff"


class FsmPhase(str, Enum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"
    S4 = "S4"


class LegMode(str, Enum):
    SWING = "Swing"
    STANCE = "Stance"
    STANCE_PUSH_OFF = "StancePushOff"


class AnkleMode(str, Enum):
    HEEL_STRIKE_DAMPING = "HeelStrikeDamping"
    PUSH_OFF = "PushOff"
    SWING_SERVO = "SwingServo"


def _check_finite(*values: float) -> None:
    if not all(math.isfinite(v) for v in values):
        raise InvalidMeasurement(f"non-finite measurement in {values}")


def classify_foot(p_heel: float, p_toe: float, eps: float = CONTACT_EPS) -> FootCondition:
    """Contact condition of one foot from its heel and toe heights."""
    _check_finite(p_heel, p_toe)
    heel_down, toe_down = p_heel <= eps, p_toe <= eps
    if heel_down and toe_down:
        return FootCondition.FOOT_FLAT
    if heel_down:
        return FootCondition.HEEL_STRIKE
    if toe_down:
        return FootCondition.HEEL_OFF
    return FootCondition.TOE_OFF


@dataclass(frozen=True)
class FsmState:
    phase: FsmPhase
    modes: Tuple[LegMode, LegMode]  # (leg 1, leg 2)
    swing_leg: int

    def __post_init__(self) -> None:
        if self.swing_leg not in (1, 2):
            raise ValueError("swing leg index must be 1 or 2")
        expected = _modes_for(self.phase, self.swing_leg)
        if tuple(self.modes) != expected:
            raise ValueError(f"modes {self.modes} inconsistent with {self.phase.value} (swing leg {self.swing_leg})")

    @property
    def stance_leg(self) -> int:
        return 3 - self.swing_leg

    def mode(self, leg: int) -> LegMode:
        return self.modes[leg - 1]

    @classmethod
    def start(cls, swing_leg: int = 1) -> "FsmState":
        return cls(FsmPhase.S1, _modes_for(FsmPhase.S1, swing_leg), swing_leg)


def _modes_for(phase: FsmPhase, swing_leg: int) -> Tuple[LegMode, LegMode]:
    if phase in (FsmPhase.S1, FsmPhase.S2):
        swing, stance = LegMode.SWING, LegMode.STANCE
    elif phase == FsmPhase.S3:
        swing, stance = LegMode.SWING, LegMode.STANCE_PUSH_OFF
    else:
        # landed leg damps the strike, trailing leg keeps pushing until its heel lifts
        swing, stance = LegMode.STANCE, LegMode.STANCE_PUSH_OFF
    return (swing, stance) if swing_leg == 1 else (stance, swing)


@dataclass(frozen=True)
class FsmMeasurements:
    conditions: Tuple[FootCondition, FootCondition]  # (leg 1, leg 2)
    p_toe_stance: float
    p_com_x: float
    heel_touchdown: bool

    @classmethod
    def from_heights(
        cls,
        heels: Tuple[float, float],
        toes: Tuple[float, float],
        toe_x: Tuple[float, float],
        com_x: float,
        swing_leg: int,
        eps: float = CONTACT_EPS,
    ) -> "FsmMeasurements":
        _check_finite(*heels, *toes, *toe_x, com_x)
        conditions = (classify_foot(heels[0], toes[0], eps), classify_foot(heels[1], toes[1], eps))
        return cls(
            conditions=conditions,
            p_toe_stance=float(toe_x[2 - swing_leg]),
            p_com_x=float(com_x),
            heel_touchdown=heels[swing_leg - 1] <= eps,
        )


def fsm_step(fsm: FsmState, measurements: FsmMeasurements) -> FsmState:
    """One transition of the walking machine; returns ``fsm`` when nothing fires."""
    _check_finite(measurements.p_toe_stance, measurements.p_com_x)
    swing_cond = measurements.conditions[fsm.swing_leg - 1]
    stance_cond = measurements.conditions[fsm.stance_leg - 1]

    if fsm.phase == FsmPhase.S1 and swing_cond == FootCondition.TOE_OFF:
        nxt = FsmPhase.S2
    elif fsm.phase == FsmPhase.S2 and measurements.p_com_x >= measurements.p_toe_stance:
        nxt = FsmPhase.S3
    elif fsm.phase == FsmPhase.S3 and measurements.heel_touchdown:
        nxt = FsmPhase.S4
    elif fsm.phase == FsmPhase.S4 and stance_cond in (FootCondition.HEEL_OFF, FootCondition.TOE_OFF):
        logger.debug(f"FSM swap: leg {fsm.stance_leg} starts swinging")
        return FsmState.start(fsm.stance_leg)
    else:
        return fsm
    logger.debug(f"FSM {fsm.phase.value} -> {nxt.value} (swing leg {fsm.swing_leg})")
    return FsmState(nxt, _modes_for(nxt, fsm.swing_leg), fsm.swing_leg)


# ----------------------------------------------------------------------
# Ankle torques
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class AnkleGains:
    k_a: float = 15.0
    q_a_sw: float = math.pi / 6
    q_a_p: float = -math.pi / 9

    def __post_init__(self) -> None:
        if self.k_a <= 0:
            raise ValueError("ankle gain k_a must be positive")


def ankle_mode(fsm: FsmState, leg: int) -> AnkleMode:
    mode = fsm.mode(leg)
    if mode == LegMode.SWING:
        return AnkleMode.SWING_SERVO
    if mode == LegMode.STANCE_PUSH_OFF:
        return AnkleMode.PUSH_OFF
    return AnkleMode.HEEL_STRIKE_DAMPING


def ankle_torque(
    mode: AnkleMode,
    q_i: float,
    qdot_i: float,
    gains: AnkleGains = AnkleGains(),
    push_off: str = "as_printed",
) -> float:
    """Ankle torque for the given mode.

    ``push_off="as_printed"`` applies the constant term k_a*q_a_p;
    ``"error_based"`` uses k_a*(q_a_p - q_i) instead.
    """
    damping = -(gains.k_a / 10.0) * qdot_i
    if mode == AnkleMode.HEEL_STRIKE_DAMPING:
        return damping
    if mode == AnkleMode.PUSH_OFF:
        if push_off == "as_printed":
            return gains.k_a * gains.q_a_p + damping
        if push_off == "error_based":
            return gains.k_a * (gains.q_a_p - q_i) + damping
        raise ValueError(f"unknown push-off law {push_off!r}")
    return gains.k_a * (q_i - gains.q_a_sw) + damping


# ----------------------------------------------------------------------
# Swing retraction
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class RetractionSettings:
    L0: float = 0.55
    delta_L: float = 0.2 * 0.55
    delta_psi: float = math.pi / 3
    psi_d: float = -math.pi / 40  # desired trunk angle offset

    def __post_init__(self) -> None:
        if self.L0 <= 0 or self.delta_psi <= 0 or self.delta_L < 0:
            raise ValueError("retraction settings must be positive")


def retraction_length(psi: float, settings: RetractionSettings = RetractionSettings()) -> float:
    """Desired swing length on the cosine profile; L0 outside the window.

    ``psi`` here is the trunk-referenced swing angle, not the template
    hip-to-CoM angle.
    """
    psi_tilde = psi + settings.psi_d
    if abs(psi_tilde) >= settings.delta_psi / 2:
        return settings.L0
    half = settings.delta_L / 2
    return 0.8 * settings.L0 + half - half * math.cos(psi_tilde * 2 * math.pi / settings.delta_psi)


# ----------------------------------------------------------------------
# Event traces
# ----------------------------------------------------------------------
def load_event_trace(csv_path: str | Path) -> pd.DataFrame:
    """Read a recorded contact trace; see DATA_FORMATS.md for the columns."""
    path = Path(csv_path)
    if not path.exists():
        raise FileNotFoundError(f"Event trace not found: {csv_path}")
    df = pd.read_csv(path)
    missing = [col for col in TRACE_COLUMNS if col not in df.columns]
    if missing:
        raise ValueError(f"Event trace is missing columns {missing}")
    return df.sort_values("time", kind="stable").reset_index(drop=True)


def replay_trace(
    records: pd.DataFrame | Iterable[dict],
    initial: FsmState | None = None,
    eps: float = CONTACT_EPS,
) -> List[FsmState]:
    """Run the machine over a trace, returning the state after every record."""
    df = records if isinstance(records, pd.DataFrame) else pd.DataFrame(list(records))
    fsm = initial or FsmState.start()
    trace: List[FsmState] = []
    values = df[list(TRACE_COLUMNS)].to_numpy(dtype=float)
    for _, heel_1, toe_1, heel_2, toe_2, toe_x_1, toe_x_2, com_x in values:
        if np.isnan([heel_1, toe_1, heel_2, toe_2]).any():
            raise InvalidMeasurement("NaN foot height in event trace")
        meas = FsmMeasurements.from_heights((heel_1, heel_2), (toe_1, toe_2), (toe_x_1, toe_x_2), com_x, fsm.swing_leg, eps)
        fsm = fsm_step(fsm, meas)
        trace.append(fsm)
    return trace


def phase_sequence(trace: Iterable[FsmState]) -> List[Tuple[FsmPhase, int]]:
    """Collapse a state trace into its distinct (phase, swing leg) visits."""
    seq: List[Tuple[FsmPhase, int]] = []
    for state in trace:
        key = (state.phase, state.swing_leg)
        if not seq or seq[-1] != key:
            seq.append(key)
    return seq
