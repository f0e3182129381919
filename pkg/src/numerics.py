"""
Numerical kernel: event-aware ODE integration and dense linear algebra helpers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.integrate import solve_ivp

from .errors import NonFiniteState, NotStabilizable, StepSizeUnderflow

logger = logging.getLogger(__name__)

VectorField = Callable[[float, np.ndarray], np.ndarray]
EXPLICIT_METHODS = ("RK23", "RK45", "DOP853")


class Direction(IntEnum):
    """Crossing direction that triggers an event (solve_ivp sign convention)."""

    FALLING = -1
    ANY = 0
    RISING = 1


@dataclass(frozen=True)
class Tolerances:
    rel: float = 1e-9
    abs: float = 1e-11
    method: str = "RK45"  # one of EXPLICIT_METHODS


@dataclass(frozen=True)
class EventFunction:
    """Guard g(t, x); a sign change in the given direction is an event."""

    index: int
    fn: Callable[[float, np.ndarray], float]
    direction: Direction = Direction.ANY
    terminal: bool = False


@dataclass(frozen=True)
class EventRecord:
    time: float
    index: int
    state: np.ndarray


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # shape (len(times), n)
    events: List[EventRecord] = field(default_factory=list)
    terminated_by: Optional[int] = None

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1].copy()


def _wrap_event(event: EventFunction):
    def guard(t: float, x: np.ndarray) -> float:
        return float(event.fn(t, x))

    guard.terminal = event.terminal
    guard.direction = float(event.direction)
    return guard


def integrate_with_events(
    f: VectorField,
    x0: Sequence[float],
    t_span: Tuple[float, float],
    events: Sequence[EventFunction] = (),
    tolerances: Tolerances = Tolerances(),
    max_step: float = np.inf,
) -> Trajectory:
    """Integrate ``x' = f(t, x)`` with an adaptive Runge-Kutta pair and locate guard crossings.

    Events are located by root finding on the dense output; terminal events stop
    the integration at the located time. Simultaneous events are ordered by
    their index.
    """
    if tolerances.rel <= 0 or tolerances.abs <= 0:
        raise ValueError("integration tolerances must be positive")
    if tolerances.method not in EXPLICIT_METHODS:
        raise ValueError(f"unsupported integration method {tolerances.method!r}")
    indices = [event.index for event in events]
    if len(set(indices)) != len(indices):
        raise ValueError(f"event indices must be unique, got {indices}")

    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise NonFiniteState(f"non-finite initial state {x0}")

    def rhs(t: float, x: np.ndarray) -> np.ndarray:
        dx = np.asarray(f(t, x), dtype=float)
        if not np.all(np.isfinite(dx)):
            raise NonFiniteState(f"vector field returned {dx} at t={t:.6f}")
        return dx

    sol = solve_ivp(
        rhs,
        t_span,
        x0,
        method=tolerances.method,
        rtol=tolerances.rel,
        atol=tolerances.abs,
        max_step=max_step,
        events=[_wrap_event(event) for event in events] or None,
    )
    if sol.status == -1:
        raise StepSizeUnderflow(f"integration failed at t={sol.t[-1]:.6f}: {sol.message}")

    states = sol.y.T.copy()
    if not np.all(np.isfinite(states)):
        raise NonFiniteState("integration produced non-finite states")

    records: List[EventRecord] = []
    if events:
        for event, t_hits, y_hits in zip(events, sol.t_events, sol.y_events):
            for t_hit, y_hit in zip(t_hits, y_hits):
                records.append(EventRecord(time=float(t_hit), index=event.index, state=np.array(y_hit)))
    records.sort(key=lambda rec: (rec.time, rec.index))

    terminated_by = None
    if sol.status == 1:
        t_end = float(sol.t[-1])
        hits = [rec for rec in records if rec.time == t_end and _is_terminal(events, rec.index)]
        if hits:
            terminated_by = hits[0].index
    return Trajectory(times=sol.t.copy(), states=states, events=records, terminated_by=terminated_by)


def _is_terminal(events: Sequence[EventFunction], index: int) -> bool:
    return any(event.index == index and event.terminal for event in events)


# ----------------------------------------------------------------------
# Dense linear algebra
# ----------------------------------------------------------------------
def pseudo_inverse(matrix: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudo-inverse."""
    return linalg.pinv(np.atleast_2d(np.asarray(matrix, dtype=float)))


def eigenvalues(matrix: np.ndarray) -> np.ndarray:
    """Eigenvalues sorted by decreasing magnitude, then by imaginary part."""
    values = linalg.eigvals(np.asarray(matrix, dtype=float))
    order = np.lexsort((-values.imag, -np.abs(values)))
    return values[order]


def spectral_radius(matrix: np.ndarray) -> float:
    return float(np.max(np.abs(linalg.eigvals(np.asarray(matrix, dtype=float)))))


@dataclass(frozen=True)
class DareSolution:
    P: np.ndarray
    K: np.ndarray
    residual: float


def dare_residual(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray, P: np.ndarray) -> float:
    gain_term = A.T @ P @ B @ np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    return float(np.linalg.norm(A.T @ P @ A - P - gain_term + Q))


def solve_dare(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray) -> DareSolution:
    """Stabilizing solution of the discrete-time algebraic Riccati equation."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    try:
        P = linalg.solve_discrete_are(A, B, Q, R)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NotStabilizable(f"DARE has no stabilizing solution: {exc}") from exc
    P = 0.5 * (P + P.T)
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    rho = spectral_radius(A - B @ K)
    if rho >= 1.0:
        raise NotStabilizable(f"closed loop spectral radius {rho:.6f} >= 1")
    residual = dare_residual(A, B, Q, R, P)
    if residual > 1e-8 * max(1.0, float(np.linalg.norm(P))):
        logger.warning(f"DARE residual {residual:.3e} above bound")
    return DareSolution(P=P, K=K, residual=residual)


def controllability_rank(A: np.ndarray, B: np.ndarray) -> int:
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return int(np.linalg.matrix_rank(np.hstack(blocks)))
