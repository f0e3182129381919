"""
External push schedules applied during a closed-loop run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

APPLICATION_POINTS = ("com", "stance_foot", "right_foot")


@dataclass(frozen=True)
class DisturbanceWindow:
    fx: float
    fy: float
    point: str = "com"
    t_start: float = 0.0
    duration: float = 0.0

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_end


@dataclass(frozen=True)
class ExternalForce:
    point: str
    fx: float
    fy: float


def apply_disturbance(schedule: Sequence[DisturbanceWindow], t: float) -> List[ExternalForce]:
    """Sum the windows active at time t, grouped by application point."""
    totals: Dict[str, Tuple[float, float]] = {}
    for window in schedule:
        if not window.active(t):
            continue
        fx, fy = totals.get(window.point, (0.0, 0.0))
        totals[window.point] = (fx + window.fx, fy + window.fy)
    return [ExternalForce(point, fx, fy) for point, (fx, fy) in sorted(totals.items())]


def total_force(schedule: Sequence[DisturbanceWindow], t: float) -> Tuple[float, float]:
    forces = apply_disturbance(schedule, t)
    return sum(f.fx for f in forces), sum(f.fy for f in forces)


def breakpoints(schedule: Sequence[DisturbanceWindow]) -> List[float]:
    """Window edges; the integrator restarts at each so forces stay smooth per segment."""
    edges = set()
    for window in schedule:
        edges.add(window.t_start)
        edges.add(window.t_end)
    return sorted(edges)
