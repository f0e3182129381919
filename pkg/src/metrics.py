"""
Post-hoc metrics for closed-loop runs and helpers for experiment reporting.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .disturbance import DisturbanceWindow

PITCH_RECOVERY_TOL = 0.02
MIN_NORMAL_FORCE = 1.0
PRE_WINDOW = 2.0


@dataclass
class RunMetrics:
    model: str
    controller: str
    status: str
    fell: bool
    fall_reason: Optional[str]
    final_time: float
    steps_completed: int
    mean_forward_speed: float
    pitch_band: Tuple[float, float]
    steady_pitch_band: Tuple[float, float]
    max_friction_ratio: float
    steady_friction_ratio: float
    energy_drift: float
    stride_residuals: List[float] = field(default_factory=list)
    recovery_times: List[float] = field(default_factory=list)
    event_log: List[Tuple[float, str]] = field(default_factory=list)
    csv_path: Optional[str] = None

    @property
    def steady_pitch_width(self) -> float:
        return self.steady_pitch_band[1] - self.steady_pitch_band[0]

    def summary_row(self) -> Dict[str, object]:
        """Flat row for sweep tables (no per-stride lists)."""
        return {
            "model": self.model,
            "controller": self.controller,
            "status": self.status,
            "final_time": self.final_time,
            "steps": self.steps_completed,
            "forward_speed": self.mean_forward_speed,
            "pitch_min": self.pitch_band[0],
            "pitch_max": self.pitch_band[1],
            "max_friction_ratio": self.max_friction_ratio,
            "final_residual": self.stride_residuals[-1] if self.stride_residuals else math.nan,
        }

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data["steady_pitch_width"] = self.steady_pitch_width
        return data


def _band(series: pd.Series) -> Tuple[float, float]:
    values = series.dropna()
    if values.empty:
        return math.nan, math.nan
    return float(values.min()), float(values.max())


def friction_ratios(df: pd.DataFrame) -> pd.Series:
    """|F_x/F_y| over stance samples with a normal force above 1 N."""
    pairs = [("grf_x", "grf_y")] if "grf_x" in df.columns else [("grf_x_1", "grf_y_1"), ("grf_x_2", "grf_y_2")]
    ratios = []
    for fx, fy in pairs:
        mask = df[fy] > MIN_NORMAL_FORCE
        ratios.append(pd.Series((df.loc[mask, fx] / df.loc[mask, fy]).abs().to_numpy(), index=df.index[mask]))
    return pd.concat(ratios).sort_index() if ratios else pd.Series(dtype=float)


def stride_residuals(sections: Sequence[np.ndarray], fixed_point: Optional[np.ndarray] = None) -> List[float]:
    """Per-stride deviation: from the fixed point when known, else from the previous stride."""
    sections = [np.asarray(s, dtype=float) for s in sections]
    if fixed_point is not None:
        target = np.asarray(fixed_point, dtype=float)
        return [float(np.max(np.abs(s - target))) for s in sections]
    return [float(np.max(np.abs(b - a))) for a, b in zip(sections, sections[1:])]


def recovery_times(df: pd.DataFrame, windows: Sequence[DisturbanceWindow], tol: float = PITCH_RECOVERY_TOL) -> List[float]:
    """Time after each push until trunk pitch re-enters its pre-push band (+/- tol) for good.

    "For good" means until the next push starts or the run ends. NaN when the
    pitch never settles or no pre-push samples exist.
    """
    if df.empty:
        return [math.nan for _ in windows]
    times = df["time"].to_numpy()
    pitch = df["phi"].to_numpy()
    starts = sorted(w.t_start for w in windows)
    out: List[float] = []
    for w in windows:
        before = (times >= w.t_start - PRE_WINDOW) & (times < w.t_start)
        if not before.any():
            out.append(math.nan)
            continue
        lo, hi = pitch[before].min() - tol, pitch[before].max() + tol
        horizon = next((s for s in starts if s > w.t_start), math.inf)
        after = (times >= w.t_end) & (times < horizon)
        if not after.any():
            out.append(math.nan)
            continue
        outside = ~((pitch[after] >= lo) & (pitch[after] <= hi))
        if not outside.any():
            out.append(0.0)
            continue
        last_out = np.flatnonzero(outside)[-1]
        t_after = times[after]
        out.append(float(t_after[last_out + 1] - w.t_end) if last_out + 1 < len(t_after) else math.nan)
    return out


def compute_metrics(
    rows: List[Dict[str, object]],
    *,
    model: str,
    controller: str,
    status: str,
    fall_reason: Optional[str],
    final_time: float,
    steps: int,
    sections: Sequence[np.ndarray],
    events: Sequence[Tuple[float, str]],
    windows: Sequence[DisturbanceWindow] = (),
    fixed_point: Optional[np.ndarray] = None,
    steady_fraction: float = 0.3,
) -> RunMetrics:
    df = pd.DataFrame(rows)
    fell = status == "fell"
    if df.empty:
        return RunMetrics(
            model, controller, status, fell, fall_reason, final_time, steps, math.nan,
            (math.nan, math.nan), (math.nan, math.nan), math.nan, math.nan, math.nan,
            stride_residuals(sections, fixed_point), [math.nan for _ in windows], list(events),
        )

    x_col = "x" if model == "btslip" else "com_x"
    span = float(df["time"].iloc[-1] - df["time"].iloc[0])
    speed = float(df[x_col].iloc[-1] - df[x_col].iloc[0]) / span if span > 0 else math.nan

    t0, t1 = float(df["time"].iloc[0]), float(df["time"].iloc[-1])
    steady = df[df["time"] >= t1 - steady_fraction * (t1 - t0)]
    ratios = friction_ratios(df)
    steady_ratios = ratios[ratios.index.isin(steady.index)]

    energy = df["energy"].dropna()
    drift = math.nan
    if len(energy) > 1 and energy.iloc[0] != 0:
        drift = float(((energy - energy.iloc[0]).abs() / abs(energy.iloc[0])).max())

    return RunMetrics(
        model=model,
        controller=controller,
        status=status,
        fell=fell,
        fall_reason=fall_reason,
        final_time=final_time,
        steps_completed=steps,
        mean_forward_speed=speed,
        pitch_band=_band(df["phi"]),
        steady_pitch_band=_band(steady["phi"]),
        max_friction_ratio=float(ratios.max()) if not ratios.empty else 0.0,
        steady_friction_ratio=float(steady_ratios.max()) if not steady_ratios.empty else 0.0,
        energy_drift=drift,
        stride_residuals=stride_residuals(sections, fixed_point),
        recovery_times=recovery_times(df, windows),
        event_log=list(events),
    )


def aggregate_stats(values: Sequence[float]) -> Tuple[float, float]:
    arr = np.array([v for v in values if np.isfinite(v)], dtype=float)
    if len(arr) <= 1:
        return float(arr.mean()) if len(arr) else math.nan, 0.0
    return float(arr.mean()), float(np.std(arr, ddof=1))


def trajectory_to_csv(rows: List[Dict[str, object]], path: str | Path) -> None:
    output = Path(path)
    output.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(output, index=False, float_format="%.10g")


def rows_to_csv(rows: List[Dict], path: str | Path) -> None:
    """Sweep table; aborted points carry fewer columns, so the header is the union."""
    output = Path(path)
    output.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        return
    fieldnames = list(dict.fromkeys(key for row in rows for key in row))
    with output.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames, restval="")
        writer.writeheader()
        writer.writerows(rows)
