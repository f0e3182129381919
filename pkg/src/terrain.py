"""
Ground height profiles along the sagittal line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
import pandas as pd

HeightFunction = Callable[[float], float]


@dataclass(frozen=True)
class TerrainProfile:
    """Flat, sinusoidal or sampled ground.

    The sine profile is h(x) = 0.01 * (base + amplitude * sin(freq * x)) metres with
    base/amplitude given in centimetres. Outside ``[x_start, x_end]`` the ground
    is flat at zero.
    """

    kind: str = "flat"
    amplitude_cm: float = 0.0
    base_cm: float = 0.0
    spatial_freq: float = 0.0
    x_start: float = -math.inf
    x_end: float = math.inf
    samples: Tuple[Tuple[float, float], ...] = field(default_factory=tuple)

    def __call__(self, x: float) -> float:
        return terrain_height(self, x)


def terrain_height(profile: Optional[TerrainProfile], x: float) -> float:
    if profile is None or profile.kind == "flat":
        return 0.0
    if not (profile.x_start <= x <= profile.x_end):
        return 0.0
    if profile.kind == "sine":
        h = 0.01 * (profile.base_cm + profile.amplitude_cm * math.sin(profile.spatial_freq * x))
    elif profile.kind == "samples":
        xs = [point[0] for point in profile.samples]
        hs = [point[1] for point in profile.samples]
        h = float(np.interp(x, xs, hs))
    else:
        raise ValueError(f"unknown terrain kind {profile.kind!r}")
    return max(h, 0.0)


def load_terrain_samples(csv_path: str, x_start: float = -math.inf, x_end: float = math.inf) -> TerrainProfile:
    """Build a sampled profile from a CSV with ``x`` and ``h`` columns (metres)."""
    df = pd.read_csv(csv_path)
    if not {"x", "h"}.issubset(df.columns):
        raise ValueError("terrain samples must contain 'x' and 'h' columns")
    df = df.sort_values("x")
    samples = tuple((float(x), float(h)) for x, h in zip(df["x"], df["h"]))
    return TerrainProfile(kind="samples", samples=samples, x_start=x_start, x_end=x_end)
