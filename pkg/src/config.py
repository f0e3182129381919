"""
Scenario configuration: one JSON document per run, validated with pydantic.

Validation failures are re-raised as ``ConfigError`` carrying the dotted path of
the offending field, e.g. ``disturbances.0.duration``.
"""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator

from .btslip_model import TemplateParams
from .disturbance import APPLICATION_POINTS, DisturbanceWindow
from .errors import ConfigError
from .fivelink_model import RobotParams
from .leg_force_planner import PlannerGains
from .numerics import Tolerances
from .template_control import FdcGains, FeedbackGains, VppInput
from .terrain import TerrainProfile, load_terrain_samples

MODEL_CONTROLLERS = {
    "btslip": ("passive", "vpp", "vpp+dlqr", "combined", "fdc"),
    "fivelink": ("osc", "polar-jt"),
}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TemplateConfig(_Section):
    m: float = Field(80.0, gt=0)
    J: float = Field(4.58, gt=0)
    r_h: float = Field(0.1, gt=0)
    r_vpp: float = Field(0.1, ge=0)
    L0: float = Field(1.0, gt=0)
    k0: float = Field(20000.0, gt=0)
    g: float = Field(9.81, gt=0)
    alpha0_deg: float = Field(70.6, gt=0, lt=180)

    def to_params(self) -> TemplateParams:
        try:
            return TemplateParams(
                m=self.m,
                J=self.J,
                r_h=self.r_h,
                r_vpp=self.r_vpp,
                L0=self.L0,
                k0=self.k0,
                g=self.g,
                alpha0=math.radians(self.alpha0_deg),
            )
        except ValueError as exc:
            raise ConfigError(str(exc), "template") from exc


class RobotConfig(_Section):
    m_t: float = Field(12.5, gt=0)
    m_f: float = Field(0.7, gt=0)
    m_s: float = Field(0.7, gt=0)
    L_t: float = Field(0.42, gt=0)
    L_f: float = Field(0.19, gt=0)
    L_s: float = Field(0.19, gt=0)
    J_t: float = Field(0.23, gt=0)
    J_f: float = Field(0.0045, gt=0)
    J_s: float = Field(0.0045, gt=0)
    c_t: float = Field(0.21, ge=0)
    c_f: float = Field(0.13, ge=0)
    c_s: float = Field(0.13, ge=0)
    g: float = Field(9.81, ge=0)
    joint_friction: float = Field(0.01, ge=0)

    def to_params(self) -> RobotParams:
        try:
            return RobotParams(**self.model_dump())
        except ValueError as exc:
            raise ConfigError(str(exc), "robot") from exc


class VppConfig(_Section):
    r_vpp: float = Field(0.1, ge=0)
    gamma: float = 0.0

    def to_input(self) -> VppInput:
        return VppInput(r_vpp=self.r_vpp, gamma=self.gamma)


class FdcConfig(_Section):
    c: float = Field(10.0, gt=0)
    d: float = Field(1.0, gt=0)
    mu_vbla: float = Field(0.5, ge=0, le=1)
    mu_fric_hat: Optional[float] = Field(None, gt=0)

    def to_gains(self) -> FdcGains:
        return FdcGains(c=self.c, d=self.d, mu_vbla=self.mu_vbla, mu_fric_hat=self.mu_fric_hat)


class FeedbackConfig(_Section):
    k1: float = Field(20.0, gt=0)
    k2: float = Field(100.0, gt=0)
    k3: float = Field(10.0, gt=0)

    def to_gains(self) -> FeedbackGains:
        return FeedbackGains(k1=self.k1, k2=self.k2, k3=self.k3)


class PlannerConfig(_Section):
    k: float = Field(7500.0, gt=0)
    k_d: float = Field(100.0, gt=0)
    c: float = Field(10.0, gt=0)
    c_sw: float = Field(10.0, gt=0)
    d: float = Field(1.0, gt=0)
    mu_vbla: float = Field(0.5, ge=0, le=1)
    L0: float = Field(0.37, gt=0)
    mu_fric_hat: Optional[float] = Field(None, gt=0)

    def to_gains(self) -> PlannerGains:
        return PlannerGains(**self.model_dump())


class GainsConfig(_Section):
    # None: fixed attack angle for the VPP family, VBLA for fdc
    touchdown: Optional[Literal["fixed", "vbla"]] = None
    vpp: VppConfig = Field(default_factory=VppConfig)
    fdc: FdcConfig = Field(default_factory=FdcConfig)
    feedback: FeedbackConfig = Field(default_factory=FeedbackConfig)
    planner: PlannerConfig = Field(default_factory=PlannerConfig)
    Q: Optional[List[float]] = Field(None, min_length=5, max_length=5)
    R: Optional[List[float]] = Field(None, min_length=2, max_length=2)


class InitialConfig(_Section):
    # template: VLO section state (y, phi, xdot, ydot, phidot); None uses the analysed fixed point if any
    section: Optional[Tuple[float, float, float, float, float]] = None
    # 5-link: virtual-leg setup of the first stance phase
    L_stance: float = Field(0.35, gt=0)
    alpha_stance: float = math.pi / 2 + 0.12
    L_swing: float = Field(0.33, gt=0)
    alpha_swing: float = math.pi / 2 - 0.35
    q5: float = -0.09
    forward_speed: float = 0.5
    jitter: float = Field(0.0, ge=0)


class TerrainConfig(_Section):
    kind: Literal["flat", "sine", "samples"] = "flat"
    amplitude_cm: float = 0.0
    base_cm: float = 0.0
    spatial_freq: float = 0.0
    x_start: float = -math.inf
    x_end: float = math.inf
    samples_path: Optional[str] = None

    @field_validator("samples_path")
    @classmethod
    def _samples_need_path(cls, value: Optional[str], info: ValidationInfo) -> Optional[str]:
        if info.data.get("kind") == "samples" and not value:
            raise ValueError("sampled terrain needs samples_path")
        return value

    def to_profile(self) -> Optional[TerrainProfile]:
        if self.kind == "flat":
            return None
        if self.kind == "samples":
            profile = load_terrain_samples(self.samples_path, self.x_start, self.x_end)
            if any(h < 0 for _, h in profile.samples):
                raise ConfigError("terrain heights must be non-negative", "terrain.samples_path")
            return profile
        return TerrainProfile(
            kind="sine",
            amplitude_cm=self.amplitude_cm,
            base_cm=self.base_cm,
            spatial_freq=self.spatial_freq,
            x_start=self.x_start,
            x_end=self.x_end,
        )


class DisturbanceConfig(_Section):
    force: Tuple[float, float]
    point: str = "com"
    t_start: float = Field(..., ge=0)
    duration: float = Field(..., gt=0)

    @field_validator("point")
    @classmethod
    def _known_point(cls, value: str) -> str:
        if value not in APPLICATION_POINTS:
            raise ValueError(f"application point must be one of {APPLICATION_POINTS}")
        return value

    def to_window(self) -> DisturbanceWindow:
        return DisturbanceWindow(fx=self.force[0], fy=self.force[1], point=self.point, t_start=self.t_start, duration=self.duration)


class IntegratorConfig(_Section):
    rel_tol: float = Field(1e-9, gt=0)
    abs_tol: float = Field(1e-11, gt=0)
    max_step: float = Field(0.01, gt=0)
    method: Literal["RK45", "DOP853"] = "RK45"

    def to_tolerances(self) -> Tolerances:
        return Tolerances(rel=self.rel_tol, abs=self.abs_tol, method=self.method)


class OutputConfig(_Section):
    directory: str = "results"
    write_csv: bool = True
    write_plots: bool = True


class ScenarioConfig(_Section):
    version: Literal[1]
    name: str = "scenario"
    model: Literal["btslip", "fivelink"]
    controller: str
    duration: float = Field(..., gt=0)
    template: TemplateConfig = Field(default_factory=TemplateConfig)
    robot: RobotConfig = Field(default_factory=RobotConfig)
    gains: GainsConfig = Field(default_factory=GainsConfig)
    initial: InitialConfig = Field(default_factory=InitialConfig)
    disturbances: List[DisturbanceConfig] = Field(default_factory=list)
    terrain: TerrainConfig = Field(default_factory=TerrainConfig)
    integrator: IntegratorConfig = Field(default_factory=IntegratorConfig)
    rng_seed: int = 0
    analysis_path: Optional[str] = None
    outputs: OutputConfig = Field(default_factory=OutputConfig)

    @field_validator("controller")
    @classmethod
    def _controller_fits_model(cls, value: str, info: ValidationInfo) -> str:
        model = info.data.get("model")
        known = MODEL_CONTROLLERS.get(model, sum(MODEL_CONTROLLERS.values(), ()))
        if value not in known:
            raise ValueError(f"controller {value!r} is not available for model {model!r}; choose from {known}")
        return value

    @field_validator("disturbances")
    @classmethod
    def _windows_inside_run(cls, value: List[DisturbanceConfig], info: ValidationInfo) -> List[DisturbanceConfig]:
        duration = info.data.get("duration")
        if duration is None:
            return value
        for i, window in enumerate(value):
            if window.t_start + window.duration > duration + 1e-12:
                raise ValueError(f"window {i} ends at {window.t_start + window.duration:g}s, after the {duration:g}s run")
        return value

    def windows(self) -> List[DisturbanceWindow]:
        return [d.to_window() for d in self.disturbances]


def _field_path(error: Dict[str, Any]) -> str:
    return ".".join(str(part) for part in error.get("loc", ())) or "<root>"


def parse_config(data: Dict[str, Any]) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(first["msg"], _field_path(first)) from exc


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object")
    return parse_config(data)


def with_override(config: ScenarioConfig, dotted: str, value: Any) -> ScenarioConfig:
    """Copy of ``config`` with one nested field replaced, re-validated."""
    data = copy.deepcopy(config.model_dump())
    parts = dotted.split(".")
    node: Any = data
    for part in parts[:-1]:
        if isinstance(node, list):
            node = node[int(part)]
        elif isinstance(node, dict) and part in node:
            node = node[part]
        else:
            raise ConfigError("no such field", dotted)
        if node is None:
            raise ConfigError("cannot override inside an unset section", dotted)
    leaf = parts[-1]
    if isinstance(node, list):
        node[int(leaf)] = value
    elif isinstance(node, dict) and leaf in node:
        node[leaf] = value
    else:
        raise ConfigError("no such field", dotted)
    return parse_config(data)
