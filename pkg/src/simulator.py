"""
Scenario runner: builds models and controllers from a ScenarioConfig, runs the
closed loop, writes the trajectory CSV, metrics JSON and plots.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .btslip_model import TemplateParams
from .config import ScenarioConfig, with_override
from .errors import BipedLabError, ConfigError, SimulationError
from .fivelink_simulator import FiveLinkController, FiveLinkSimulator, WalkerSettings, initial_state
from .metrics import RunMetrics, compute_metrics, trajectory_to_csv
from .plotter import plot_phase_portraits, plot_stride_residuals
from .poincare import (
    PoincareLinearization,
    analyze_gait,
    closed_loop_linearization,
    dlqr_update,
    load_linearization,
    reference_from_fixed_point,
    save_linearization,
)
from .template_control import CombinedController, FdcController, TemplateController, VppController
from .template_simulator import TemplateSimulator, state_from_section

logger = logging.getLogger(__name__)

DEFAULT_SECTION = (1.07, math.pi / 2, 1.1, 0.0, 0.0)
NEEDS_ANALYSIS = ("vpp+dlqr", "combined")


def _weights(values: Optional[Sequence[float]]) -> Optional[np.ndarray]:
    return None if values is None else np.diag(values)


def template_linearization(cfg: ScenarioConfig, params: TemplateParams) -> PoincareLinearization:
    """Stride linearization from ``analysis_path``, computed on the spot when absent.

    A missing ``analysis_path`` file is computed once and written there.
    """
    path = Path(cfg.analysis_path) if cfg.analysis_path else None
    if path is not None and path.exists():
        logger.info(f"loading stride linearization from {path}")
        return load_linearization(str(path))
    if path is None:
        logger.info("no analysis_path given; searching for the VPP fixed point")
    else:
        logger.warning(f"analysis file {path} not found; computing it")
    lin = analyze_gait(
        params, cfg.gains.vpp.to_input(), S_guess=cfg.initial.section, Q=_weights(cfg.gains.Q), R=_weights(cfg.gains.R)
    )
    if path is not None:
        save_linearization(lin, str(path))
    return lin


def build_template_controller(
    cfg: ScenarioConfig, params: TemplateParams, lin: Optional[PoincareLinearization]
) -> TemplateController:
    gains = cfg.gains
    touchdown = gains.touchdown
    mu = gains.fdc.mu_vbla
    if cfg.controller == "passive":
        return TemplateController(touchdown or "fixed", mu)
    if cfg.controller == "vpp":
        return VppController(gains.vpp.to_input(), touchdown=touchdown or "fixed", mu_vbla=mu)
    if cfg.controller == "fdc":
        return FdcController(gains.fdc.to_gains(), touchdown=touchdown or "vbla")

    if cfg.controller == "vpp+dlqr":
        return VppController(
            lin.delta_star, stride_policy=lambda S: dlqr_update(lin, S), touchdown=touchdown or "fixed", mu_vbla=mu
        )
    reference = reference_from_fixed_point(lin.S_star, lin.delta_star, params)
    feedback = gains.feedback.to_gains()

    def combined(delta, policy=None):
        return CombinedController(
            reference, delta, stride_policy=policy, gains=feedback, touchdown=touchdown or "fixed", mu_vbla=mu
        )

    # the stride gain must see the stiffness feedback acting inside the stride
    closed = closed_loop_linearization(lin, combined, params)
    return combined(lin.delta_star, lambda S: dlqr_update(closed, S))


def _output_stem(cfg: ScenarioConfig, output_dir: Optional[str | Path]) -> Path:
    return Path(output_dir or cfg.outputs.directory) / cfg.name


def _flush_partial(sim: Any, stem: Path) -> Optional[str]:
    run = getattr(sim, "last_run", None)
    if run is None or not run.rows:
        return None
    path = stem.with_name(f"{stem.name}_partial.csv")
    trajectory_to_csv(run.rows, path)
    return str(path)


def _run_template(cfg: ScenarioConfig, stem: Path) -> Tuple[RunMetrics, List[Dict[str, object]]]:
    params = cfg.template.to_params()
    terrain = cfg.terrain.to_profile()
    lin = template_linearization(cfg, params) if cfg.controller in NEEDS_ANALYSIS or cfg.analysis_path else None
    controller = build_template_controller(cfg, params, lin)

    section = np.array(cfg.initial.section or (lin.S_star if lin is not None else DEFAULT_SECTION), dtype=float)
    if cfg.initial.jitter > 0:
        section[2:] += np.random.default_rng(cfg.rng_seed).normal(0.0, cfg.initial.jitter, size=3)
    state0 = state_from_section(section, params, terrain=terrain)

    sim = TemplateSimulator(
        params,
        controller,
        terrain=terrain,
        disturbances=cfg.windows(),
        tolerances=cfg.integrator.to_tolerances(),
        max_step=cfg.integrator.max_step,
    )
    try:
        run = sim.run(state0, cfg.duration)
    except BipedLabError as exc:
        raise SimulationError(f"template run failed: {exc}", _flush_partial(sim, stem)) from exc

    fixed_point = lin.S_star if lin is not None and terrain is None else None
    return compute_metrics(
        run.rows,
        model="btslip",
        controller=cfg.controller,
        status=run.status,
        fall_reason=run.fall_reason,
        final_time=run.final_time,
        steps=run.count("touchdown"),
        sections=run.vlo_sections,
        events=[(e.time, e.kind) for e in run.events],
        windows=cfg.windows(),
        fixed_point=fixed_point,
    ), run.rows


def _run_fivelink(cfg: ScenarioConfig, stem: Path) -> Tuple[RunMetrics, List[Dict[str, object]]]:
    params = cfg.robot.to_params()
    init = cfg.initial
    state0 = initial_state(
        params,
        L_stance=init.L_stance,
        alpha_stance=init.alpha_stance,
        L_swing=init.L_swing,
        alpha_swing=init.alpha_swing,
        q5=init.q5,
        forward_speed=init.forward_speed,
        jitter=init.jitter,
        seed=cfg.rng_seed,
    )
    sim = FiveLinkSimulator(
        params,
        FiveLinkController(cfg.gains.planner.to_gains(), mapper=cfg.controller),
        terrain=cfg.terrain.to_profile(),
        disturbances=cfg.windows(),
        tolerances=cfg.integrator.to_tolerances(),
        settings=WalkerSettings(max_step=min(cfg.integrator.max_step, WalkerSettings().max_step)),
    )
    try:
        run = sim.run(state0, cfg.duration)
    except BipedLabError as exc:
        raise SimulationError(f"5-link run failed: {exc}", _flush_partial(sim, stem)) from exc

    return compute_metrics(
        run.rows,
        model="fivelink",
        controller=cfg.controller,
        status=run.status,
        fall_reason=run.fall_reason,
        final_time=run.final_time,
        steps=len(run.sections),
        sections=run.sections,
        events=[(e.time, e.kind) for e in run.events],
        windows=cfg.windows(),
    ), run.rows


def run_scenario(cfg: ScenarioConfig, output_dir: Optional[str | Path] = None, write: bool = True) -> RunMetrics:
    """Run one scenario; with ``write`` the CSV, metrics JSON and plots go under the output directory."""
    stem = _output_stem(cfg, output_dir)
    logger.info(f"scenario {cfg.name}: {cfg.model}/{cfg.controller} for {cfg.duration:g}s")
    runner = _run_template if cfg.model == "btslip" else _run_fivelink
    metrics, rows = runner(cfg, stem)

    if write:
        if cfg.outputs.write_csv:
            csv_path = stem.with_suffix(".csv")
            trajectory_to_csv(rows, csv_path)
            metrics.csv_path = str(csv_path)
        stem.parent.mkdir(parents=True, exist_ok=True)
        stem.with_name(f"{stem.name}_metrics.json").write_text(json.dumps(metrics.to_dict(), indent=2), encoding="utf-8")
        if cfg.outputs.write_plots:
            plot_phase_portraits(rows, cfg.model, stem.with_name(f"{stem.name}_phase.png"))
            plot_stride_residuals(metrics.stride_residuals, stem.with_name(f"{stem.name}_residuals.png"))

    logger.info(
        f"scenario {cfg.name}: {metrics.status} at t={metrics.final_time:.2f}s after {metrics.steps_completed} steps"
    )
    return metrics


def analyze_scenario(cfg: ScenarioConfig, output_path: Optional[str | Path] = None) -> PoincareLinearization:
    """Fixed point, eigenvalues and DLQR gain of the template's VPP gait."""
    if cfg.model != "btslip":
        raise ConfigError("stride analysis is only defined for the template model", "model")
    params = cfg.template.to_params()
    lin = analyze_gait(params, cfg.gains.vpp.to_input(), S_guess=cfg.initial.section, Q=_weights(cfg.gains.Q), R=_weights(cfg.gains.R))
    path = Path(output_path) if output_path else _output_stem(cfg, None).with_name(f"{cfg.name}_analysis.json")
    save_linearization(lin, str(path))
    logger.info(f"stride analysis written to {path}")
    return lin


def _sweep_point(payload: Dict[str, Any]) -> Dict[str, object]:
    cfg = ScenarioConfig.model_validate(payload["config"])
    row: Dict[str, object] = {"param": payload["param"], "value": payload["value"]}
    try:
        metrics = run_scenario(cfg, payload["output_dir"])
    except SimulationError as exc:
        logger.warning(f"sweep point {payload['value']!r} failed: {exc}")
        return row | {"status": "error"}
    return row | metrics.summary_row()


def sweep(
    cfg: ScenarioConfig, param: str, values: Sequence[Any], output_dir: Optional[str | Path] = None, workers: int = 1
) -> List[Dict[str, object]]:
    """One run per value of the dotted parameter; runs are independent processes when workers > 1."""
    out = Path(output_dir or cfg.outputs.directory)
    payloads = []
    for i, value in enumerate(values):
        point = with_override(cfg, param, value)
        point = point.model_copy(update={"name": f"{cfg.name}_{i:03d}"})
        payloads.append({"config": point.model_dump(), "param": param, "value": value, "output_dir": str(out)})
    if workers <= 1:
        return [_sweep_point(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_point, payloads))
