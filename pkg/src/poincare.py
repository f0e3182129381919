"""
Stride-to-stride analysis of the template gait at vertical leg orientation (VLO).

The section state is S = (y, phi, xdot, ydot, phidot); x is dropped because the
flat-ground dynamics are translation invariant. This module finds periodic
gaits, linearizes the return map, and builds the once-per-stride DLQR update of
the virtual pivot.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np
from scipy import linalg

from .btslip_model import TemplateParams, TemplateState
from .errors import FellBeforeSection, MapFailure, NoConvergence, NoSectionCrossing, Uncontrollable
from .numerics import Tolerances, controllability_rank, eigenvalues, solve_dare, spectral_radius
from .template_control import ReferenceGait, TemplateController, VppController, VppInput
from .template_simulator import TemplateSimulator, state_from_section
from .terrain import HeightFunction

logger = logging.getLogger(__name__)

SECTION_FIELDS = ("y", "phi", "xdot", "ydot", "phidot")
ANALYSIS_TOLERANCES = Tolerances(rel=1e-11, abs=1e-12, method="DOP853")
SEED_TOLERANCES = Tolerances(rel=1e-8, abs=1e-10, method="DOP853")
DEFAULT_Q = np.diag([10.0, 10.0, 1.0, 1.0, 1.0])
DEFAULT_R = np.diag([100.0, 100.0])
DELTA_LOWER = np.array([0.0, -np.inf])  # r_vpp >= 0, gamma free

ControllerFactory = Callable[[VppInput], TemplateController]


def vpp_factory(delta: VppInput) -> TemplateController:
    return VppController(delta)


@dataclass(frozen=True)
class NewtonSettings:
    max_iter: int = 20
    tol: float = 1e-9
    fd_step: float = 1e-5
    time_cap: float = 5.0
    tolerances: Tolerances = ANALYSIS_TOLERANCES
    seed_tolerances: Tolerances = SEED_TOLERANCES
    stability_tol: float = 1e-3
    max_candidates: int = 6


# ----------------------------------------------------------------------
# Return map
# ----------------------------------------------------------------------
def return_map_from_state(
    state: TemplateState,
    delta: VppInput,
    params: TemplateParams,
    controller: ControllerFactory = vpp_factory,
    terrain: Optional[HeightFunction] = None,
    settings: NewtonSettings = NewtonSettings(),
) -> np.ndarray:
    """Integrate from a VLO state to the next VLO and return its section state."""
    if terrain is None:
        state = state.shifted(-state.feet[0].x)
    sim = TemplateSimulator(params, controller(delta), terrain=terrain, tolerances=settings.tolerances)
    run = sim.run(state, t_end=settings.time_cap, max_vlo=1, record=False)
    if run.fell:
        raise FellBeforeSection(f"fell ({run.fall_reason}) at t={run.final_time:.3f}s before the next VLO")
    if run.status != "section":
        raise NoSectionCrossing(f"no VLO within {settings.time_cap:.1f}s")
    return run.vlo_sections[0]


def return_map(
    S: Sequence[float],
    delta: VppInput,
    params: TemplateParams,
    controller: ControllerFactory = vpp_factory,
    settings: NewtonSettings = NewtonSettings(),
) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.shape != (5,) or not np.all(np.isfinite(S)):
        raise MapFailure(f"invalid section state {S}")
    return return_map_from_state(state_from_section(S, params), delta, params, controller, settings=settings)


def finite_difference_jacobian(
    fn: Callable[[np.ndarray], np.ndarray],
    x0: Sequence[float],
    steps: Sequence[float],
    lower: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Central differences; a coordinate closer than one step to its lower bound gets a forward difference."""
    x0 = np.asarray(x0, dtype=float)
    bounds = np.full(x0.shape, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    base = None
    columns = []
    for j, h in enumerate(steps):
        e = np.zeros_like(x0)
        e[j] = h
        if x0[j] - h < bounds[j]:
            if base is None:
                base = fn(x0)
            columns.append((fn(x0 + e) - base) / h)
        else:
            columns.append((fn(x0 + e) - fn(x0 - e)) / (2.0 * h))
    return np.column_stack(columns)


def _section_steps(S: np.ndarray, h: float) -> np.ndarray:
    return h * np.maximum(1.0, np.abs(S))


# ----------------------------------------------------------------------
# Fixed point
# ----------------------------------------------------------------------
def seed_candidates(
    delta: VppInput,
    params: TemplateParams,
    controller: ControllerFactory = vpp_factory,
    y_values: Optional[Sequence[float]] = None,
    xdot_values: Optional[Sequence[float]] = None,
    settings: NewtonSettings = NewtonSettings(),
) -> List[np.ndarray]:
    """Grid seeds (upright, still trunk, ydot = 0) that complete a stride, best one-stride residual first."""
    if y_values is None:
        hip_low = params.L0 * math.sin(params.alpha0)
        y_values = params.r_h + np.linspace(hip_low + 0.01 * params.L0, 0.99 * params.L0, 5)
    if xdot_values is None:
        xdot_values = np.linspace(0.7, 1.6, 10)
    coarse = replace(settings, tolerances=settings.seed_tolerances)
    scored = []
    for y in y_values:
        for xdot in xdot_values:
            S = np.array([y, math.pi / 2, xdot, 0.0, 0.0])
            try:
                res = float(np.linalg.norm(return_map(S, delta, params, controller, coarse) - S))
            except MapFailure:
                continue
            scored.append((res, S))
    if not scored:
        raise NoConvergence("no seed on the grid completes a stride")
    scored.sort(key=lambda item: item[0])
    logger.info(f"{len(scored)} seeds complete a stride; best {np.round(scored[0][1], 4)} residual {scored[0][0]:.3e}")
    return [S for _, S in scored]


def seed_fixed_point(
    delta: VppInput,
    params: TemplateParams,
    controller: ControllerFactory = vpp_factory,
    y_values: Optional[Sequence[float]] = None,
    xdot_values: Optional[Sequence[float]] = None,
    settings: NewtonSettings = NewtonSettings(),
) -> np.ndarray:
    return seed_candidates(delta, params, controller, y_values, xdot_values, settings)[0]


def find_fixed_point(
    S_guess: Sequence[float],
    delta: VppInput,
    params: TemplateParams,
    controller: ControllerFactory = vpp_factory,
    settings: NewtonSettings = NewtonSettings(),
) -> np.ndarray:
    """Newton iteration on P(S) - S with a central-difference Jacobian."""
    S = np.asarray(S_guess, dtype=float)

    def residual(x: np.ndarray) -> np.ndarray:
        return return_map(x, delta, params, controller, settings) - x

    F = residual(S)
    for iteration in range(settings.max_iter):
        norm = float(np.linalg.norm(F))
        logger.debug(f"Newton iteration {iteration}: residual {norm:.3e}")
        if norm < settings.tol:
            logger.info(f"fixed point found after {iteration} iterations, residual {norm:.3e}")
            return S
        J = finite_difference_jacobian(residual, S, _section_steps(S, settings.fd_step))
        # periodic gaits form a family, so J is close to singular along it
        step = linalg.lstsq(J, -F)[0]
        scale = 1.0
        while scale >= 1.0 / 64:
            candidate = S + scale * step
            try:
                F_candidate = residual(candidate)
            except MapFailure:
                scale /= 2
                continue
            if np.linalg.norm(F_candidate) < norm:
                S, F = candidate, F_candidate
                break
            scale /= 2
        else:
            raise NoConvergence(f"Newton step could not reduce residual {norm:.3e}")
    norm = float(np.linalg.norm(F))
    if norm < settings.tol:
        return S
    raise NoConvergence(f"residual {norm:.3e} after {settings.max_iter} Newton steps")


# ----------------------------------------------------------------------
# Linearization and DLQR
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class PoincareLinearization:
    S_star: np.ndarray
    delta_star: VppInput
    J_S: np.ndarray
    J_delta: np.ndarray
    eigenvalues: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    K: Optional[np.ndarray] = None
    closed_loop_eigenvalues: Optional[np.ndarray] = None
    fixed_point_residual: float = 0.0

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))


def state_jacobian(
    S_star: Sequence[float],
    delta_star: VppInput,
    params: TemplateParams,
    controller: ControllerFactory = vpp_factory,
    settings: NewtonSettings = NewtonSettings(),
) -> np.ndarray:
    S_star = np.asarray(S_star, dtype=float)
    return finite_difference_jacobian(
        lambda S: return_map(S, delta_star, params, controller, settings), S_star, _section_steps(S_star, settings.fd_step)
    )


def input_jacobian(
    S_star: Sequence[float],
    delta_star: VppInput,
    params: TemplateParams,
    controller: ControllerFactory = vpp_factory,
    settings: NewtonSettings = NewtonSettings(),
) -> np.ndarray:
    """dP/d(r_vpp, gamma); r_vpp below one step is differenced forward only."""
    return finite_difference_jacobian(
        lambda d: return_map(S_star, VppInput(r_vpp=d[0], gamma=d[1]), params, controller, settings),
        delta_star.as_array(),
        np.full(2, settings.fd_step),
        lower=DELTA_LOWER,
    )


def linearize(
    S_star: Sequence[float],
    delta_star: VppInput,
    params: TemplateParams,
    controller: ControllerFactory = vpp_factory,
    Q: Optional[np.ndarray] = None,
    R: Optional[np.ndarray] = None,
    settings: NewtonSettings = NewtonSettings(),
    J_S: Optional[np.ndarray] = None,
) -> PoincareLinearization:
    """Jacobians of the return map in S and delta, plus the DLQR gain when controllable.

    A ``J_S`` computed earlier at the same point is reused as is.
    """
    S_star = np.asarray(S_star, dtype=float)
    Q = DEFAULT_Q if Q is None else np.asarray(Q, dtype=float)
    R = DEFAULT_R if R is None else np.asarray(R, dtype=float)

    if J_S is None:
        J_S = state_jacobian(S_star, delta_star, params, controller, settings)
    J_delta = input_jacobian(S_star, delta_star, params, controller, settings)
    residual = float(np.linalg.norm(return_map(S_star, delta_star, params, controller, settings) - S_star))
    if residual > settings.tol:
        logger.warning(f"linearizing at a point with fixed-point residual {residual:.3e}")

    K = closed = None
    if controllability_rank(J_S, J_delta) == J_S.shape[0]:
        K = solve_dare(J_S, J_delta, Q, R).K
        closed = eigenvalues(J_S - J_delta @ K)
        logger.info(f"DLQR closed-loop spectral radius {spectral_radius(J_S - J_delta @ K):.4f}")
    else:
        logger.warning("(J_S, J_delta) is not controllable; DLQR gain undefined")
    return PoincareLinearization(
        S_star=S_star,
        delta_star=delta_star,
        J_S=J_S,
        J_delta=J_delta,
        eigenvalues=eigenvalues(J_S),
        Q=Q,
        R=R,
        K=K,
        closed_loop_eigenvalues=closed,
        fixed_point_residual=residual,
    )


def dlqr_update(lin: PoincareLinearization, S_n: Sequence[float]) -> VppInput:
    """Pivot placement for the next stride: delta* - K (S_n - S*)."""
    if lin.K is None:
        raise Uncontrollable("no DLQR gain: the stride linearization is not controllable")
    delta = lin.delta_star.as_array() - lin.K @ (np.asarray(S_n, dtype=float) - lin.S_star)
    return VppInput(r_vpp=max(0.0, float(delta[0])), gamma=float(delta[1]))


def analyze_gait(
    params: TemplateParams,
    delta: VppInput = VppInput(),
    S_guess: Optional[Sequence[float]] = None,
    Q: Optional[np.ndarray] = None,
    R: Optional[np.ndarray] = None,
    settings: NewtonSettings = NewtonSettings(),
    controller: ControllerFactory = vpp_factory,
) -> PoincareLinearization:
    """Converge and linearize an orbitally stable VPP gait.

    Periodic gaits come in a one-parameter family (one multiplier sits at 1),
    and stability changes along it. Candidates are ``S_guess`` first, then grid
    seeds by one-stride residual; the first gait with every |lambda| within
    ``1 + stability_tol`` is kept, otherwise the least unstable one found.
    """

    def candidates() -> Iterator[np.ndarray]:
        if S_guess is not None:
            yield np.asarray(S_guess, dtype=float)
        yield from seed_candidates(delta, params, controller, settings=settings)[: settings.max_candidates]

    found: List[np.ndarray] = []
    best = None
    for guess in candidates():
        try:
            S_star = find_fixed_point(guess, delta, params, controller, settings)
        except (NoConvergence, MapFailure) as exc:
            logger.info(f"seed {np.round(guess, 4)} rejected: {exc}")
            continue
        if any(np.allclose(S_star, other, atol=1e-6) for other in found):
            continue
        found.append(S_star)
        J_S = state_jacobian(S_star, delta, params, controller, settings)
        radius = spectral_radius(J_S)
        logger.info(f"periodic gait {np.round(S_star, 4)}: spectral radius {radius:.4f}")
        if best is None or radius < best[0]:
            best = (radius, S_star, J_S)
        if radius <= 1.0 + settings.stability_tol:
            break
    if best is None:
        raise NoConvergence("no seed converged to a periodic gait")

    radius, S_star, J_S = best
    if radius > 1.0 + settings.stability_tol:
        logger.warning(f"no orbitally stable gait among {len(found)} found; keeping spectral radius {radius:.4f}")
    return linearize(S_star, delta, params, controller, Q=Q, R=R, settings=settings, J_S=J_S)


def closed_loop_linearization(
    lin: PoincareLinearization,
    controller: ControllerFactory,
    params: TemplateParams,
    settings: NewtonSettings = NewtonSettings(),
) -> PoincareLinearization:
    """Re-linearize the same gait with ``controller`` closing the loop inside the stride.

    Falls back to ``lin`` when the closed-loop gait cannot be converged or is
    not controllable.
    """
    try:
        S_star = find_fixed_point(lin.S_star, lin.delta_star, params, controller, settings)
        closed = linearize(S_star, lin.delta_star, params, controller, Q=lin.Q, R=lin.R, settings=settings)
    except (NoConvergence, MapFailure) as exc:
        logger.warning(f"closed-loop stride map unavailable ({exc}); keeping the open-loop gain")
        return lin
    if closed.K is None:
        logger.warning("closed-loop stride map is not controllable; keeping the open-loop gain")
        return lin
    logger.info(f"closed-loop stride map: spectral radius {closed.spectral_radius:.4f}")
    return closed


def reference_from_fixed_point(
    S_star: Sequence[float], delta_star: VppInput, params: TemplateParams, knots: int = 512
) -> ReferenceGait:
    """Record one VPP stride from VLO to VLO and spline it in x."""
    sim = TemplateSimulator(params, VppController(delta_star), tolerances=ANALYSIS_TOLERANCES)
    run = sim.run(state_from_section(S_star, params), t_end=5.0, max_vlo=1)
    if run.status != "section":
        raise MapFailure("reference stride did not reach the next VLO")
    rows = [row for row in run.rows if row["event"] == ""]
    x = [row["x"] for row in rows] + [run.final_state.x]
    y = [row["y"] for row in rows] + [run.final_state.y]
    xdot = [row["xdot"] for row in rows] + [run.final_state.xdot]
    return ReferenceGait.from_samples(x, y, xdot, knots=knots)


# ----------------------------------------------------------------------
# Serialization
# ----------------------------------------------------------------------
def _complex_pairs(values: Optional[np.ndarray]):
    if values is None:
        return None
    return [[float(v.real), float(v.imag)] for v in values]


def linearization_to_dict(lin: PoincareLinearization) -> Dict:
    return {
        "fixed_point": dict(zip(SECTION_FIELDS, (float(v) for v in lin.S_star))),
        "delta_star": {"r_vpp": lin.delta_star.r_vpp, "gamma": lin.delta_star.gamma},
        "fixed_point_residual": lin.fixed_point_residual,
        "J_S": lin.J_S.tolist(),
        "J_delta": lin.J_delta.tolist(),
        "eigenvalues": _complex_pairs(lin.eigenvalues),
        "spectral_radius": lin.spectral_radius,
        "Q": lin.Q.tolist(),
        "R": lin.R.tolist(),
        "K": lin.K.tolist() if lin.K is not None else None,
        "closed_loop_eigenvalues": _complex_pairs(lin.closed_loop_eigenvalues),
    }


def linearization_from_dict(data: Dict) -> PoincareLinearization:
    def complex_array(pairs):
        return None if pairs is None else np.array([complex(re, im) for re, im in pairs])

    return PoincareLinearization(
        S_star=np.array([data["fixed_point"][name] for name in SECTION_FIELDS]),
        delta_star=VppInput(**data["delta_star"]),
        J_S=np.array(data["J_S"]),
        J_delta=np.array(data["J_delta"]),
        eigenvalues=complex_array(data["eigenvalues"]),
        Q=np.array(data["Q"]),
        R=np.array(data["R"]),
        K=None if data["K"] is None else np.array(data["K"]),
        closed_loop_eigenvalues=complex_array(data.get("closed_loop_eigenvalues")),
        fixed_point_residual=float(data.get("fixed_point_residual", 0.0)),
    )


def save_linearization(lin: PoincareLinearization, path: str) -> None:
    output = Path(path)
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(json.dumps(linearization_to_dict(lin), indent=2), encoding="utf-8")


def load_linearization(path: str) -> PoincareLinearization:
    return linearization_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
