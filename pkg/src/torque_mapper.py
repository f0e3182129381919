"""
Joint torques realizing desired foot-end forces on the 5-link robot.

Two mappings are provided:

* operational-space control for the constrained, underactuated system: the task
  force is mapped through the stacked hip-minus-foot Jacobians and a null-space
  torque removes whatever would act on the unactuated coordinates;
* the polar Jacobian transpose, leg by leg, over each leg's hip and knee.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from .errors import SingularTaskInertia
from .fivelink_model import (
    ACTUATION,
    BASE_X,
    N_ACT,
    N_DOF,
    STANCE_HIP,
    STANCE_KNEE,
    SWING_HIP,
    SWING_KNEE,
    DynamicsTerms,
    RobotParams,
    RobotState,
    virtual_leg,
)
from .numerics import pseudo_inverse

logger = logging.getLogger(__name__)

TASK_SINGULAR_RATIO = 1e-6  # eigenvalues below this fraction of the largest get damped


@dataclass(frozen=True, eq=False)
class TaskJacobians:
    J: np.ndarray  # 4x7, rows: stance (hip - foot), swing (hip - foot)
    J_c: np.ndarray
    P: np.ndarray
    M_c: np.ndarray
    N: np.ndarray
    J_T_sharp: np.ndarray
    damping: float = 0.0


def _hip_minus_foot(J_foot: np.ndarray) -> np.ndarray:
    J = -J_foot.copy()
    J[0, BASE_X] += 1.0
    J[1, BASE_X + 1] += 1.0
    return J


def damped_task_inertia(task_inv: np.ndarray, ratio: float = TASK_SINGULAR_RATIO) -> Tuple[np.ndarray, float]:
    """Inverse of J M_c^-1 P J^T with variable damping near singular directions.

    Below ``eps = ratio * s_max`` the damping grows as eps (1 - (s_min / eps)^2);
    a straight swing knee is the usual case. Returns the inverse and the
    damping applied.
    """
    if not np.all(np.isfinite(task_inv)):
        raise SingularTaskInertia("task inertia has non-finite entries")
    values, vectors = linalg.eigh(0.5 * (task_inv + task_inv.T))
    if values[-1] <= 0.0:
        raise SingularTaskInertia(f"task inertia has no positive direction (eigenvalues {values})")
    values = np.maximum(values, 0.0)
    eps = ratio * values[-1]
    damping = eps * (1.0 - (values[0] / eps) ** 2) if values[0] < eps else 0.0
    if damping > 0.0:
        logger.debug(f"task inertia damped by {damping:.3e} (smallest eigenvalue {values[0]:.3e})")
    return (vectors / (values + damping)) @ vectors.T, float(damping)


def task_jacobians(terms: DynamicsTerms) -> TaskJacobians:
    J = np.vstack([_hip_minus_foot(terms.J_st), _hip_minus_foot(terms.J_sw)])
    J_c = terms.J_st
    eye = np.eye(N_DOF)
    P = eye - pseudo_inverse(J_c) @ J_c
    P = 0.5 * (P + P.T)
    M_c = P @ terms.D + eye - P
    M_c_inv_P = linalg.solve(M_c, P)
    task_inertia, damping = damped_task_inertia(J @ M_c_inv_P @ J.T)
    J_T_sharp = task_inertia @ J @ M_c_inv_P
    N = eye - J.T @ J_T_sharp
    return TaskJacobians(J=J, J_c=J_c, P=P, M_c=M_c, N=N, J_T_sharp=J_T_sharp, damping=damping)


def osc_full_torques(F: np.ndarray, terms: DynamicsTerms, actuation: Optional[np.ndarray] = None) -> np.ndarray:
    """Generalized torque J^T F + N tau0 with the unactuated rows cancelled."""
    F = np.asarray(F, dtype=float)
    B = ACTUATION if actuation is None else np.asarray(actuation, dtype=float)
    tasks = task_jacobians(terms)
    U = np.eye(N_DOF) - B
    primary = tasks.J.T @ F
    tau0 = -pseudo_inverse(U @ tasks.N) @ (U @ primary)
    return primary + tasks.N @ tau0


def osc_torques(F: np.ndarray, terms: DynamicsTerms) -> np.ndarray:
    """Actuated joint torques (q1..q4 order) for the stacked task force F."""
    tau_full = osc_full_torques(F, terms)
    residual = np.linalg.norm(tau_full[N_ACT:])
    if residual > 1e-9 * max(1.0, np.linalg.norm(tau_full)):
        logger.warning(f"OSC left {residual:.3e} on unactuated coordinates")
    return tau_full[:N_ACT]


def polar_jt_torques(state: RobotState, F_polar: np.ndarray, params: RobotParams) -> np.ndarray:
    """Per-leg polar Jacobian transpose; F_polar = (F_r_st, F_t_st, F_r_sw, F_t_sw)."""
    F_polar = np.asarray(F_polar, dtype=float)
    tau = np.zeros(N_ACT)
    for side, (F_r, F_t), (hip, knee) in (
        ("stance", F_polar[:2], (STANCE_HIP, STANCE_KNEE)),
        ("swing", F_polar[2:], (SWING_HIP, SWING_KNEE)),
    ):
        leg = virtual_leg(state, params, side)
        columns = [hip, knee]
        tau[columns] = F_r * leg.dL_dq[columns] - F_t * leg.L * leg.dalpha_dq[columns]
    return tau
