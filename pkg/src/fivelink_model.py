"""
Planar 5-link biped (trunk, two femurs, two shins, point feet) on a floating base.

Generalized coordinates q = (q1, q2, q3, q4, q5, x_b, y_b):

* q1 / q3: swing hip / knee, q2 / q4: stance hip / knee (relative angles),
* q5: absolute trunk angle from the upward vertical,
* (x_b, y_b): the hip point, where the trunk and both femurs meet.

Every link hangs along d(theta) = (sin theta, -cos theta); the trunk points up
along -d(q5). All angles are CCW-positive. Relabeling after each impact keeps
the stance leg on (q2, q4).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from scipy import linalg

from .errors import ModelError, SingularImpactMatrix, SingularKkt, ZeroLegLength

N_DOF = 7
N_ACT = 4
SWING_HIP, STANCE_HIP, SWING_KNEE, STANCE_KNEE, TRUNK, BASE_X, BASE_Y = range(N_DOF)

KKT_COND_LIMIT = 1e12

# Relabeling: swap (q1, q3) with (q2, q4); trunk and base unchanged.
RELABEL = np.eye(N_DOF)[[STANCE_HIP, SWING_HIP, STANCE_KNEE, SWING_KNEE, TRUNK, BASE_X, BASE_Y]]
ACTUATION = np.diag([1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class RobotParams:
    m_t: float = 12.5
    m_f: float = 0.7
    m_s: float = 0.7
    L_t: float = 0.42
    L_f: float = 0.19
    L_s: float = 0.19
    J_t: float = 0.23
    J_f: float = 0.0045
    J_s: float = 0.0045
    c_t: float = 0.21
    c_f: float = 0.13
    c_s: float = 0.13
    g: float = 9.81
    joint_friction: float = 0.01

    def __post_init__(self) -> None:
        for name in ("m_t", "m_f", "m_s", "L_t", "L_f", "L_s", "J_t", "J_f", "J_s"):
            if getattr(self, name) <= 0:
                raise ModelError(f"robot parameter {name} must be positive")
        for c, length in ((self.c_t, self.L_t), (self.c_f, self.L_f), (self.c_s, self.L_s)):
            if not 0.0 <= c <= length:
                raise ModelError("link CoM offset must lie on the link")
        if self.g < 0 or self.joint_friction < 0:
            raise ModelError("gravity and joint friction must be non-negative")

    @property
    def total_mass(self) -> float:
        return self.m_t + 2.0 * (self.m_f + self.m_s)


@dataclass(frozen=True, eq=False)
class RobotState:
    q: np.ndarray
    qdot: np.ndarray
    stance_leg: int = 1

    def __post_init__(self) -> None:
        q = np.asarray(self.q, dtype=float)
        qdot = np.asarray(self.qdot, dtype=float)
        if q.shape != (N_DOF,) or qdot.shape != (N_DOF,):
            raise ModelError(f"robot state needs {N_DOF}+{N_DOF} coordinates")
        if self.stance_leg not in (1, 2):
            raise ModelError("stance leg label must be 1 or 2")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)

    @property
    def swing_leg(self) -> int:
        return 3 - self.stance_leg

    def vector(self) -> np.ndarray:
        return np.concatenate((self.q, self.qdot))

    @classmethod
    def from_vector(cls, vec: np.ndarray, stance_leg: int = 1) -> "RobotState":
        return cls(vec[:N_DOF], vec[N_DOF:], stance_leg)


@dataclass(frozen=True, eq=False)
class DynamicsTerms:
    D: np.ndarray
    C: np.ndarray
    G: np.ndarray
    h: np.ndarray
    B: np.ndarray
    J_st: np.ndarray
    J_sw: np.ndarray
    Jdot_qdot_st: np.ndarray
    Jdot_qdot_sw: np.ndarray


# ----------------------------------------------------------------------
# Kinematics
# ----------------------------------------------------------------------
def _unit(index: int) -> np.ndarray:
    e = np.zeros(N_DOF)
    e[index] = 1.0
    return e


_A_TRUNK = _unit(TRUNK)
_A_FEMUR = {"swing": _A_TRUNK + _unit(SWING_HIP), "stance": _A_TRUNK + _unit(STANCE_HIP)}
_A_SHIN = {"swing": _A_FEMUR["swing"] + _unit(SWING_KNEE), "stance": _A_FEMUR["stance"] + _unit(STANCE_KNEE)}

Chain = List[Tuple[float, np.ndarray]]


def _hang(theta: float) -> np.ndarray:
    return np.array([math.sin(theta), -math.cos(theta)])


def _hang_prime(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def _chains(params: RobotParams) -> Dict[str, Chain]:
    chains: Dict[str, Chain] = {
        "hip": [],
        "trunk_com": [(-params.c_t, _A_TRUNK)],
        "trunk_top": [(-params.L_t, _A_TRUNK)],
    }
    for side in ("swing", "stance"):
        femur, shin = _A_FEMUR[side], _A_SHIN[side]
        chains[f"femur_com_{side}"] = [(params.c_f, femur)]
        chains[f"knee_{side}"] = [(params.L_f, femur)]
        chains[f"shin_com_{side}"] = [(params.L_f, femur), (params.c_s, shin)]
        chains[f"foot_{side}"] = [(params.L_f, femur), (params.L_s, shin)]
    return chains


def _links(params: RobotParams) -> List[Tuple[float, float, str, np.ndarray]]:
    """(mass, inertia, CoM point name, absolute-angle coefficients) per link."""
    links = [(params.m_t, params.J_t, "trunk_com", _A_TRUNK)]
    for side in ("swing", "stance"):
        links.append((params.m_f, params.J_f, f"femur_com_{side}", _A_FEMUR[side]))
        links.append((params.m_s, params.J_s, f"shin_com_{side}", _A_SHIN[side]))
    return links


def _point(chain: Chain, q: np.ndarray) -> np.ndarray:
    p = q[BASE_X:].copy()
    for length, a in chain:
        p += length * _hang(a @ q)
    return p


def _point_jacobian(chain: Chain, q: np.ndarray) -> np.ndarray:
    J = np.zeros((2, N_DOF))
    J[0, BASE_X] = 1.0
    J[1, BASE_Y] = 1.0
    for length, a in chain:
        J += length * np.outer(_hang_prime(a @ q), a)
    return J


def _point_jacobian_derivatives(chain: Chain, q: np.ndarray) -> np.ndarray:
    """dJ/dq_k stacked along the first axis, shape (7, 2, 7)."""
    dJ = np.zeros((N_DOF, 2, N_DOF))
    for length, a in chain:
        dJ += length * np.einsum("k,i,j->kij", a, -_hang(a @ q), a)
    return dJ


def _jdot_qdot(chain: Chain, q: np.ndarray, qdot: np.ndarray) -> np.ndarray:
    acc = np.zeros(2)
    for length, a in chain:
        acc += length * (-_hang(a @ q)) * (a @ qdot) ** 2
    return acc


def link_points(q: np.ndarray, params: RobotParams) -> Dict[str, np.ndarray]:
    q = np.asarray(q, dtype=float)
    return {name: _point(chain, q) for name, chain in _chains(params).items()}


def point_jacobian(q: np.ndarray, params: RobotParams, name: str) -> np.ndarray:
    return _point_jacobian(_chains(params)[name], np.asarray(q, dtype=float))


def foot_position(q: np.ndarray, params: RobotParams, side: str = "stance") -> np.ndarray:
    return _point(_chains(params)[f"foot_{side}"], np.asarray(q, dtype=float))


def center_of_mass(q: np.ndarray, params: RobotParams) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    chains = _chains(params)
    total = sum(mass * _point(chains[name], q) for mass, _, name, _ in _links(params))
    return total / params.total_mass


def com_jacobian(q: np.ndarray, params: RobotParams) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    chains = _chains(params)
    total = sum(mass * _point_jacobian(chains[name], q) for mass, _, name, _ in _links(params))
    return total / params.total_mass


def trunk_pitch(q: np.ndarray) -> float:
    """Trunk angle in the template convention (pi/2 = upright)."""
    return math.pi / 2 + float(q[TRUNK])


# ----------------------------------------------------------------------
# Dynamics
# ----------------------------------------------------------------------
def mass_matrix(q: np.ndarray, params: RobotParams) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    chains = _chains(params)
    D = np.zeros((N_DOF, N_DOF))
    for mass, inertia, name, a in _links(params):
        Jv = _point_jacobian(chains[name], q)
        D += mass * Jv.T @ Jv + inertia * np.outer(a, a)
    return 0.5 * (D + D.T)


def mass_matrix_derivatives(q: np.ndarray, params: RobotParams) -> np.ndarray:
    """dD/dq_k stacked along the first axis, shape (7, 7, 7)."""
    q = np.asarray(q, dtype=float)
    chains = _chains(params)
    dD = np.zeros((N_DOF, N_DOF, N_DOF))
    for mass, _, name, _ in _links(params):
        Jv = _point_jacobian(chains[name], q)
        dJ = _point_jacobian_derivatives(chains[name], q)
        term = np.einsum("kai,aj->kij", dJ, Jv)
        dD += mass * (term + term.transpose(0, 2, 1))
    return dD


def coriolis_matrix(q: np.ndarray, qdot: np.ndarray, params: RobotParams) -> np.ndarray:
    """C(q, qdot) from the Christoffel symbols of D, so that Ddot - 2C is skew."""
    dD = mass_matrix_derivatives(q, params)
    christoffel = 0.5 * (dD.transpose(1, 2, 0) + dD.transpose(1, 0, 2) - dD)
    return np.einsum("ijk,k->ij", christoffel, np.asarray(qdot, dtype=float))


def gravity_vector(q: np.ndarray, params: RobotParams) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    chains = _chains(params)
    G = np.zeros(N_DOF)
    for mass, _, name, _ in _links(params):
        G += mass * params.g * _point_jacobian(chains[name], q)[1]
    return G


def potential_energy(q: np.ndarray, params: RobotParams) -> float:
    points = link_points(q, params)
    return float(sum(mass * params.g * points[name][1] for mass, _, name, _ in _links(params)))


def kinetic_energy(state: RobotState, params: RobotParams) -> float:
    return float(0.5 * state.qdot @ mass_matrix(state.q, params) @ state.qdot)


def dynamics_terms(state: RobotState, params: RobotParams) -> DynamicsTerms:
    q, qdot = state.q, state.qdot
    chains = _chains(params)
    C = coriolis_matrix(q, qdot, params)
    G = gravity_vector(q, params)
    friction = np.zeros(N_DOF)
    friction[:N_ACT] = params.joint_friction * qdot[:N_ACT]
    return DynamicsTerms(
        D=mass_matrix(q, params),
        C=C,
        G=G,
        h=C @ qdot + G + friction,
        B=ACTUATION.copy(),
        J_st=_point_jacobian(chains["foot_stance"], q),
        J_sw=_point_jacobian(chains["foot_swing"], q),
        Jdot_qdot_st=_jdot_qdot(chains["foot_stance"], q, qdot),
        Jdot_qdot_sw=_jdot_qdot(chains["foot_swing"], q, qdot),
    )


def embed_torques(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (N_ACT,):
        raise ModelError(f"expected {N_ACT} joint torques, got shape {u.shape}")
    return np.concatenate((u, np.zeros(N_DOF - N_ACT)))


def constrained_accel(
    state: RobotState,
    u: np.ndarray,
    params: RobotParams,
    terms: DynamicsTerms | None = None,
    external: np.ndarray | None = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Accelerations and stance-foot force with the stance foot pinned.

    ``external`` is an optional generalized force added to the right-hand side.
    """
    terms = terms or dynamics_terms(state, params)
    rhs_top = terms.B @ embed_torques(u) - terms.h
    if external is not None:
        rhs_top = rhs_top + external
    kkt = np.block([[terms.D, -terms.J_st.T], [terms.J_st, np.zeros((2, 2))]])
    cond = np.linalg.cond(kkt)
    if not np.isfinite(cond) or cond > KKT_COND_LIMIT:
        raise SingularKkt(f"constrained dynamics condition number {cond:.3e}")
    sol = linalg.solve(kkt, np.concatenate((rhs_top, -terms.Jdot_qdot_st)))
    return sol[:N_DOF], sol[N_DOF:]


# ----------------------------------------------------------------------
# Impact
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ImpactResult:
    qdot_plus: np.ndarray  # before relabeling
    delta_F: np.ndarray
    state: RobotState  # relabeled post-impact state


def impact_matrix(q: np.ndarray, params: RobotParams) -> np.ndarray:
    chains = _chains(params)
    D = mass_matrix(q, params)
    J_sw = _point_jacobian(chains["foot_swing"], np.asarray(q, dtype=float))
    return np.block([[D, -J_sw.T], [J_sw, np.zeros((2, 2))]])


def impact_map(state: RobotState, params: RobotParams) -> ImpactResult:
    """Inelastic swing-foot strike followed by the leg relabeling."""
    if not np.all(np.isfinite(state.qdot)):
        raise SingularImpactMatrix("non-finite pre-impact velocity")
    M = impact_matrix(state.q, params)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > KKT_COND_LIMIT:
        raise SingularImpactMatrix(f"impact matrix condition number {cond:.3e}")
    D = M[:N_DOF, :N_DOF]
    sol = linalg.solve(M, np.concatenate((D @ state.qdot, np.zeros(2))))
    qdot_plus, delta_F = sol[:N_DOF], sol[N_DOF:]
    # base point stays at the hip; only labels change
    relabeled = RobotState(RELABEL @ state.q, RELABEL @ qdot_plus, state.swing_leg)
    return ImpactResult(qdot_plus=qdot_plus, delta_F=delta_F, state=relabeled)


# ----------------------------------------------------------------------
# Virtual leg and initial conditions
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class VirtualLeg:
    """Hip-to-foot line of one leg; alpha is the foot->hip angle from +x."""

    L: float
    alpha: float
    Ldot: float
    alphadot: float
    dL_dq: np.ndarray
    dalpha_dq: np.ndarray


def virtual_leg(state: RobotState, params: RobotParams, side: str) -> VirtualLeg:
    chains = _chains(params)
    q, qdot = state.q, state.qdot
    r = q[BASE_X:] - _point(chains[f"foot_{side}"], q)
    J = np.zeros((2, N_DOF))
    J[:, BASE_X:] = np.eye(2)
    J = J - _point_jacobian(chains[f"foot_{side}"], q)  # d(hip - foot)/dq
    L = float(np.hypot(r[0], r[1]))
    if L <= 1e-12:
        raise ZeroLegLength("virtual leg length is zero")
    e_r = r / L
    e_perp = np.array([-e_r[1], e_r[0]])
    dL = e_r @ J
    dalpha = (e_perp @ J) / L
    return VirtualLeg(
        L=L,
        alpha=math.atan2(r[1], r[0]),
        Ldot=float(dL @ qdot),
        alphadot=float(dalpha @ qdot),
        dL_dq=dL,
        dalpha_dq=dalpha,
    )


def leg_joint_angles(L: float, alpha: float, q5: float, params: RobotParams) -> Tuple[float, float]:
    """(hip, knee) angles placing the foot at distance L and leg angle alpha.

    The knee bends forward (negative knee angle).
    """
    reach = (L**2 - params.L_f**2 - params.L_s**2) / (2.0 * params.L_f * params.L_s)
    if not -1.0 <= reach <= 1.0:
        raise ModelError(f"leg length {L:.4f} is not reachable")
    knee = -math.acos(reach)
    theta_leg = alpha - math.pi / 2  # hanging angle of hip->foot
    femur = theta_leg - math.atan2(params.L_s * math.sin(knee), params.L_f + params.L_s * math.cos(knee))
    return femur - q5, knee


def stance_consistent_velocity(q: np.ndarray, angle_rates: np.ndarray, params: RobotParams) -> np.ndarray:
    """Full qdot whose base velocity keeps the stance foot at rest."""
    q = np.asarray(q, dtype=float)
    qdot = np.zeros(N_DOF)
    qdot[:TRUNK + 1] = np.asarray(angle_rates, dtype=float)
    J_st = _point_jacobian(_chains(params)["foot_stance"], q)
    qdot[BASE_X:] = -J_st[:, :TRUNK + 1] @ qdot[:TRUNK + 1]
    return qdot


def place_stance_foot(q: np.ndarray, params: RobotParams, foot: Tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Shift the base so the stance foot sits at ``foot``."""
    q = np.array(q, dtype=float)
    q[BASE_X:] += np.asarray(foot, dtype=float) - foot_position(q, params, "stance")
    return q
