import math

import numpy as np
import pytest

from src.errors import NonFiniteState, NotStabilizable
from src.numerics import (
    Direction,
    EventFunction,
    Tolerances,
    controllability_rank,
    dare_residual,
    eigenvalues,
    integrate_with_events,
    pseudo_inverse,
    solve_dare,
    spectral_radius,
)


def _decay(t, x):
    return -x


def _random_stabilizable(rng, n, m):
    while True:
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, m))
        if controllability_rank(A, B) == n:
            return A, B


def test_exponential_decay_matches_closed_form():
    traj = integrate_with_events(_decay, [1.0], (0.0, 1.0))
    assert traj.final_state[0] == pytest.approx(math.exp(-1.0), abs=1e-6)
    assert np.all(np.diff(traj.times) > 0)


def test_terminal_event_located_at_log_two():
    half = EventFunction(0, lambda t, x: x[0] - 0.5, Direction.FALLING, terminal=True)
    traj = integrate_with_events(_decay, [1.0], (0.0, 5.0), [half])
    assert traj.terminated_by == 0
    assert traj.final_time == pytest.approx(math.log(2.0), abs=1e-8)
    assert abs(traj.events[0].state[0] - 0.5) < 1e-9


def test_affine_event_recorded_without_stopping():
    tick = EventFunction(3, lambda t, x: t - 0.5)
    traj = integrate_with_events(lambda t, x: np.zeros(1), [1.0], (0.0, 1.0), [tick])
    assert traj.terminated_by is None
    assert traj.final_time == pytest.approx(1.0)
    assert [rec.index for rec in traj.events] == [3]
    assert traj.events[0].time == pytest.approx(0.5, abs=1e-12)


def test_event_direction_filters_crossings():
    # sin(t) rises through zero at 2*pi and falls through it at pi
    rising = EventFunction(0, lambda t, x: math.sin(t), Direction.RISING)
    traj = integrate_with_events(lambda t, x: np.zeros(1), [0.0], (1.0, 7.0), [rising], max_step=0.1)
    assert len(traj.events) == 1
    assert traj.events[0].time == pytest.approx(2 * math.pi, abs=1e-8)


def test_tighter_tolerance_reduces_error():
    exact = math.exp(-1.0)
    loose = integrate_with_events(_decay, [1.0], (0.0, 1.0), tolerances=Tolerances(rel=1e-6, abs=1e-8))
    tight = integrate_with_events(_decay, [1.0], (0.0, 1.0), tolerances=Tolerances(rel=1e-9, abs=1e-11))
    err_loose = abs(loose.final_state[0] - exact)
    err_tight = abs(tight.final_state[0] - exact)
    assert err_tight * 4 <= err_loose



def test_high_order_method_takes_fewer_steps():
    tol = dict(rel=1e-11, abs=1e-12)
    rk45 = integrate_with_events(_decay, [1.0], (0.0, 1.0), tolerances=Tolerances(**tol))
    dop853 = integrate_with_events(_decay, [1.0], (0.0, 1.0), tolerances=Tolerances(**tol, method="DOP853"))
    assert dop853.final_state[0] == pytest.approx(math.exp(-1.0), rel=1e-9)
    assert len(dop853.times) < len(rk45.times)
    with pytest.raises(ValueError):
        integrate_with_events(_decay, [1.0], (0.0, 1.0), tolerances=Tolerances(method="Radau"))

def test_non_finite_state_rejected():
    with pytest.raises(NonFiniteState):
        integrate_with_events(_decay, [math.nan], (0.0, 1.0))
    with pytest.raises(NonFiniteState):
        integrate_with_events(lambda t, x: np.array([math.inf]), [1.0], (0.0, 1.0))


def test_duplicate_event_indices_rejected():
    events = [EventFunction(1, lambda t, x: x[0]), EventFunction(1, lambda t, x: t)]
    with pytest.raises(ValueError):
        integrate_with_events(_decay, [1.0], (0.0, 1.0), events)


def test_pseudo_inverse_simple_cases():
    assert np.allclose(pseudo_inverse(np.eye(3)), np.eye(3))
    assert np.allclose(pseudo_inverse(np.array([[1.0, 0.0]])), np.array([[1.0], [0.0]]))
    assert np.allclose(pseudo_inverse(np.zeros((2, 3))), np.zeros((3, 2)))


def test_pseudo_inverse_penrose_conditions():
    rng = np.random.default_rng(0)
    for _ in range(20):
        M = rng.normal(size=(4, 2)) @ rng.normal(size=(2, 5))  # rank 2
        P = pseudo_inverse(M)
        scale = max(1.0, np.linalg.norm(M))
        assert np.linalg.norm(M @ P @ M - M) < 1e-10 * scale
        assert np.linalg.norm(P @ M @ P - P) < 1e-10 * max(1.0, np.linalg.norm(P))
        assert np.allclose(M @ P, (M @ P).T, atol=1e-10)
        assert np.allclose(P @ M, (P @ M).T, atol=1e-10)


def test_eigenvalues_known_spectra():
    assert np.allclose(sorted(eigenvalues(np.diag([2.0, 3.0])).real), [2.0, 3.0])
    rot = eigenvalues(np.array([[0.0, -1.0], [1.0, 0.0]]))
    assert sorted(rot.imag) == pytest.approx([-1.0, 1.0])
    companion = np.array([[6.0, -11.0, 6.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    assert sorted(eigenvalues(companion).real) == pytest.approx([1.0, 2.0, 3.0])


def test_eigenvalues_sorted_by_magnitude():
    values = eigenvalues(np.diag([0.1, -3.0, 2.0]))
    assert list(np.abs(values)) == pytest.approx([3.0, 2.0, 0.1])


def test_dare_scalar_oracle():
    sol = solve_dare(np.array([[0.5]]), np.array([[1.0]]), np.array([[1.0]]), np.array([[1.0]]))
    assert sol.P[0, 0] == pytest.approx(1.13278, abs=1e-4)
    assert sol.K[0, 0] == pytest.approx(0.26556, abs=1e-4)


def test_dare_zero_dynamics():
    Q = np.diag([2.0, 3.0])
    sol = solve_dare(np.zeros((2, 2)), np.eye(2), Q, np.eye(2))
    assert np.allclose(sol.P, Q)
    assert np.allclose(sol.K, 0.0)


def test_dare_random_systems_residual_and_stability():
    rng = np.random.default_rng(42)
    for n in range(2, 6):
        A, B = _random_stabilizable(rng, n, 2)
        sol = solve_dare(A, B, np.eye(n), np.eye(2))
        assert dare_residual(A, B, np.eye(n), np.eye(2), sol.P) < 1e-8 * max(1.0, np.linalg.norm(sol.P))
        assert spectral_radius(A - B @ sol.K) < 1.0
        assert np.allclose(sol.P, sol.P.T)


def test_dare_matches_riccati_iteration():
    rng = np.random.default_rng(7)
    for _ in range(5):
        A = 0.5 * rng.normal(size=(2, 2))
        B = rng.normal(size=(2, 1))
        Q, R = np.eye(2), np.eye(1)
        P = Q.copy()
        for _ in range(2000):
            P = A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A) + Q
        assert np.allclose(solve_dare(A, B, Q, R).P, P, atol=1e-6)


def test_dare_unstabilizable_raises():
    A = np.diag([2.0, 0.5])
    B = np.array([[0.0], [1.0]])  # unstable mode unreachable
    with pytest.raises(NotStabilizable):
        solve_dare(A, B, np.eye(2), np.eye(1))
