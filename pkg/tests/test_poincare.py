import math

import numpy as np
import pytest

from src.btslip_model import TemplateParams
from src.errors import FellBeforeSection, MapFailure, Uncontrollable
from src.numerics import spectral_radius
from src.poincare import (
    NewtonSettings,
    PoincareLinearization,
    analyze_gait,
    dlqr_update,
    find_fixed_point,
    finite_difference_jacobian,
    linearization_to_dict,
    linearize,
    load_linearization,
    reference_from_fixed_point,
    return_map,
    save_linearization,
)
from src.template_control import VppInput

S_NOMINAL = np.array([1.07, math.pi / 2, 1.1, 0.0, 0.0])


def _make_linearization(K=None) -> PoincareLinearization:
    J_S = np.diag([0.9, 0.5, 0.3, 0.2, 0.1])
    J_delta = np.zeros((5, 2))
    J_delta[0, 0] = J_delta[1, 1] = 1.0
    return PoincareLinearization(
        S_star=S_NOMINAL.copy(),
        delta_star=VppInput(r_vpp=0.1, gamma=0.0),
        J_S=J_S,
        J_delta=J_delta,
        eigenvalues=np.array([0.9, 0.5 + 0.1j, 0.5 - 0.1j, 0.2, 0.1]),
        Q=np.eye(5),
        R=np.eye(2),
        K=K,
    )


@pytest.fixture(scope="module")
def nominal_gait() -> PoincareLinearization:
    return analyze_gait(TemplateParams(), VppInput())


def test_return_map_rejects_bad_section():
    with pytest.raises(MapFailure):
        return_map([1.0, math.pi / 2, 1.0], VppInput(), TemplateParams())
    with pytest.raises(MapFailure):
        return_map([1.0, math.nan, 1.0, 0.0, 0.0], VppInput(), TemplateParams())


def test_return_map_reports_fall():
    tipped = np.array([1.07, math.pi / 2 + 1.2, 1.1, 0.0, 0.0])
    with pytest.raises(FellBeforeSection):
        return_map(tipped, VppInput(), TemplateParams())


def test_dlqr_update_moves_pivot_against_error():
    K = np.zeros((2, 5))
    K[0, 0] = 2.0
    K[1, 1] = 0.5
    lin = _make_linearization(K)
    S = S_NOMINAL + np.array([0.01, -0.02, 0.0, 0.0, 0.0])
    delta = dlqr_update(lin, S)
    assert delta.r_vpp == pytest.approx(0.1 - 0.02)
    assert delta.gamma == pytest.approx(0.01)
    assert dlqr_update(lin, S_NOMINAL) == VppInput(r_vpp=0.1, gamma=0.0)


def test_dlqr_update_keeps_pivot_above_com():
    K = np.zeros((2, 5))
    K[0, 0] = 100.0
    delta = dlqr_update(_make_linearization(K), S_NOMINAL + np.array([0.5, 0, 0, 0, 0]))
    assert delta.r_vpp == 0.0


def test_dlqr_update_without_gain():
    with pytest.raises(Uncontrollable):
        dlqr_update(_make_linearization(), S_NOMINAL)


def test_analysis_document_layout(tmp_path):
    lin = _make_linearization(K=np.ones((2, 5)))
    doc = linearization_to_dict(lin)
    assert list(doc["fixed_point"]) == ["y", "phi", "xdot", "ydot", "phidot"]
    assert doc["eigenvalues"][1] == [0.5, 0.1]
    assert doc["spectral_radius"] == pytest.approx(0.9)
    assert np.array(doc["J_delta"]).shape == (5, 2)

    path = tmp_path / "analysis.json"
    save_linearization(lin, str(path))
    loaded = load_linearization(str(path))
    assert np.allclose(loaded.K, lin.K)
    assert loaded.closed_loop_eigenvalues is None


@pytest.mark.slow
def test_nominal_gait_fixed_point_and_stability(nominal_gait):
    lin = nominal_gait
    assert lin.fixed_point_residual < 1e-9
    assert np.all(np.abs(lin.eigenvalues) <= 1.0 + 1e-3)
    assert 0.95 <= lin.spectral_radius <= 1.0 + 1e-3
    assert np.sum(np.abs(lin.eigenvalues.imag) > 1e-9) >= 2


@pytest.mark.slow
def test_nominal_gait_dlqr_stabilizes(nominal_gait):
    lin = nominal_gait
    assert lin.K is not None
    assert lin.K.shape == (2, 5)
    assert spectral_radius(lin.J_S - lin.J_delta @ lin.K) < 1.0
    assert np.allclose(sorted(np.abs(lin.closed_loop_eigenvalues)), sorted(np.abs(np.linalg.eigvals(lin.J_S - lin.J_delta @ lin.K))))


@pytest.mark.slow
def test_newton_stops_at_fixed_point(nominal_gait):
    S = find_fixed_point(nominal_gait.S_star, nominal_gait.delta_star, TemplateParams())
    assert np.array_equal(S, nominal_gait.S_star)


def test_newton_reports_unreachable_section():
    tipped = np.array([1.07, math.pi / 2 + 1.2, 1.1, 0.0, 0.0])
    with pytest.raises(MapFailure):
        find_fixed_point(tipped, VppInput(), TemplateParams())


@pytest.mark.slow
def test_jacobian_step_halving_agrees(nominal_gait):
    params = TemplateParams()
    halved = linearize(nominal_gait.S_star, nominal_gait.delta_star, params, settings=NewtonSettings(fd_step=0.5e-5))
    assert np.max(np.abs(halved.J_S - nominal_gait.J_S)) < 1e-4


@pytest.mark.slow
def test_reference_stride_starts_and_ends_at_fixed_point(nominal_gait):
    ref = reference_from_fixed_point(nominal_gait.S_star, nominal_gait.delta_star, TemplateParams(), knots=256)
    assert ref.ybar(0.0) == pytest.approx(nominal_gait.S_star[0], abs=1e-6)
    assert ref.xdotbar(0.0) == pytest.approx(nominal_gait.S_star[2], abs=1e-6)
    assert ref.ybar(ref.stride_length) == pytest.approx(ref.ybar(0.0), abs=1e-9)


def test_forward_difference_at_lower_bound():
    A = np.array([[1.0, 2.0], [3.0, -1.0], [0.5, 0.0]])

    def fn(d):
        if d[0] < 0.0:
            raise ValueError("below bound")
        return A @ d

    J = finite_difference_jacobian(fn, [0.0, 0.3], [1e-5, 1e-5], lower=[0.0, -np.inf])
    assert np.allclose(J, A, atol=1e-9)
    with pytest.raises(ValueError):
        finite_difference_jacobian(fn, [0.0, 0.3], [1e-5, 1e-5])


def test_gait_search_keeps_first_stable_candidate(monkeypatch):
    seeds = [np.full(5, 1.0), np.full(5, 2.0), np.full(5, 3.0)]
    visited = []

    def fake_newton(guess, *args, **kwargs):
        visited.append(float(guess[0]))
        return guess

    monkeypatch.setattr("src.poincare.seed_candidates", lambda *args, **kwargs: seeds)
    monkeypatch.setattr("src.poincare.find_fixed_point", fake_newton)
    monkeypatch.setattr("src.poincare.linearize", lambda S, delta, *args, **kwargs: (S, kwargs["J_S"]))

    radii = {1.0: 1.04, 2.0: 0.99, 3.0: 0.5}
    monkeypatch.setattr("src.poincare.state_jacobian", lambda S, *args, **kwargs: radii[S[0]] * np.eye(5))
    S, J_S = analyze_gait(TemplateParams(), VppInput())
    assert visited == [1.0, 2.0]
    assert S[0] == 2.0 and J_S[0, 0] == 0.99

    visited.clear()
    radii = {1.0: 1.04, 2.0: 1.02, 3.0: 1.03}
    S, _ = analyze_gait(TemplateParams(), VppInput())
    assert visited == [1.0, 2.0, 3.0]
    assert S[0] == 2.0


def test_return_map_is_deterministic():
    first = return_map(S_NOMINAL, VppInput(), TemplateParams())
    second = return_map(S_NOMINAL, VppInput(), TemplateParams())
    assert np.array_equal(first, second)


@pytest.mark.slow
def test_newton_reconverges_from_offset_guess(nominal_gait):
    params = TemplateParams()
    S = find_fixed_point(nominal_gait.S_star + 1e-3, nominal_gait.delta_star, params)
    assert np.linalg.norm(return_map(S, nominal_gait.delta_star, params) - S) < 1e-8
    # the gait family lets Newton settle on a neighbour of S*
    assert np.max(np.abs(S - nominal_gait.S_star)) < 1e-2


@pytest.mark.slow
def test_linearize_with_pivot_at_com(nominal_gait):
    lin = linearize(nominal_gait.S_star, VppInput(r_vpp=0.0, gamma=0.0), TemplateParams())
    assert np.all(np.isfinite(lin.J_delta))
    assert lin.J_delta.shape == (5, 2)
