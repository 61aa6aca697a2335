from __future__ import annotations

import dataclasses
import json
import math

import numpy as np
import pytest

from oscint.errors import DegeneratePhaseError, DomainError
from oscint.geometry import Subspace
from oscint.kakeya_experiment import kakeya_tubes
from oscint.partition import Variety, kakeya_variety, linear_poly
from oscint.phase_core import build_builtin
from oscint.transverse_geom import (
    TangencyConfig,
    build_W,
    classify,
    cone_normal,
    equidistribution_scan,
    is_narrow,
    kakeya_core_samples,
    l_residual,
    level_set_L,
    random_configuration,
    tangent_packets,
    transversality_angle,
    v_minus,
)

E = np.eye(4)


@pytest.fixture(scope="module")
def cone():
    return build_builtin("circular_cone", 4)


@pytest.fixture(scope="module")
def kak():
    return build_builtin("kakeya_n", 4)


def _proj(S):
    return S.basis @ S.basis.T


def _plane_example():
    return Subspace.span(np.array([E[0] + E[3], E[1]]).T)


# ---------------------------------------------------------------------------
# principal angles


def test_transversality_angle_trivia():
    V = Subspace.span(E[:, :2])
    assert transversality_angle(V, V) == pytest.approx(0.0, abs=1e-12)
    assert transversality_angle(V, V.complement()) == pytest.approx(math.pi / 2)
    a = Subspace.span(np.array([[1.0, 0]]).T)
    b = Subspace.span(np.array([[1.0, 1.0]]).T / math.sqrt(2))
    assert transversality_angle(a, b) == pytest.approx(math.pi / 4)


# ---------------------------------------------------------------------------
# the set L


def test_circular_cone_L_is_one_direction(cone):
    L = level_set_L(cone, np.zeros(4), _plane_example())
    assert L.shape == (1, 3)
    # -e_1 is a double root in the e_2 direction, so a 1e-12 residual only pins it to ~1e-6
    assert np.allclose(L[0], [-1.0, 0.0, 0.0], atol=1e-6)


def test_tangent_plane_contains_its_direction(cone):
    # V spanned by the normal at omega_0 and two tangent directions
    w0 = np.array([0.2, -0.1, 1.0])
    w0 /= np.linalg.norm(w0)
    N = cone_normal(cone, np.zeros(4), w0)
    T = np.zeros((4, 2))
    T[:3, :] = Subspace.span(w0[:, None]).complement().basis
    V = Subspace.span(np.column_stack([N, T[:, 0]]))
    assert np.linalg.norm(l_residual(cone, np.zeros(4), V, w0)) <= 1e-12
    L = level_set_L(cone, np.zeros(4), V)
    assert np.min(np.degrees(np.arccos(np.clip(np.abs(L @ w0), 0, 1)))) <= 1e-4


def test_model_cone_generic_plane():
    ph = build_builtin("model_parabolic_cone", 4)
    rng = np.random.default_rng(0)
    V, eta = random_configuration(ph, np.zeros(4), 8, rng)
    L = level_set_L(ph, np.zeros(4), V)
    assert len(L) >= 1
    assert np.max(np.linalg.norm(l_residual(ph, np.zeros(4), V, L), axis=1)) <= 1e-9


def test_horizontal_V_is_degenerate(cone):
    V = Subspace.span(E[:, :2])
    with pytest.raises(DegeneratePhaseError):
        v_minus(V)
    with pytest.raises(DegeneratePhaseError):
        level_set_L(cone, np.zeros(4), V)


# ---------------------------------------------------------------------------
# narrow / broad


def test_circular_cone_example_is_narrow(cone):
    r = classify(cone, np.zeros(4), _plane_example(), [-1, 0, 0], 8)
    assert r.classification == "narrow" and r.ok
    assert r.max_L_deviation <= 10 * 8**-2
    json.dumps(r.to_dict())


def test_eta_off_L_is_rejected(cone):
    with pytest.raises(DomainError):
        classify(cone, np.zeros(4), _plane_example(), [1, 0, 0], 8)


def test_boundary_angle_is_broad():
    K = 8
    assert not is_narrow(math.pi / 2 - K**-2, K)
    assert is_narrow(math.pi / 2 - K**-2 + 1e-12, K)


def test_two_separated_normals_give_broad(cone):
    x0 = np.zeros(4)
    eta = np.array([0.0, 0.0, 1.0])
    other = np.array([0.5, 0.0, 1.0]) / math.hypot(0.5, 1.0)
    V = Subspace.span(np.column_stack([cone_normal(cone, x0, eta), cone_normal(cone, x0, other)]))
    r = classify(cone, x0, V, eta, 8)
    assert r.classification == "broad"
    assert r.W.dim + V.dim == 4
    assert r.angle_VW >= 8**-4


def test_W_is_orthonormal_and_complementary(cone):
    rng = np.random.default_rng(4)
    V, eta = random_configuration(cone, np.zeros(4), 8, rng, narrow=False)
    W = build_W(cone, np.zeros(4), V, eta)
    assert np.allclose(W.basis.T @ W.basis, np.eye(W.dim), atol=1e-10)
    assert W.dim + V.dim == 4


def test_W_is_scale_invariant(cone, kak):
    rng = np.random.default_rng(5)
    for ph in (cone, kak):
        for _ in range(5):
            V, eta = random_configuration(ph, np.zeros(4), 8, rng, narrow=False)
            W1 = build_W(ph, np.zeros(4), V, eta)
            W2 = build_W(ph, np.zeros(4), V, 3.7 * eta)
            assert W1.dim == W2.dim
            assert np.allclose(_proj(W1), _proj(W2), atol=1e-8)


def test_W_is_independent_of_A(cone, kak):
    rng = np.random.default_rng(6)
    for ph in (cone, kak):
        for _ in range(5):
            V, eta = random_configuration(ph, np.zeros(4), 8, rng, narrow=False)
            A = V.complement().basis.T
            M = rng.standard_normal((len(A), len(A))) + 3 * np.eye(len(A))
            W1 = build_W(ph, np.zeros(4), V, eta)
            W2 = build_W(ph, np.zeros(4), V, eta, A=M @ A)
            assert np.allclose(_proj(W1), _proj(W2), atol=1e-8)


def test_build_W_rejects_bad_A(cone):
    V = _plane_example()
    with pytest.raises(DomainError):
        build_W(cone, np.zeros(4), V, [0, 0, 1.0], A=np.eye(4)[:2])


@pytest.mark.parametrize("name,xbar", [("circular_cone", (0, 0, 0, 0)), ("kakeya_n", (0, 0, 0, 0.3))])
def test_hundred_random_configurations(name, xbar):
    ph = build_builtin(name, 4)
    xbar = np.array(xbar, float)
    rng = np.random.default_rng(11)
    seen = set()
    for i in range(100):
        K = (4, 8, 16)[i % 3]
        V, eta = random_configuration(ph, xbar, K, rng, narrow=(True, False, None)[i % 3])
        r = classify(ph, xbar, V, eta, K)
        seen.add(r.classification)
        if r.classification == "broad":
            assert r.angle_VW >= 0.1 * K**-4
            assert r.W.dim + V.dim == 4
        else:
            assert r.max_L_deviation <= 10 * K**-2
    assert seen == {"narrow", "broad"}


# ---------------------------------------------------------------------------
# tangency


def _kakeya_family(lam, shift=0.0):
    fam = kakeya_tubes(4, lam)
    idx = np.arange(0, fam.count, max(1, fam.count // 20))
    off = fam.offsets[idx].copy()
    off[:, 1] += shift
    return dataclasses.replace(fam, thetas=fam.thetas[idx], v=fam.v[idx], offsets=off)


def test_kakeya_packets_are_tangent():
    lam = 256.0
    cfg = TangencyConfig(R=lam, delta_m=0.05)
    ph = build_builtin("kakeya_n", 4, lam=lam)
    fam = _kakeya_family(lam)
    om, cores = kakeya_core_samples(fam, 17)
    r = tangent_packets(om, cores, kakeya_variety(4, lam), cfg, ph, coords=[0, 1, 3])
    assert len(r.indices) == fam.count
    assert r.projection_failures == 0.0


def test_shifted_kakeya_packets_are_not_tangent():
    lam = 256.0
    cfg = TangencyConfig(R=lam, delta_m=0.05)
    ph = build_builtin("kakeya_n", 4, lam=lam)
    fam = _kakeya_family(lam, shift=10 * cfg.distance_bound)
    om, cores = kakeya_core_samples(fam, 17)
    r = tangent_packets(om, cores, kakeya_variety(4, lam), cfg, ph, coords=[0, 1, 3])
    assert len(r.indices) == 0


def test_parallel_line_in_hyperplane_is_tangent():
    # model cone packet at omega = (0, 0, 1) runs along x_3 with Gauss direction e_3 (up to normalisation)
    ph = build_builtin("model_parabolic_cone", 3, lam=64.0)
    H = Variety((linear_poly([1.0, 0.0, 0.0]),), 3)
    xn = np.linspace(-30, 30, 9)
    cores = np.stack([np.zeros(9), np.zeros(9), xn], axis=1)[None]
    r = tangent_packets(np.array([[0.0, 1.0]]), cores, H, TangencyConfig(R=64.0, delta_m=0.05), ph)
    assert list(r.indices) == [0]


def test_tangency_config_validation():
    with pytest.raises(DomainError):
        TangencyConfig(R=2.0, delta_m=0.05)
    with pytest.raises(DomainError):
        TangencyConfig(R=64.0, delta_m=0.2)


# ---------------------------------------------------------------------------
# equidistribution experiment


def test_equidistribution_scan_runs():
    s = equidistribution_scan(R=64.0, rho_list=(4, 8, 16), packets=6, spacing=1.0)
    assert len(s.ratios) == 3 and all(r > 0 for r in s.ratios)
    assert s.ratios == sorted(s.ratios)
    assert s.uniform_slope == pytest.approx(0.5, abs=0.15)
    json.dumps(s.to_dict())
