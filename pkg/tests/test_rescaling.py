from __future__ import annotations

import json

import numpy as np
import pytest

from oscint.errors import DomainError
from oscint.phase_core import Amplitude, build_builtin
from oscint.rescaling import (
    RHO_MIN,
    SectorFrame,
    build_rescaling,
    flatness_gain,
    lp_rescaling_scan,
    negative_control,
    predicted_lp_exponent,
    sector_input,
    symmetric_normalizer,
    unit_profile,
    verify_identity,
)

CASES = [("model_parabolic_cone", 3, [0.03]), ("circular_cone", 3, [0.2]), ("kakeya_n", 4, [0.02, -0.03])]


def _random_points(n, count=20, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.uniform(-0.5, 0.5, (count, n))
    eta = np.column_stack([rng.uniform(-0.3, 0.3, (count, n - 2)), rng.uniform(0.6, 1.8, count)])
    return y, eta


# ---------------------------------------------------------------------------
# frames and normalizers


def test_frame_round_trip():
    fr = SectorFrame(np.array([0.1, -0.2]), 8.0, symmetric_normalizer(np.array([[2.0, 0.3], [0.3, 1.0]])))
    xi = np.random.default_rng(0).uniform(0.5, 2.0, (10, 3))
    assert np.allclose(fr.xi_of_eta(fr.eta_of_xi(xi)), xi)
    y = np.arange(4.0)
    assert np.allclose(fr.D_rho(y), [0.0 * 8, 1.0 * 8, 2.0, 3.0 * 64])


def test_frame_validation():
    with pytest.raises(DomainError):
        SectorFrame([0.1], 1.0, np.eye(2))
    with pytest.raises(DomainError):
        SectorFrame([1.5], 4.0, np.eye(2))
    with pytest.raises(DomainError):
        SectorFrame([0.1], 4.0, np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_symmetric_normalizer():
    M = np.array([[2.0, 0.3], [0.3, 1.0]])
    L = symmetric_normalizer(M)
    Lp = L[:-1, :-1]
    assert np.allclose(Lp, Lp.T)
    assert np.allclose(Lp.T @ M @ Lp, np.eye(2))
    with pytest.raises(DomainError):
        symmetric_normalizer(np.array([[-1.0]]))


# ---------------------------------------------------------------------------
# build_rescaling


def test_model_cone_is_a_fixed_point():
    ph = build_builtin("model_parabolic_cone", 3, lam=1024.0)
    r = build_rescaling(ph, None, [0.0], 8)
    y, eta = _random_points(3)
    assert np.allclose(r.phase_tilde.value(y, eta), ph.value(y, eta), atol=1e-12)
    assert r.phase_tilde.lam == pytest.approx(1024.0 / 64)


@pytest.mark.parametrize("name,n,omega", CASES)
def test_normalization_and_bounded_L(name, n, omega):
    ph = build_builtin(name, n, lam=1024.0)
    for rho in (4, 8, 16):
        r = build_rescaling(ph, None, omega, rho)
        assert r.normalization_residual <= 1e-6
        assert r.frame.C_L <= 10


@pytest.mark.parametrize("name,n,omega", CASES)
def test_three_routes_to_the_rescaled_phase(name, n, omega):
    # closed form, composition formula and integral Taylor form agree
    ph = build_builtin(name, n, lam=1024.0)
    r = build_rescaling(ph, None, omega, 8)
    y, eta = _random_points(n, seed=1)
    closed = r.phase_tilde.value(y, eta)
    comp = np.diagonal(r.tilde_value(y, eta))       # tilde_value evaluates every (y, eta) pair
    assert np.allclose(closed, comp, atol=1e-9)
    for i in range(3):
        assert np.allclose(r.tilde_value_taylor(y[i], eta), r.phase_tilde.value(np.repeat(y[i:i + 1], len(eta), 0), eta),
                           atol=1e-8)


def test_wrong_omega_size():
    ph = build_builtin("kakeya_n", 4, lam=256.0)
    with pytest.raises(DomainError):
        build_rescaling(ph, None, [0.1], 4)


def test_dilations_compose():
    ph = build_builtin("model_parabolic_cone", 3, lam=4096.0)
    two = build_rescaling(build_rescaling(ph, None, [0.1], 4).phase_tilde, None, [0.05], 2)
    one = build_rescaling(ph, None, [0.1], 8)
    y, eta = _random_points(3, seed=2)
    assert np.allclose(two.phase_tilde.value(y, eta), one.phase_tilde.value(y, eta), atol=1e-6)
    assert two.phase_tilde.lam == pytest.approx(one.phase_tilde.lam)


# ---------------------------------------------------------------------------
# the operator identity


@pytest.mark.parametrize("name,n,omega", CASES)
@pytest.mark.parametrize("rho,lam", [(4, 256), (8, 1024)])
def test_identity_holds(name, n, omega, rho, lam):
    ph = build_builtin(name, n, lam=float(lam))
    a = Amplitude.for_phase(ph)
    r = build_rescaling(ph, a, omega, rho)
    g = sector_input(r.frame, seed=1)
    assert verify_identity(ph, a, g, r, 64, seed=2) <= 1e-6


def test_zero_input_has_zero_error():
    ph = build_builtin("model_parabolic_cone", 3, lam=256.0)
    r = build_rescaling(ph, None, [0.03], 4)
    assert verify_identity(ph, None, lambda xi: np.zeros(np.shape(xi)[:-1]), r, 16) == 0.0


@pytest.mark.parametrize("name,n,omega", CASES)
def test_negative_control(name, n, omega):
    ph = build_builtin(name, n, lam=256.0)
    a = Amplitude.for_phase(ph)
    r = build_rescaling(ph, a, omega, 4)
    g = sector_input(r.frame, seed=1)
    assert negative_control(ph, a, g, r, sample_count=64, seed=2) >= 1e-2


# ---------------------------------------------------------------------------
# flatness


def test_model_cone_stays_flat():
    ph = build_builtin("model_parabolic_cone", 3, lam=1024.0)
    fg = flatness_gain(build_rescaling(ph, None, [0.0], RHO_MIN), 8)
    assert fg.defect_after == 0.0 and fg.gain >= 1


def test_circular_cone_gains_flatness():
    ph = build_builtin("circular_cone", 3, lam=1024.0)
    gains = [flatness_gain(build_rescaling(ph, None, [0.0], rho), 8).gain for rho in (4, 16, 64)]
    assert gains[1] >= 2
    assert gains == sorted(gains)
    assert all(g >= 1 for g in gains)
    assert gains[1] >= 16**0.25 / 4


# ---------------------------------------------------------------------------
# L^p scaling


def test_predicted_exponents():
    assert predicted_lp_exponent(3, 4) == 0
    assert predicted_lp_exponent(3, 2) == 1
    assert predicted_lp_exponent(4, 3) == 0


@pytest.mark.parametrize("p", [2.0, 4.0])
def test_lp_scan_model_cone(p):
    ph = build_builtin("model_parabolic_cone", 3, lam=4096.0)
    r = lp_rescaling_scan(p, [2, 4, 8, 16], ph, None, unit_profile(3, 1.0, 2.0), R=3.0)
    assert r.deviation <= 0.3
    json.dumps(r.to_dict())


@pytest.mark.slow
def test_lp_scan_n4():
    ph = build_builtin("model_parabolic_cone", 4, lam=4096.0)
    r = lp_rescaling_scan(3.0, [2, 4, 8, 16], ph, None, unit_profile(4, 1.0, 2.0), R=2.0)
    assert r.deviation <= 0.3
