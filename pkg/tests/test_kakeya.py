from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oscint.errors import DomainError, FitError
from oscint.exponents import p_n
from oscint.kakeya_experiment import (
    ExperimentConfig,
    TubeFamily,
    apply_A,
    apply_A_prime,
    cap_cover,
    containment_residuals,
    core_height,
    core_xpp,
    critical_p_from_slope,
    expected_cap_count,
    exponent_fit,
    field_setup,
    kakeya_tubes,
    khintchine_field,
    multiplicity,
    random_sign_input,
    run_experiment,
    single_tube_volume,
    slab_localization,
    starting_positions,
    tube_union_volume,
)


# ---------------------------------------------------------------------------
# closed-form geometry


def test_starting_position_example():
    assert np.allclose(starting_positions([[0.3, 0.7]], 4), [[-0.7, 0.0]])
    assert np.allclose(starting_positions([[0.1, 0.2, 0.3, 0.4]], 6), [[-0.2, 0.0, -0.4, 0.0]])
    with pytest.raises(DomainError):
        starting_positions([[0.1, 0.2]], 3)
    with pytest.raises(DomainError):
        starting_positions([[0.1, 0.2, 0.3]], 4)


def test_A_matrix_blocks():
    t = 0.4
    M = np.array([[t, t * t], [t * t, t + t**3]])
    w = np.array([0.3, -0.2])
    assert np.allclose(apply_A(t, w), M @ w)
    Mp = np.array([[1, 2 * t], [2 * t, 1 + 3 * t * t]])
    assert np.allclose(apply_A_prime(t, w), Mp @ w)
    # odd tail acts as t
    assert np.allclose(apply_A(t, np.array([0.3, -0.2, 0.5])), np.r_[M @ w, t * 0.5])


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-0.5, 0.5))
def test_A_prime_is_the_derivative(t, a, b):
    w = np.array([a, b])
    h = 1e-6
    fd = (apply_A(t + h, w) - apply_A(t - h, w)) / (2 * h)
    assert np.allclose(fd, apply_A_prime(t, w), atol=1e-7)


@pytest.mark.parametrize("n", [4, 5, 6, 8])
def test_containment(n):
    rng = np.random.default_rng(n)
    thetas = rng.uniform(-0.5, 0.5, (1000, n - 2))
    assert containment_residuals(n, 1024.0, thetas).max() <= 1e-9


# ---------------------------------------------------------------------------
# caps and inputs


@pytest.mark.parametrize("n,lam", [(4, 64), (4, 1024), (5, 256)])
def test_cap_count_matches_volume(n, lam):
    c = cap_cover(n, lam)
    assert abs(len(c) / expected_cap_count(n, lam) - 1) <= 0.1
    assert c.spacing == pytest.approx(lam**-0.5)


def test_cap_partition_is_unity_on_plateau():
    c = cap_cover(4, 256.0)
    rng = np.random.default_rng(0)
    slopes = rng.uniform(-0.3, 0.3, (500, 2))
    w = np.concatenate([slopes * 0.75, np.full((500, 1), 0.75)], axis=1)
    assert np.allclose(c.psi(w).sum(axis=0), 1.0, atol=1e-12)


def test_sign_inputs():
    c = cap_cover(4, 16.0)
    nodes = np.random.default_rng(0).uniform(0.5, 1.0, (50, 3))
    inp = random_sign_input(c, nodes, 10, seed=1)
    assert inp.signs.shape == (10, len(c))
    assert set(np.unique(inp.signs)) <= {-1.0, 1.0}
    assert inp.realizations.shape == (10, 50)
    again = random_sign_input(c, nodes, 10, seed=1)
    assert np.array_equal(inp.signs, again.signs)


@pytest.mark.parametrize("lam", [16.0, 32.0])
def test_khintchine_ratio(lam):
    # E|sum eps T f_theta| is comparable to (sum |T f_theta|^2)^(1/2)
    phase, cover, mesh, grid, f_radius = field_setup(4, lam, resolution=(6,) * 4, oversample=2.0)
    inp = random_sign_input(cover, mesh.nodes, 16, seed=0)
    r = khintchine_field(phase, None, inp, mesh, grid, f_radius, (3.0,))
    assert 0.5 <= r.ratio_median <= 2.0
    assert 0.5 <= r.lp_mean["3.0"] / r.lp_proxy["3.0"] <= 2.0


# ---------------------------------------------------------------------------
# tubes and volumes


def test_tube_contains_its_samples():
    tubes = kakeya_tubes(4, 256.0)
    rng = np.random.default_rng(0)
    idx = rng.integers(0, tubes.count, 5000)
    x = tubes.sample(rng, idx)
    assert tubes.contains(x, idx).all()


def test_core_polynomial_matches_closed_form():
    tubes = kakeya_tubes(5, 256.0)
    xn = np.linspace(-256, 256, 11)
    for i in (0, 7, tubes.count - 1):
        direct = np.column_stack([core_xpp(tubes.thetas[i], tubes.v[i], 256.0, xn), core_height(tubes.thetas[i], 256.0, xn)])
        assert np.allclose(tubes.cores(xn, np.full(11, i)), direct, atol=1e-9 * 256)


def test_multiplicity_matches_brute_force():
    tubes = kakeya_tubes(4, 128.0)
    rng = np.random.default_rng(3)
    x = tubes.sample(rng, rng.integers(0, tubes.count, 400))
    brute = np.zeros(len(x), int)
    for i in range(tubes.count):
        brute += tubes.contains(x, np.full(len(x), i))
    assert np.array_equal(multiplicity(tubes, x), brute)


def test_single_tube_volume():
    # a slab that barely leaves the ball: its volume is the unclipped slab volume up to the end caps
    uv = single_tube_volume(4, 1024.0, samples=100_000)
    exact = kakeya_tubes(4, 1024.0).slab_volume()
    assert 0.95 * exact <= uv.volume <= exact


def _two_tubes(shift):
    base = kakeya_tubes(4, 256.0)
    i0 = int(np.argmin(np.linalg.norm(base.thetas, axis=1)))
    th = np.repeat(base.thetas[i0:i0 + 1], 2, axis=0)
    v = np.repeat(base.v[i0:i0 + 1], 2, axis=0)
    off = np.zeros((2, 3))
    off[1, 0] = shift
    return TubeFamily(4, 256.0, th, v, off, base.radius)


def test_disjoint_tubes_add_and_copies_do_not():
    far = tube_union_volume(_two_tubes(60.0), 100_000, seed=0)
    same = tube_union_volume(_two_tubes(0.0), 100_000, seed=0)
    base = _two_tubes(0.0)
    single = TubeFamily(4, 256.0, base.thetas[:1], base.v[:1], base.offsets[:1], base.radius)
    one = tube_union_volume(single, 100_000, seed=1)
    assert same.volume == pytest.approx(one.volume, rel=0.01)
    assert far.volume == pytest.approx(2 * same.volume, rel=0.05)


def test_union_below_sum_of_tubes():
    tubes = kakeya_tubes(4, 256.0)
    uv = tube_union_volume(tubes, 50_000, seed=2, p_grid=(2.0,))
    assert 0 < uv.volume <= tubes.count * tubes.slab_volume()
    assert uv.ci95[0] <= uv.volume <= uv.ci95[1]
    # p = 2 moment is the total in-ball tube measure, an upper bound for the union
    assert uv.moments["2.0"] >= uv.volume * 0.99


def test_slab_localization_bound():
    for lam in (256.0, 1024.0):
        assert slab_localization(kakeya_tubes(4, lam), samples=5000) <= 1.0


# ---------------------------------------------------------------------------
# fits


def test_exponent_fit_recovers_power_law():
    lams = [2.0**k for k in range(4, 10)]
    slope, se = exponent_fit(lams, [3.0 * l**2.5 for l in lams])
    assert slope == pytest.approx(2.5, abs=1e-12) and se <= 1e-10


def test_exponent_fit_errors():
    with pytest.raises(FitError):
        exponent_fit([1, 2], [1, 2])
    with pytest.raises(FitError):
        exponent_fit([4, 4, 4], [1, 2, 3])
    with pytest.raises(FitError):
        exponent_fit([1, 2, 4], [1, 0, 3])


def test_critical_p():
    assert critical_p_from_slope(3.0) == pytest.approx(3.0)
    # n = 4: union growth lam^(5/2 + 1/2) gives p = 3 = p_4
    assert critical_p_from_slope(3.0) == pytest.approx(float(p_n(4)))
    assert critical_p_from_slope(1.0) == math.inf
    assert critical_p_from_slope(5.0) < critical_p_from_slope(3.0)


# ---------------------------------------------------------------------------
# the driver


def _small_config(**kw):
    base = dict(n=4, lambda_list=(64, 128, 256), p_grid=(2.8, 3.0), mc_samples=20_000, seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


def test_experiment_is_deterministic():
    a = run_experiment(_small_config())
    b = run_experiment(_small_config())
    assert a.to_json() == b.to_json()
    d = json.loads(a.to_json())
    assert d["schema_version"] == "1.0"
    assert len(d["measurements"]) == 3
    assert "union_volume" in d["fits"] and d["target_p"] == "3"
    assert d["passes"]["slab_localization"]


def test_experiment_seed_changes_volumes():
    a = run_experiment(_small_config())
    b = run_experiment(_small_config(seed=4))
    assert a.measurements[0]["volume"] != b.measurements[0]["volume"]


def test_experiment_config_validation():
    with pytest.raises(DomainError):
        ExperimentConfig(n=3)
    with pytest.raises(DomainError):
        ExperimentConfig(trials=4)
    with pytest.raises(DomainError):
        ExperimentConfig(lambda_list=(512, 256, 1024))
    with pytest.raises(DomainError):
        ExperimentConfig(experiment="nope")


def test_two_lambdas_give_fit_error_entry():
    r = run_experiment(_small_config(lambda_list=(64, 128)))
    assert r.errors and not r.ok
    assert r.passes["fit"] is False


def test_report_save(tmp_path):
    r = run_experiment(_small_config(lambda_list=(64, 128, 256), p_grid=()))
    path = r.save(tmp_path / "out" / "report.json")
    assert json.loads(path.read_text())["config"]["n"] == 4
