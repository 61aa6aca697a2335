from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oscint.broadnorm import (
    BroadConfig,
    admissibility,
    ball_decomposition,
    ball_norms,
    broad_norm,
    candidate_subspaces,
    full_norm,
    gauss_sector_angle,
    mu_exhaustive,
    mu_from_norms,
    mu_greedy,
    sector_family,
    sector_fields,
    sector_gauss_directions,
)
from oscint.errors import DomainError, ResolutionError
from oscint.geometry import SectorSpec, Subspace
from oscint.oscquad import FieldSample, GridRegion, apply_operator, make_mesh
from oscint.phase_core import build_builtin, gauss_map

K = 8
LAM = 1024.0


@pytest.fixture(scope="module")
def setup():
    ph = build_builtin("circular_cone", 3, LAM)
    fam = sector_family(3, K)
    grid = GridRegion.box(np.zeros(3), np.full(3, K**2 * 1.0), (12, 12, 12))
    mesh = make_mesh(ph.frequency_domain, 2 * grid.farthest() + 10, 2.0, kind="cartesian")
    dec = ball_decomposition(K**2 * 0.9, K, 3)
    cands = candidate_subspaces(ph, np.zeros(3), fam, 2, cap=6, random=2)
    return ph, fam, grid, mesh, dec, cands


def _modulation(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=2) * 3
    c = rng.normal() + 1j * rng.normal()
    return lambda w: c * np.exp(1j * (w @ v))


@pytest.fixture(scope="module")
def fields(setup):
    ph, fam, grid, mesh, dec, cands = setup
    return {s: sector_fields(ph, None, _modulation(s), fam, mesh, grid) for s in range(4)}


@pytest.fixture(scope="module")
def adm_cache(setup):
    return {}


def _bn(setup, fields, A, p, cache, U=None):
    ph, fam, grid, mesh, dec, cands = setup
    raw = [FieldSample(f.grid, f.values) for f in fields]
    return broad_norm(raw, dec, BroadConfig(2, A, K, p), cands, ph, fam, U=U, method="exhaustive",
                      adm_cache=cache)


def _plus(fa, fb):
    return [FieldSample(a.grid, a.values + b.values) for a, b in zip(fa, fb)]


# ---------------------------------------------------------------------------
# sectors


@pytest.mark.parametrize("k", [8, 16])
def test_sector_count(k):
    fam = sector_family(3, k)
    assert k / 4 <= len(fam) <= 4 * k
    assert fam.overlap() <= 2


def test_sector_partition_sums_to_one():
    fam = sector_family(3, K)
    w = np.random.default_rng(0).standard_normal((500, 2))
    assert np.allclose(fam.partition(w).sum(axis=0), 1.0, atol=1e-12)
    fam4 = sector_family(4, 4)
    w3 = np.random.default_rng(1).standard_normal((300, 3))
    assert np.allclose(fam4.partition(w3).sum(axis=0), 1.0, atol=1e-12)


def test_sector_fields_add_up(setup, fields):
    ph, fam, grid, mesh, dec, cands = setup
    whole = apply_operator(ph, None, _modulation(0), mesh, grid)
    total = np.sum([f.values for f in fields[0]], axis=0)
    assert np.max(np.abs(total - whole.values)) <= 1e-8 * np.max(np.abs(whole.values))


def test_input_in_one_sector_lights_one_field(setup):
    ph, fam, grid, mesh, dec, cands = setup
    chi = fam.partition(mesh.nodes)
    j = 3
    # a function supported where chi_j = 1
    f = np.where(chi[j] > 1 - 1e-15, 1.0 + 0j, 0.0)
    out = sector_fields(ph, None, f, fam, mesh, grid)
    peak = max(np.max(np.abs(o.values)) for o in out)
    for t, o in enumerate(out):
        if t != j:
            assert np.max(np.abs(o.values)) <= 1e-8 * peak


def test_coarse_mesh_is_rejected(setup):
    ph, fam, grid, mesh, dec, cands = setup
    coarse = make_mesh(ph.frequency_domain, 4.0, 2.0, kind="cartesian")
    with pytest.raises(ResolutionError):
        sector_fields(ph, None, np.ones(coarse.size), fam, coarse, grid)


# ---------------------------------------------------------------------------
# Gauss angles


def test_gauss_angle_of_own_direction(setup):
    ph, fam, *_ = setup
    sec = fam.sectors[5]
    w = np.asarray(sec.center) * 0.5 * (sec.r0 + sec.r1)
    G = gauss_map(ph, np.zeros((1, 3)), w[None, :])[0]
    V = Subspace.span(G)
    assert gauss_sector_angle(ph, np.zeros(3), sec, V) <= sec.aperture


def test_gauss_angle_orthogonal_space(setup):
    ph, fam, *_ = setup
    sec = fam.sectors[5]
    w = np.asarray(sec.center) * 0.5 * (sec.r0 + sec.r1)
    G = gauss_map(ph, np.zeros((1, 3)), w[None, :])[0]
    V = Subspace.span(G).complement()
    assert gauss_sector_angle(ph, np.zeros(3), sec, V) >= math.pi / 2 - sec.aperture


def test_circular_cone_example_plane(setup):
    # V = <e1 + e3, e2> contains G(-e1) = (e1 + e3)/sqrt 2
    ph, *_ = setup
    V = Subspace.span(np.array([[1.0, 0, 1], [0, 1.0, 0]]).T)
    sec = SectorSpec((-1.0, 0.0), 1 / K, 0.5, 2.0)
    assert gauss_sector_angle(ph, np.zeros(3), sec, V) <= 1e-12
    opp = SectorSpec((1.0, 0.0), 1 / K, 0.5, 2.0)
    assert gauss_sector_angle(ph, np.zeros(3), opp, V) > 0.5


# ---------------------------------------------------------------------------
# mu


def test_mu_empty_max_is_zero():
    norms = np.array([5.0])
    adm = np.array([[False]])        # candidate contains the only Gauss direction
    assert mu_from_norms(norms, adm, 1).value == 0.0


def test_mu_orthogonal_candidate_is_full_max():
    norms = np.array([1.0, 4.0, 2.0])
    adm = np.ones((1, 3), dtype=bool)
    assert mu_from_norms(norms, adm, 1).value == 4.0


def test_mu_requires_positive_A():
    with pytest.raises(DomainError):
        mu_from_norms(np.ones(2), np.ones((1, 2), bool), 0)
    with pytest.raises(DomainError):
        BroadConfig(2, 0, 8, 3.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_greedy_bounds_exhaustive(seed):
    rng = np.random.default_rng(seed)
    norms = rng.exponential(size=12)
    adm = rng.random((6, 12)) < 0.6
    ex = mu_exhaustive(norms, adm, 2).value
    gr = mu_greedy(norms, adm, 2).value
    assert gr >= ex
    if ex > 0:
        assert gr / ex <= 10


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_mu_nonincreasing_in_A(seed):
    rng = np.random.default_rng(seed)
    norms = rng.exponential(size=10)
    adm = rng.random((5, 10)) < 0.7
    vals = [mu_exhaustive(norms, adm, A).value for A in range(1, 6)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_narrow_configuration_has_zero_mu(setup):
    # all Gauss directions close to one candidate line: every sector is inadmissible
    ph, fam, *_ = setup
    G = sector_gauss_directions(ph, np.zeros(3), fam)
    V = Subspace.span(G[0])
    narrow = [s for s, g in zip(fam.sectors, G) if V.angle_to_vector(g[None, :])[0] <= 1e-3]
    sub = type(fam)(tuple(narrow), np.array([s.center for s in narrow]), fam.K, fam.r0, fam.r1, fam.kind, fam.width)
    adm = admissibility(ph, np.zeros(3), sub, [V], K**-2.0)
    assert not adm.any()
    assert mu_from_norms(np.ones(len(narrow)), adm, 1).value == 0.0


# ---------------------------------------------------------------------------
# broad norms


def test_zero_input_gives_zero(setup, fields, adm_cache):
    zero = [FieldSample(f.grid, np.zeros_like(f.values)) for f in fields[0]]
    assert _bn(setup, zero, 1, 3.0, adm_cache).value == 0.0


def test_broad_norm_below_sector_sum(setup, fields, adm_cache):
    ph, fam, grid, mesh, dec, cands = setup
    r = _bn(setup, fields[0], 1, 3.0, adm_cache)
    bound = sum(float(ball_norms(fields[0], c, dec.radius, 3.0).max()) for c in dec.centers)
    assert r.value ** 3 <= bound * (1 + 1e-12)
    assert full_norm(fields[0], dec, 3.0) > 0


def _instances(count, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield rng


def test_sub_additivity(setup, fields, adm_cache):
    ph, fam, grid, mesh, dec, cands = setup
    pts = grid.points()
    for rng in _instances(50, seed=1):
        f = fields[int(rng.integers(4))]
        A = int(rng.integers(1, 5))
        p = float(rng.uniform(2.0, 4.0))
        cut = rng.uniform(-K**2, K**2)
        axis = int(rng.integers(3))
        U1 = pts[:, axis] <= cut
        U2 = ~U1
        whole = _bn(setup, f, A, p, adm_cache).value ** p
        parts = _bn(setup, f, A, p, adm_cache, U=U1).value ** p + _bn(setup, f, A, p, adm_cache, U=U2).value ** p
        assert whole <= 4 * parts + 1e-12


def test_triangle_inequality(setup, fields, adm_cache):
    for rng in _instances(50, seed=2):
        a, b = rng.choice(4, size=2, replace=False)
        A1, A2 = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        p = float(rng.uniform(2.0, 4.0))
        s = float(rng.uniform(0.2, 5.0))
        fa = fields[int(a)]
        fb = [FieldSample(f.grid, s * f.values) for f in fields[int(b)]]
        lhs = _bn(setup, _plus(fa, fb), A1 + A2, p, adm_cache).value
        rhs = _bn(setup, fa, A1, p, adm_cache).value + _bn(setup, fb, A2, p, adm_cache).value
        assert lhs <= 4 * rhs + 1e-12


def test_log_convexity(setup, fields, adm_cache):
    for rng in _instances(50, seed=3):
        f = fields[int(rng.integers(4))]
        A1, A2 = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        p1, p2 = sorted(rng.uniform(2.0, 6.0, 2))
        alpha = float(rng.uniform(0.1, 0.9))
        p = 1.0 / ((1 - alpha) / p1 + alpha / p2)
        lhs = _bn(setup, f, A1 + A2, p, adm_cache).value
        rhs = _bn(setup, f, A1, p1, adm_cache).value ** (1 - alpha) * _bn(setup, f, A2, p2, adm_cache).value ** alpha
        assert lhs <= 4 * rhs + 1e-12


def test_ball_decomposition_covers_region():
    dec = ball_decomposition(100.0, 4, 3)
    pts = np.random.default_rng(0).uniform(-1, 1, (2000, 3))
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True) * np.random.default_rng(1).uniform(0, 100, (2000, 1))
    assert dec.covers(pts)
    assert dec.max_overlap(pts) <= 8
