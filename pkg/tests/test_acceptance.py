"""The ten acceptance criteria, one test each.

Each test prints a line ``CRITERION k <name>: PASS|FAIL (<measurements>)``
outside pytest's capture, then asserts the same conditions.
"""
from __future__ import annotations

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from oscint import wavepackets as wp
from oscint.broadnorm import (BroadConfig, ball_decomposition, broad_norm, candidate_subspaces, mu_exhaustive,
                              mu_greedy, sector_family, sector_fields)
from oscint.exponents import e_kn, p_bar, p_n
from oscint.geometry import SectorSpec
from oscint.kakeya_experiment import ExperimentConfig, containment_residuals, run_experiment
from oscint.oscquad import (FieldSample, GridRegion, Modulated, fixed_time_l2, hormander_scan, make_mesh,
                            random_modulated)
from oscint.partition import WeightCloud, grid_line_oracle, ham_sandwich_partition
from oscint.phase_core import Amplitude, build_builtin
from oscint.rescaling import build_rescaling, negative_control, sector_input, verify_identity
from oscint.transverse_geom import classify, random_configuration


@pytest.fixture
def report(capsys):
    def emit(k, name, ok, detail, seconds):
        with capsys.disabled():
            print(f"\nCRITERION {k} {name}: {'PASS' if ok else 'FAIL'} ({detail}; {seconds:.1f}s)")
    return emit


def test_criterion_1_kakeya_containment(report):
    t0 = time.perf_counter()
    worst = 0.0
    for n in (4, 6):
        thetas = np.random.default_rng(n).uniform(-0.5, 0.5, (32, n - 2))
        worst = max(worst, float(containment_residuals(n, 1024.0, thetas, 64).max()))
    ok = worst <= 1e-9
    report(1, "kakeya containment", ok, f"max residual {worst:.2e}", time.perf_counter() - t0)
    assert ok


def test_criterion_2_sharpness_exponent(report):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(n=4, lambda_list=tuple(2.0**k for k in range(8, 13)), p_grid=(3.0,),
                           mc_samples=1_000_000, seed=7)
    rep = run_experiment(cfg)
    slope = rep.fits["union_volume"]["slope"]
    bound = 2.5 + 0.5 + 0.2
    ok_slope = slope <= bound
    ok_p = abs(rep.critical_p - 3.0) <= 0.3
    ok = ok_slope and ok_p
    report(2, "sharpness exponent", ok, f"union slope {slope:.3f} (bound {bound}), critical p {rep.critical_p:.3f}",
           time.perf_counter() - t0)
    assert ok_p
    assert ok_slope


def _hormander(name, n, sector):
    ph = build_builtin(name, n, 1024.0, sector=sector)
    amp = Amplitude.for_phase(ph, shrink=1.0)
    rng = np.random.default_rng(0)
    fs = [random_modulated(rng, n - 1) for _ in range(5)]
    return hormander_scan(ph, amp, fs, [16, 32, 64, 128, 256])


def test_criterion_3_hormander_scaling(report):
    t0 = time.perf_counter()
    runs = {"model cone": _hormander("model_parabolic_cone", 3, SectorSpec((0.0, 1.0), 0.5, 1.0, 2.0)),
            "kakeya_4": _hormander("kakeya_n", 4, SectorSpec((0.0, 0.0, 1.0), 0.5, 0.5, 1.0))}
    spreads = {k: r.spread for k, r in runs.items()}
    slopes = {k: max(abs(s) for s in r.slopes) for k, r in runs.items()}
    ok = all(s <= 4 for s in spreads.values()) and all(s <= 0.1 for s in slopes.values())
    detail = ", ".join(f"{k}: spread {spreads[k]:.2f} |slope| {slopes[k]:.3f}" for k in runs)
    report(3, "hormander L2 scaling", ok, detail, time.perf_counter() - t0)
    assert ok


def test_criterion_4_fixed_time_parseval(report):
    t0 = time.perf_counter()
    ph = build_builtin("model_parabolic_cone", 3, 1024.0, sector=SectorSpec((0.0, 1.0), 0.5, 1.0, 2.0))
    amp = Amplitude.for_phase(ph, shrink=1.0, spatial_profile="plateau", frequency_profile="plateau")
    grid = GridRegion.box((0.0, 0.0), (120.0, 120.0), (256, 256))
    rng = np.random.default_rng(0)
    f = Modulated(rng.standard_normal((3, 2)) * 3, rng.standard_normal(3) + 0j, center=np.array([0.0, 1.5]),
                  width=0.08)
    ratios = []
    for xn in (0.0, 100.0, 300.0):
        mesh = make_mesh(ph.frequency_domain, 340 + xn, oversample=4, kind="cartesian")
        ratios.append(fixed_time_l2(ph, amp, f, mesh, xn, grid, f_radius=f.spatial_radius).ratio)
    ok = all(0.9 <= r <= 1.1 for r in ratios)
    report(4, "fixed-time parseval", ok, "ratios " + ", ".join(f"{r:.4f}" for r in ratios), time.perf_counter() - t0)
    assert ok


def test_criterion_5_wave_packets(report):
    t0 = time.perf_counter()
    lam, R = 1024.0, 256
    ph = build_builtin("model_parabolic_cone", 3, lam)
    amp = Amplitude.for_phase(ph, shrink=1.0)
    cover = wp.packet_cover(R, 0.1, ph.frequency_domain, lam=lam)
    mesh = wp.packet_mesh(cover)
    g = random_modulated(np.random.default_rng(1), 2, modes=3, vmax=40)
    fv = g(mesh.nodes) * amp.a2(mesh.nodes)
    st = wp.packet_statistics(fv, cover, mesh, subsets=20, seed=0)
    lo, hi = min(st.subset_ratios), max(st.subset_ratios)
    # decay: the dominant packet at the centre cap of a single-cap input
    c = min(cover.centers, key=lambda z: np.linalg.norm(z - 1.5 * np.asarray(ph.frequency_domain.center)))
    one = amp.a2(mesh.nodes) * cover.psi(mesh.nodes, c)
    packets = wp.decompose(one, cover, mesh)
    p = max(packets, key=lambda q: q.norm())
    prof = wp.decay_profile(ph, None, p, wp.core_curve(ph, p.index))
    ok_rec = st.reconstruction_error <= 1e-6
    ok_orth = 0.5 <= lo and hi <= 2.0 and len(st.subset_ratios) == 20
    ok_decay = prof.ratio(8) <= 1e-4
    ok = ok_rec and ok_orth and ok_decay
    report(5, "wave packets", ok,
           f"reconstruction {st.reconstruction_error:.1e}, subset ratios [{lo:.2f}, {hi:.2f}], "
           f"ring(8)/inside {prof.ratio(8):.2e}", time.perf_counter() - t0)
    assert ok_rec
    assert ok_orth
    assert ok_decay


def test_criterion_6_partitioning(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    cloud = WeightCloud.uniform(rng.random((10_000, 2)))
    rows, ok = [], True
    for D in (2, 4, 8):
        r = ham_sandwich_partition(cloud, D, seed=0)
        q, oq = r.quality(), grid_line_oracle(cloud, D)["quality"]
        ok &= r.n_cells == D**2 and q <= 4 and r.wall_mass <= 0.1 * cloud.total and q <= 2 * oq
        rows.append(f"D={D} q={q:.2f} oracle={oq:.2f} wall={r.wall_mass / cloud.total:.3f}")
    report(6, "polynomial partitioning", ok, "; ".join(rows), time.perf_counter() - t0)
    assert ok


def test_criterion_7_rescaling_identity(report):
    t0 = time.perf_counter()
    cases = [("model_parabolic_cone", 3, [0.03]), ("circular_cone", 3, [0.2]), ("kakeya_n", 4, [0.02, -0.03])]
    worst, worst_ctrl = 0.0, math.inf
    for name, n, omega in cases:
        for rho in (4, 8):
            for lam in (256.0, 1024.0):
                ph = build_builtin(name, n, lam)
                a = Amplitude.for_phase(ph)
                r = build_rescaling(ph, a, omega, rho)
                g = sector_input(r.frame, seed=1)
                worst = max(worst, verify_identity(ph, a, g, r, 64, seed=2))
                worst_ctrl = min(worst_ctrl, negative_control(ph, a, g, r, sample_count=64, seed=2))
    ok = worst <= 1e-6 and worst_ctrl >= 1e-2
    report(7, "rescaling identity", ok, f"max error {worst:.2e}, min wrong-L error {worst_ctrl:.2e}",
           time.perf_counter() - t0)
    assert ok


def test_criterion_8_transversality(report):
    t0 = time.perf_counter()
    rows, ok = [], True
    for name, xbar in (("circular_cone", np.zeros(4)), ("kakeya_n", np.array([0, 0, 0, 0.3]))):
        ph = build_builtin(name, 4)
        rng = np.random.default_rng(11)
        broad, narrow = [], []
        while len(broad) < 100:
            i = len(broad) + len(narrow)
            K = (4, 8, 16)[i % 3]
            V, eta = random_configuration(ph, xbar, K, rng, narrow=(True, False, None)[i % 3])
            r = classify(ph, xbar, V, eta, K)
            if r.classification == "broad":
                broad.append(r.angle_VW * K**4)
            else:
                narrow.append(r.max_L_deviation * K**2)
        ok &= min(broad) >= 0.1 and (not narrow or max(narrow) <= 10)
        rows.append(f"{name}: {len(broad)} broad min angle*K^4 {min(broad):.1f}, "
                    f"{len(narrow)} narrow max dev*K^2 {max(narrow, default=0):.2f}")
    report(8, "transversality", ok, "; ".join(rows), time.perf_counter() - t0)
    assert ok


def test_criterion_9_broad_norm(report):
    t0 = time.perf_counter()
    K = 8
    ph = build_builtin("circular_cone", 3, 1024.0)
    fam = sector_family(3, K)
    grid = GridRegion.box(np.zeros(3), np.full(3, K**2 * 1.0), (12, 12, 12))
    mesh = make_mesh(ph.frequency_domain, 2 * grid.farthest() + 10, 2.0, kind="cartesian")
    dec = ball_decomposition(K**2 * 0.9, K, 3)
    cands = candidate_subspaces(ph, np.zeros(3), fam, 2, cap=6, random=2)
    rng = np.random.default_rng(0)
    fields = [sector_fields(ph, None, random_modulated(rng, 2), fam, mesh, grid) for _ in range(4)]
    cache = {}
    pts = grid.points()

    def bn(fl, A, p, U=None):
        return broad_norm(fl, dec, BroadConfig(2, A, K, p), cands, ph, fam, U=U, method="exhaustive",
                          adm_cache=cache).value

    worst = {"sub-additivity": 0.0, "triangle": 0.0, "log-convexity": 0.0}
    for _ in range(50):
        f = fields[int(rng.integers(4))]
        A1, A2 = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        p = float(rng.uniform(2.0, 4.0))
        U1 = pts[:, int(rng.integers(3))] <= rng.uniform(-K**2, K**2)
        lhs = bn(f, A1, p) ** p
        rhs = bn(f, A1, p, U1) ** p + bn(f, A1, p, ~U1) ** p
        worst["sub-additivity"] = max(worst["sub-additivity"], lhs / rhs if rhs > 0 else 0.0)
        a, b = rng.choice(4, size=2, replace=False)
        s = float(rng.uniform(0.2, 5.0))
        fb = [FieldSample(x.grid, s * x.values) for x in fields[int(b)]]
        both = [FieldSample(x.grid, x.values + y.values) for x, y in zip(fields[int(a)], fb)]
        rhs = bn(fields[int(a)], A1, p) + bn(fb, A2, p)
        worst["triangle"] = max(worst["triangle"], bn(both, A1 + A2, p) / rhs if rhs > 0 else 0.0)
        p1, p2 = sorted(rng.uniform(2.0, 6.0, 2))
        alpha = float(rng.uniform(0.1, 0.9))
        pa = 1.0 / ((1 - alpha) / p1 + alpha / p2)
        rhs = bn(f, A1, p1) ** (1 - alpha) * bn(f, A2, p2) ** alpha
        worst["log-convexity"] = max(worst["log-convexity"], bn(f, A1 + A2, pa) / rhs if rhs > 0 else 0.0)
    greedy = []
    for _ in range(50):
        norms = rng.exponential(size=12)
        adm = rng.random((6, 12)) < 0.6
        ex, gr = mu_exhaustive(norms, adm, 2).value, mu_greedy(norms, adm, 2).value
        greedy.append(gr / ex if ex > 0 else (1.0 if gr == 0 else math.inf))
    ok_ineq = all(v <= 4 for v in worst.values())
    ok_greedy = min(greedy) >= 1 and max(greedy) <= 10
    ok = ok_ineq and ok_greedy
    detail = ", ".join(f"{k} {v:.3f}" for k, v in worst.items()) + f", greedy/exhaustive in [{min(greedy):.2f}, {max(greedy):.2f}]"
    report(9, "broad-norm properties", ok, detail, time.perf_counter() - t0)
    assert ok


def test_criterion_10_exponent_tables(report):
    t0 = time.perf_counter()
    ok = (p_n(3) == 4 and p_n(4) == 3 and p_n(5) == Fraction(8, 3) and p_n(6) == Fraction(18, 7))
    ok &= all(p_bar(k, n) == Fraction(2 * (n + k), n + k - 2) for n in range(3, 12) for k in range(2, n + 1))
    ok &= all(e_kn(k, n, 2) == 0 for n in range(3, 12) for k in range(2, n + 1))
    ok &= e_kn(2, 3, 4) == Fraction(5, 8)
    report(10, "exponent tables", ok, f"p_3..p_6 = {[str(p_n(n)) for n in range(3, 7)]}", time.perf_counter() - t0)
    assert ok
