"""Command-line entry point: ``oscint <subcommand> [options]``.

Every subcommand prints (or writes with --out) a JSON report carrying a
``schema_version`` and a ``passes`` map; the exit status is 0 iff every
pass flag is true.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from .errors import OscintError
from .kakeya_experiment import SCHEMA_VERSION, ExperimentConfig, run_experiment

log = logging.getLogger("oscint")

DEFAULT_XBAR = {"kakeya_n": 0.3}     # x_n offset where the Kakeya graph height is non-degenerate


def _floats(text: str) -> list:
    return [float(t) for t in text.split(",") if t.strip()]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(report: dict, out: str | None) -> int:
    report = dict(report)
    report.setdefault("schema_version", SCHEMA_VERSION)
    passes = report.get("passes", {})
    report["ok"] = bool(passes) and all(bool(v) for v in passes.values())
    text = json.dumps(_jsonable(report), sort_keys=True, indent=2)
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n")
        log.info("wrote %s", path)
    else:
        print(text)
    return 0 if report["ok"] else 1


def _phase(name: str, n: int, lam: float, sector=None):
    from .phase_core import build_builtin, phase_from_dict

    if name.endswith(".json"):
        d = json.loads(Path(name).read_text())
        d.setdefault("n", n)
        d.setdefault("lambda", lam)
        return phase_from_dict(d)
    return build_builtin(name, n, lam, sector=sector)


# ---------------------------------------------------------------------------
# subcommands


def cmd_check_phase(args) -> int:
    from .phase_core import Amplitude, check_reduced, euler_defect, kflat_defect, sample_domain

    phase = _phase(args.phase, args.n, args.lam)
    amp = Amplitude.for_phase(phase)
    rep = check_reduced(phase, amp, sample_budget=args.samples, seed=args.seed)
    x, w = sample_domain(phase, 64, args.seed)
    euler = float(np.max(np.abs(euler_defect(phase, x, w))))
    report = {"command": "check-phase", "phase": args.phase, "n": phase.n, "lambda": phase.lam,
              "conditions": rep.to_dict(), "euler_defect": euler}
    passes = {"homogeneous": euler <= 1e-8, "c2plus": rep.pass_flags["c2plus"]}
    if args.reduced:
        passes["reduced"] = rep.pass_flags["reduced"]
    if args.K:
        kf = kflat_defect(phase, phase.spatial_domain.center, args.K, seed=args.seed)
        report["kflat"] = kf.to_dict()
        passes["kflat"] = kf.is_kflat
    report["passes"] = passes
    return _emit(report, args.out)


def cmd_kakeya(args) -> int:
    cfg = ExperimentConfig(n=args.n, lambda_list=tuple(args.lam), p_grid=tuple(args.p), trials=args.trials,
                           seed=args.seed, mc_samples=args.samples, field_lambda=args.field_lambda,
                           output_dir=str(Path(args.out).parent) if args.out else ".")
    rep = run_experiment(cfg)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["lambda", "tubes", "volume", "ci_low", "ci_high", "slab_localization"])
            for r in rep.measurements:
                wr.writerow([r["lambda"], r["tubes"], r["volume"], *r["ci95"], r["slab_localization"]])
    return _emit(rep.to_dict(), args.out)


def cmd_hormander(args) -> int:
    from .geometry import SectorSpec
    from .oscquad import hormander_scan, random_modulated
    from .phase_core import Amplitude

    e = np.zeros(args.n - 1)
    e[-1] = 1.0
    r0, r1 = (1.0, 2.0) if args.phase == "model_parabolic_cone" else (0.5, 1.0)
    phase = _phase(args.phase, args.n, args.lam, sector=SectorSpec(tuple(e), 0.5, r0, r1))
    amp = Amplitude.for_phase(phase, shrink=1.0)
    rng = np.random.default_rng(args.seed)
    fs = [random_modulated(rng, args.n - 1) for _ in range(args.trials)]
    res = hormander_scan(phase, amp, fs, args.R)
    worst_slope = max(abs(s) for s in res.slopes)
    report = {"command": "hormander", "phase": args.phase, "n": args.n, "lambda": args.lam, "result": res.to_dict(),
              "passes": {"spread": res.spread <= 4.0, "flat_in_R": worst_slope <= 0.1}}
    return _emit(report, args.out)


def cmd_partition(args) -> int:
    from .partition import WeightCloud, grid_line_oracle, ham_sandwich_partition

    rng = np.random.default_rng(args.seed)
    cloud = WeightCloud.uniform(rng.random((args.points, args.n)))
    res = ham_sandwich_partition(cloud, args.D, seed=args.seed)
    q = res.quality()
    report = {"command": "partition", "n": args.n, "D": args.D, "points": args.points, "quality": q,
              "wall_fraction": res.wall_mass / res.total, "partition": res.to_dict()}
    passes = {"cells": res.n_cells == args.D**args.n, "equidistributed": q <= 4.0,
              "wall": res.wall_mass <= 0.1 * res.total}
    if args.n == 2:
        oracle = grid_line_oracle(cloud, args.D)
        report["oracle_quality"] = oracle["quality"]
        passes["oracle"] = q <= 2 * oracle["quality"]
    report["passes"] = passes
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["sign", "mass", "count"])
            for key, (ix, mass) in sorted(res.cells.items()):
                wr.writerow([" ".join(f"{s:+d}" for s in key), mass, len(ix)])
    return _emit(report, args.out)


def cmd_broadnorm(args) -> int:
    from .broadnorm import (BroadConfig, ball_decomposition, broad_norm, candidate_subspaces, full_norm,
                            sector_family, sector_fields)
    from .oscquad import GridRegion, make_mesh, random_modulated

    phase = _phase(args.phase, args.n, args.lam)
    cfg = BroadConfig(args.k, args.A, args.K, args.p)
    fam = sector_family(args.n, args.K)
    res = max(8, int(math.ceil(2 * args.R / args.spacing)))
    grid = GridRegion.box(np.zeros(args.n), np.full(args.n, args.R), (res,) * args.n)
    mesh = make_mesh(phase.frequency_domain, 2 * grid.farthest() + 10, 2.0, kind="cartesian")
    f = random_modulated(np.random.default_rng(args.seed), args.n - 1, modes=4, vmax=args.R / 2)
    fields = sector_fields(phase, None, f, fam, mesh, grid)
    decomp = ball_decomposition(args.R, args.K, args.n)
    cands = candidate_subspaces(phase, np.zeros(args.n), fam, args.k, seed=args.seed, random=args.candidates)
    br = broad_norm(fields, decomp, cfg, cands, phase, fam)
    fn = full_norm(fields, decomp, args.p)
    report = {"command": "broadnorm", "broad_norm": br.value, "full_norm": fn, "per_ball": br.per_ball,
              "exhaustive": br.exhaustive, "sectors": len(fam), "candidates": len(cands),
              "passes": {"finite": math.isfinite(br.value) and math.isfinite(fn),
                         "below_sector_sum": br.value <= sum(b["full"] for b in br.per_ball) ** (1 / args.p)
                         * (1 + 1e-12)}}
    return _emit(report, args.out)


def cmd_rescale_check(args) -> int:
    from .phase_core import Amplitude
    from .rescaling import build_rescaling, negative_control, sector_input, verify_identity

    phase = _phase(args.phase, args.n, args.lam)
    amp = Amplitude.for_phase(phase)
    # omega = 0 is a fixed point of the model cone, so default to an off-centre sector
    omega = args.omega if args.omega is not None else [0.03] * (args.n - 2)
    if len(omega) != args.n - 2:
        raise OscintError(f"--omega needs {args.n - 2} entries")
    t0 = time.perf_counter()
    rd = build_rescaling(phase, amp, omega, args.rho)
    g = sector_input(rd.frame, seed=args.seed)
    err = verify_identity(phase, amp, g, rd, args.samples, seed=args.seed + 1)
    ctrl = negative_control(phase, amp, g, rd, seed=args.seed + 1)
    report = {"command": "rescale-check", "phase": args.phase, "n": args.n, "rho": args.rho, "lambda": args.lam,
              "rescaled": rd.to_dict(), "identity_error": err, "wrong_L_error": ctrl,
              "seconds": round(time.perf_counter() - t0, 3),
              "passes": {"identity": err <= 1e-6, "negative_control": ctrl >= 1e-2,
                         "normalized": rd.normalization_residual <= 1e-6}}
    return _emit(report, args.out)


def _parse_V(spec: str, n: int):
    from .geometry import Subspace

    rows = [_floats(r) for r in spec.split(";") if r.strip()]
    if any(len(r) != n for r in rows):
        raise OscintError(f"--V-spec vectors need {n} entries each")
    return Subspace.span(np.array(rows).T)


def cmd_transverse(args) -> int:
    from .transverse_geom import classify, equidistribution_scan, level_set_L, random_configuration

    phase = _phase(args.phase, args.n, 1.0)
    xbar = np.zeros(args.n)
    xbar[-1] = DEFAULT_XBAR.get(args.phase, 0.0) if args.xbar is None else args.xbar
    rng = np.random.default_rng(args.seed)
    reports = []
    if args.V_spec in ("random", "narrow", "broad"):
        mode = {"random": None, "narrow": True, "broad": False}[args.V_spec]
        for _ in range(args.count):
            V, eta = random_configuration(phase, xbar, args.K, rng, narrow=mode)
            reports.append(classify(phase, xbar, V, eta, args.K, seed=args.seed))
    else:
        V = _parse_V(args.V_spec, args.n)
        if args.eta is not None:
            etas = [np.asarray(args.eta, float)]
        else:
            etas = list(level_set_L(phase, xbar, V, seed=args.seed))
        if not etas:
            raise OscintError("L is empty for this V; nothing to classify")
        reports = [classify(phase, xbar, V, eta, args.K, seed=args.seed) for eta in etas]
    report = {"command": "transverse", "phase": args.phase, "n": args.n, "K": args.K, "xbar": xbar,
              "configurations": [r.to_dict() for r in reports],
              "counts": {c: sum(r.classification == c for r in reports) for c in ("narrow", "broad")},
              "passes": {"all_ok": all(r.ok for r in reports)}}
    if args.equidistribution:
        scan = equidistribution_scan(seed=args.seed)
        report["equidistribution"] = scan.to_dict()
        report["passes"]["equidistribution_fit"] = math.isfinite(scan.slope)
    return _emit(report, args.out)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oscint", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, phase_default="circular_cone", n_default=3, lam_default=1024.0):
        p.add_argument("--phase", default=phase_default, help="built-in name or a phase JSON file")
        p.add_argument("--n", type=int, default=n_default)
        p.add_argument("--lambda", dest="lam", type=float, default=lam_default)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="write the JSON report here instead of stdout")

    p = sub.add_parser("check-phase", help="sampled reduced-phase and K-flatness conditions")
    common(p, phase_default="model_parabolic_cone")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--K", type=float, default=0.0, help="also test K-flatness at this K (>= 2)")
    p.add_argument("--reduced", action="store_true", help="require the reduced conditions to pass")
    p.set_defaults(func=cmd_check_phase)

    p = sub.add_parser("kakeya", help="tube-union volumes and square-sum norms for the Kakeya phase")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--lambda", dest="lam", type=_floats, default=[256, 512, 1024, 2048, 4096])
    p.add_argument("--p", type=_floats, default=[2.6, 2.8, 3.0, 3.2])
    p.add_argument("--trials", type=int, default=64)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--samples", type=int, default=1_000_000, help="Monte Carlo samples per lambda")
    p.add_argument("--field-lambda", type=float, default=0.0, help="add a field-level Khintchine check at this lambda")
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None, help="per-lambda volume table")
    p.set_defaults(func=cmd_kakeya)

    p = sub.add_parser("hormander", help="L^2(B_R) / R^(1/2) ratios over R")
    common(p, phase_default="model_parabolic_cone")
    p.add_argument("--R", type=_floats, default=[16, 32, 64, 128, 256])
    p.add_argument("--trials", type=int, default=5, help="number of random inputs")
    p.set_defaults(func=cmd_hormander)

    p = sub.add_parser("partition", help="polynomial ham-sandwich partition of a uniform cloud")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--D", type=int, default=4)
    p.add_argument("--points", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None, help="per-cell table (sign vector, mass, count)")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("broadnorm", help="k-broad norm of a random input on B_R")
    common(p, n_default=3)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--A", type=int, default=2)
    p.add_argument("--K", type=float, default=4.0)
    p.add_argument("--p", type=float, default=3.0)
    p.add_argument("--R", type=float, default=32.0)
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--candidates", type=int, default=20, help="random candidate subspaces")
    p.set_defaults(func=cmd_broadnorm)

    p = sub.add_parser("rescale-check", help="exact parabolic-rescaling identity and a wrong-L control")
    common(p, phase_default="model_parabolic_cone", lam_default=256.0)
    p.add_argument("--rho", type=float, default=4.0)
    p.add_argument("--omega", type=_floats, default=None, help="sector centre (n-2 comma-separated values)")
    p.add_argument("--samples", type=int, default=64)
    p.set_defaults(func=cmd_rescale_check)

    p = sub.add_parser("transverse", help="narrow/broad classification of tangent frequency sets")
    common(p, n_default=4)
    p.add_argument("--V-spec", dest="V_spec", default="random",
                   help="random | narrow | broad, or basis vectors 'a,b,..;c,d,..'")
    p.add_argument("--K", type=float, default=8.0)
    p.add_argument("--count", type=int, default=10, help="configurations drawn for random V-specs")
    p.add_argument("--eta", type=_floats, default=None)
    p.add_argument("--xbar", type=float, default=None, help="x_n coordinate of the base point")
    p.add_argument("--equidistribution", action="store_true", help="add the slab-mass scaling experiment")
    p.set_defaults(func=cmd_transverse)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except OscintError as exc:
        print(json.dumps({"schema_version": SCHEMA_VERSION, "error": type(exc).__name__, "message": str(exc),
                          "passes": {}, "ok": False}, indent=2))
        return 2


if __name__ == "__main__":
    sys.exit(main())
