"""L^p norm growth under parabolic rescaling against the predicted exponent 2(n-1)/p - (n-2).

    python scripts/rescaling_lp_scan.py --n 3 --p 2 4
"""
from __future__ import annotations

import argparse
import logging

from oscint.phase_core import build_builtin
from oscint.rescaling import lp_rescaling_scan, unit_profile

log = logging.getLogger("lp_scan")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=3)
    ap.add_argument("--p", type=float, nargs="+", default=[2.0, 3.0, 4.0])
    ap.add_argument("--rho", type=float, nargs="+", default=[2, 4, 8, 16])
    ap.add_argument("--lam", type=float, default=4096.0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    ph = build_builtin("model_parabolic_cone", args.n, lam=args.lam)
    g = unit_profile(args.n, 1.0, 2.0)
    for p in args.p:
        r = lp_rescaling_scan(p, args.rho, ph, None, g, R=3.0 if args.n == 3 else 2.0)
        log.info("p=%.2f slope %.3f +- %.3f predicted %.3f", p, r.slope, r.stderr, r.predicted)


if __name__ == "__main__":
    main()
