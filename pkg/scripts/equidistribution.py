"""Slab-mass scaling of a field built from packets tangent to a plane.

    python scripts/equidistribution.py --R 256 --rho 16 32 64 128
"""
from __future__ import annotations

import argparse
import json

from oscint.transverse_geom import equidistribution_scan


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--R", type=float, default=256.0)
    ap.add_argument("--rho", type=float, nargs="+", default=[16, 32, 64, 128])
    ap.add_argument("--packets", type=int, default=24)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    scan = equidistribution_scan(args.R, tuple(args.rho), packets=args.packets, seed=args.seed)
    print(json.dumps(scan.to_dict(), indent=2))


if __name__ == "__main__":
    main()
