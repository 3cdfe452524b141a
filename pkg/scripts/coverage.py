"""RMSE decay and 95% CI coverage for one CLATT cell of a staggered design."""
import argparse
import json

from didiv.data import NEVER
from didiv.montecarlo import cell_coverage, rmse_slope
from didiv.oracle import builtin_spec
from didiv.sts import CellSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--design", default="staggered")
    ap.add_argument("--e", type=int, default=2)
    ap.add_argument("--l", type=int, default=1)
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--ns", type=int, nargs="+", default=[1000, 4000, 16000])
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--slope-reps", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    spec = builtin_spec(args.design)
    cell = CellSpec(args.e, args.l, (NEVER,))
    rs = rmse_slope(spec, cell, tuple(args.ns), args.slope_reps, args.seed)
    cov = cell_coverage(spec, cell, args.n, args.reps, args.seed + 1_000_000)
    print(json.dumps({"rmse": rs, "coverage": cov.to_dict()}, indent=2))


if __name__ == "__main__":
    main()
