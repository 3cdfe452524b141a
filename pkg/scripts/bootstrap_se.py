"""Influence-function SEs against the unit bootstrap on one simulated sample."""
import argparse
import json

from didiv.data import NEVER
from didiv.montecarlo import se_comparison
from didiv.oracle import builtin_spec
from didiv.sts import CellSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--design", default="staggered")
    ap.add_argument("--e", type=int, default=2)
    ap.add_argument("--l", type=int, default=1)
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--agg-l", type=int, default=0, help="event time of the es summary")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    r = se_comparison(builtin_spec(args.design), CellSpec(args.e, args.l, (NEVER,)), args.n,
                      args.reps, args.seed, "es", {"l": args.agg_l})
    print(json.dumps(r, indent=2))


if __name__ == "__main__":
    main()
