"""Rejection rates of the joint placebo tests as the differential trend grows."""
import argparse

from didiv.montecarlo import pretrend_rejection
from didiv.oracle.staggered import outcome_sd, pretrend_spec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--slopes", type=float, nargs="+", default=[0.0, 0.005, 0.01, 0.02, 0.05, 0.1],
                    help="per-period trend in units of the outcome SD")
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--max-lead", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    sd = outcome_sd(pretrend_spec())
    print(f"{'slope/sd':>10} {'reject_y':>10} {'reject_d':>10}")
    for s in args.slopes:
        r = pretrend_rejection(pretrend_spec(slope=s * sd), args.n, args.reps, args.max_lead,
                               seed=args.seed)
        print(f"{s:>10.3f} {r['outcome']:>10.3f} {r['treatment']:>10.3f}")


if __name__ == "__main__":
    main()
