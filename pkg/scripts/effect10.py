"""Wald-DID on the design with first stage 0.2, reduced form 2 and LATET 10."""
import argparse
import json

from didiv.montecarlo import effect10_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-big", type=int, default=100_000)
    ap.add_argument("--n", type=int, default=16_000)
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    r = effect10_experiment(args.n_big, args.n, args.reps, args.seed)
    out = {"truth": r["truth"], "single": r["single"], "n_big": r["n_big"], "mc": r["mc"].to_dict()}
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
