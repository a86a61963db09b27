"""Rejection rates of every test under two standard normal samples.

    python3 scripts/type_one_error.py --sizes 10 50 --replicates 1000 --perms 999
"""
import argparse

from envra.experiments import TESTS, type_one_error_study
from envra.permutation import PermutationPlan
from envra.report import write_power_tables


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 50, 100, 200])
    ap.add_argument("--replicates", type=int, default=1000)
    ap.add_argument("--perms", type=int, default=999)
    ap.add_argument("--seed", type=int, default=2026)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--out", default="results/type-one-error")
    args = ap.parse_args()

    rows = type_one_error_study(PermutationPlan(args.perms, args.seed, args.threads), args.sizes,
                                args.replicates, TESTS)
    print(f"{'N':>5} " + " ".join(f"{t:>6}" for t in TESTS))
    for N in args.sizes:
        rates = {e.test: e.power for e in rows if e.N == N}
        print(f"{N:>5} " + " ".join(f"{rates[t]:6.3f}" for t in TESTS))
    write_power_tables(rows, args.out, vars(args))


if __name__ == "__main__":
    main()
