"""Power of every test in the five alternative scenarios, across sample sizes.

Defaults are desk scale (200 replicates x 999 permutations); ``--full`` runs
1000 x 5000, which takes hours on one core.
"""
import argparse
from pathlib import Path

from envra.experiments import TESTS, ScenarioSpec, estimate_power
from envra.permutation import PermutationPlan
from envra.report import write_power_tables

EXPERIMENTS = [("tails", 2), ("tails", 3), ("tails", 4), ("mean-shift", None), ("var-shift", None),
               ("mixture", None), ("skew", None)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 50, 100, 200])
    ap.add_argument("--replicates", type=int, default=200)
    ap.add_argument("--perms", type=int, default=999)
    ap.add_argument("--full", action="store_true")
    ap.add_argument("--scale", choices=("sd", "variance"), default="sd")
    ap.add_argument("--seed", type=int, default=2026)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--only", nargs="*", help="scenario names to run (default: all)")
    ap.add_argument("--out", default="results/power")
    args = ap.parse_args()
    reps, perms = (1000, 5000) if args.full else (args.replicates, args.perms)

    for scenario, df in EXPERIMENTS:
        if args.only and scenario not in args.only:
            continue
        label = f"{scenario}-df{df}" if df else scenario
        rows = []
        for N in args.sizes:
            spec = ScenarioSpec(scenario, N, reps, PermutationPlan(perms, args.seed + N, args.threads),
                                TESTS, 0.05, df, args.scale)
            rows.extend(estimate_power(spec))
        print(label)
        print(f"{'N':>5} " + " ".join(f"{t:>6}" for t in TESTS))
        for N in args.sizes:
            power = {e.test: e.power for e in rows if e.N == N}
            print(f"{N:>5} " + " ".join(f"{power[t]:6.3f}" for t in TESTS))
        write_power_tables(rows, Path(args.out) / label, {**vars(args), "scenario": scenario, "df": df})


if __name__ == "__main__":
    main()
