"""Command line entry point: ``envra test|simulate|oracle``."""
from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import experiments
from .ks import ks_test_asymptotic
from .permutation import (PermutationPlan, StatisticMismatch, TestSpec, all_assignments,
                          check_compatible, enumerate_splits, run_test)
from .report import (document_from_ks, document_from_result, emit_svg, load_csv, write_power_tables)
from .stats import GroupedSample

STATISTICS = ("diff", "qq", "ecdf", "den", "qr", "c2", "c4", "ks", "ks-perm")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    input: str
    value_col: str
    group_col: str
    statistic: str
    alpha: float
    perms: int
    seed: int
    grid_d: int
    tau_min: float
    tau_max: float
    reference_group: str | None
    plots: bool
    out: str

    def validate(self):
        if not 0.0 < self.alpha < 1.0:
            raise UsageError("--alpha must lie in (0, 1)")
        if self.perms < 1:
            raise UsageError("--perms must be at least 1")
        if self.grid_d < 2:
            raise UsageError("--grid-d must be at least 2")
        if not 0.0 < self.tau_min < self.tau_max < 1.0:
            raise UsageError("need 0 < --tau-min < --tau-max < 1")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="envra", description="Global envelope tests for comparing distributions.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test equality of group distributions in a CSV file")
    t.add_argument("input", help="CSV file with a header row")
    t.add_argument("--value-col", default="value")
    t.add_argument("--group-col", default="group")
    t.add_argument("--stat", default="c2", choices=STATISTICS)
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--perms", type=int, default=999)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--grid-d", type=int, default=100)
    t.add_argument("--tau-min", type=float, default=0.05)
    t.add_argument("--tau-max", type=float, default=0.95)
    t.add_argument("--reference-group", default=None, help="group label used as QR reference (default: first seen)")
    t.add_argument("--plots", action="store_true", help="write one SVG per envelope block")
    t.add_argument("--out", default="envra-out")
    t.add_argument("--timing", action="store_true", help="record wall-clock timing in result.json")

    s = sub.add_parser("simulate", help="power / type I error tables for the two-sample experiments")
    s.add_argument("--scenario", required=True, choices=experiments.SCENARIOS)
    s.add_argument("--df", type=int, default=None, help="t degrees of freedom for the tails scenario")
    s.add_argument("--N", type=int, nargs="+", default=[10, 50, 100, 200])
    s.add_argument("--replicates", type=int, default=200)
    s.add_argument("--perms", type=int, default=999)
    s.add_argument("--full", action="store_true", help="1000 replicates x 5000 permutations")
    s.add_argument("--tests", nargs="+", default=list(experiments.TESTS), choices=experiments.TESTS)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scale", choices=("sd", "variance"), default="sd",
                   help="reading of the second parameter of N(mu, .)")
    s.add_argument("--out", default="envra-sim")

    o = sub.add_parser("oracle", help="check Monte Carlo against exact enumeration on a tiny sample")
    o.add_argument("input", nargs="?", help="tiny CSV file; omitted: random normal groups")
    o.add_argument("--value-col", default="value")
    o.add_argument("--group-col", default="group")
    o.add_argument("--stat", default="diff", choices=[s for s in STATISTICS if s != "ks"])
    o.add_argument("--sizes", type=int, nargs="+", default=[4, 4])
    o.add_argument("--alpha", type=float, default=0.05)
    o.add_argument("--seed", type=int, default=0)
    return p


def cmd_test(args) -> int:
    cfg = RunConfig(args.input, args.value_col, args.group_col, args.stat, args.alpha, args.perms,
                    args.seed, args.grid_d, args.tau_min, args.tau_max, args.reference_group,
                    args.plots, args.out)
    cfg.validate()
    sample = load_csv(cfg.input, cfg.value_col, cfg.group_col)
    try:
        check_compatible(cfg.statistic, sample.n_groups)
    except StatisticMismatch as exc:
        raise UsageError(str(exc)) from None
    reference = 0
    if cfg.reference_group is not None:
        if cfg.reference_group not in sample.names:
            raise UsageError(f"--reference-group {cfg.reference_group!r} is not a group label")
        reference = sample.names.index(cfg.reference_group)
    start = time.perf_counter()
    if cfg.statistic == "ks":
        ks = ks_test_asymptotic(sample.group(0), sample.group(1), cfg.alpha)
        doc = document_from_ks(ks, sample, asdict(cfg))
    else:
        spec = TestSpec(cfg.statistic, cfg.alpha, cfg.grid_d, cfg.tau_min, cfg.tau_max, reference)
        result = run_test(sample, spec, PermutationPlan(cfg.perms, cfg.seed))
        doc = document_from_result(result, sample, asdict(cfg))
    if args.timing:
        doc.timing = {"seconds": time.perf_counter() - start}
    path = doc.write(cfg.out)
    plots = emit_svg(doc, cfg.out) if cfg.plots else []
    outside = sum(sum(b.outside) for b in doc.blocks)
    print(f"{doc.statistic}: p = {doc.p_value:.6g} (alpha = {doc.alpha}); "
          f"{outside} grid points outside the envelope")
    print(f"wrote {path}" + (f" and {len(plots)} plot(s)" if plots else ""))
    return 0


def cmd_simulate(args) -> int:
    replicates, perms = (1000, 5000) if args.full else (args.replicates, args.perms)
    if args.scenario == "tails" and args.df is None:
        raise UsageError("--scenario tails needs --df 2, 3 or 4")
    estimates = []
    for N in args.N:
        spec = experiments.ScenarioSpec(args.scenario, N, replicates,
                                        PermutationPlan(perms, args.seed + N),
                                        tuple(args.tests), args.alpha, args.df, args.scale)
        rows = experiments.estimate_power(spec)
        for e in rows:
            print(f"{e.scenario:>14} N={e.N:<4} {e.test:>5}: power {e.power:.3f} +/- {e.half_ci:.3f}")
        estimates.extend(rows)
    config = {"scenario": args.scenario, "df": args.df, "N": args.N, "replicates": replicates,
              "perms": perms, "tests": args.tests, "alpha": args.alpha, "seed": args.seed,
              "scale": args.scale}
    csv_path, json_path = write_power_tables(estimates, args.out, config)
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_oracle(args) -> int:
    if args.input:
        sample = load_csv(args.input, args.value_col, args.group_col)
    else:
        rng = np.random.default_rng(args.seed)
        sample = GroupedSample.from_groups([rng.normal(size=m) for m in args.sizes])
    try:
        check_compatible(args.stat, sample.n_groups)
    except StatisticMismatch as exc:
        raise UsageError(str(exc)) from None
    assignments = all_assignments(sample)
    s = len(assignments) - 1
    # the p-value does not depend on alpha, but the envelope needs a nonempty exclusion budget
    spec = TestSpec(args.stat, max(args.alpha, 1.0 / (s + 1)))
    exact = enumerate_splits(sample, spec)
    mc = run_test(sample, spec, PermutationPlan(s, args.seed), labels=assignments[1:]).p_value
    print(json.dumps({"statistic": args.stat, "assignments": s + 1, "exact_p": exact,
                      "monte_carlo_p": mc, "match": exact == mc}))
    return 0 if exact == mc else 1


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    handler = {"test": cmd_test, "simulate": cmd_simulate, "oracle": cmd_oracle}[args.command]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return handler(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"envra: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"envra: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
