"""Monte Carlo power and size studies for the two-sample tests.

Every replicate draws one sample and runs all requested tests on that same
sample with the same permutation stream, so differences between tests are
paired.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .ks import ks_test_asymptotic
from .permutation import PermutationPlan, TestSpec, run_many, stream
from .stats import GroupedSample

# test roster in table order
TESTS = ("ecdf", "den", "diff", "qq", "qr", "c2", "c4", "ks")
SCENARIOS = ("null-normal", "tails", "mean-shift", "var-shift", "mixture", "skew")


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str
    N: int
    replicates: int = 200
    plan: PermutationPlan = PermutationPlan(999, 0)
    tests: tuple[str, ...] = TESTS
    alpha: float = 0.05
    df: int | None = None
    # how to read the second parameter of N(mu, .): "sd" or "variance"
    scale: str = "sd"
    grid_d: int = 100

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.scenario == "tails" and self.df not in (2, 3, 4):
            raise ValueError("tails scenario needs df in {2, 3, 4}")
        if self.replicates < 1 or self.N < 2:
            raise ValueError("need replicates >= 1 and N >= 2")
        if self.scale not in ("sd", "variance"):
            raise ValueError("scale must be 'sd' or 'variance'")
        unknown = set(self.tests) - set(TESTS)
        if unknown:
            raise ValueError(f"unknown tests {sorted(unknown)}")

    def label(self) -> str:
        return f"tails(df={self.df})" if self.scenario == "tails" else self.scenario


@dataclass(frozen=True)
class PowerEstimate:
    test: str
    scenario: str
    N: int
    rejections: int
    replicates: int

    @property
    def power(self) -> float:
        return self.rejections / self.replicates

    @property
    def half_ci(self) -> float:
        p = self.power
        return 1.96 * math.sqrt(p * (1 - p) / self.replicates)


@dataclass
class SimulationResult:
    spec: ScenarioSpec
    estimates: list[PowerEstimate]
    p_values: dict[str, np.ndarray] = field(default_factory=dict)

    def power(self, test: str) -> float:
        return next(e.power for e in self.estimates if e.test == test)


def _normal(rng, mu, second, n, scale):
    sd = second if scale == "sd" else math.sqrt(second)
    return rng.normal(mu, sd, n)


def sample_scenario(spec: ScenarioSpec, rng: np.random.Generator) -> GroupedSample:
    """Draw the two groups of size N for one replicate."""
    N, sc = spec.N, spec.scale
    if spec.scenario == "skew":
        x = _normal(rng, 8.0, 3.34, N, sc)
        y = rng.lognormal(2.0, 0.4, N)
        return GroupedSample.from_groups([x, y])
    x = rng.normal(0.0, 1.0, N)
    if spec.scenario == "null-normal":
        y = rng.normal(0.0, 1.0, N)
    elif spec.scenario == "tails":
        y = rng.standard_t(spec.df, N)
    elif spec.scenario == "mean-shift":
        y = _normal(rng, 0.3, 1.0, N, sc)
    elif spec.scenario == "var-shift":
        y = _normal(rng, 0.0, 1.3, N, sc)
    else:
        z = rng.random(N) < 0.5
        y = np.where(z, _normal(rng, 1.0, 0.5, N, sc), _normal(rng, -1.0, 0.5, N, sc))
    return GroupedSample.from_groups([x, y])


def _replicate_seed(seed: int, r: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(r, 1)).generate_state(1, np.uint64)[0])


def run_replicate(spec: ScenarioSpec, r: int) -> dict[str, float]:
    """p-values of every requested test for replicate ``r``."""
    sample = sample_scenario(spec, stream(spec.plan.seed, r, 0))
    perm_tests = [t for t in spec.tests if t != "ks"]
    out = {}
    if perm_tests:
        plan = PermutationPlan(spec.plan.s, _replicate_seed(spec.plan.seed, r), 1)
        results = run_many(sample, perm_tests, TestSpec(alpha=spec.alpha, grid_d=spec.grid_d), plan)
        out.update({t: res.p_value for t, res in results.items()})
    if "ks" in spec.tests:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ks = ks_test_asymptotic(sample.group(0), sample.group(1), spec.alpha)
        out["ks"] = ks.p_value
    return out


def simulate(spec: ScenarioSpec) -> SimulationResult:
    workers = spec.plan.workers()
    reps = range(spec.replicates)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda r: run_replicate(spec, r), reps))
    else:
        rows = [run_replicate(spec, r) for r in reps]
    p_values = {t: np.array([row[t] for row in rows]) for t in spec.tests}
    estimates = [PowerEstimate(t, spec.label(), spec.N, int(np.sum(p_values[t] <= spec.alpha)),
                               spec.replicates) for t in spec.tests]
    return SimulationResult(spec, estimates, p_values)


def estimate_power(spec: ScenarioSpec) -> list[PowerEstimate]:
    return simulate(spec).estimates


def type_one_error_study(plan: PermutationPlan, sizes=(10, 50, 100, 200), replicates: int = 1000,
                         tests=TESTS, alpha: float = 0.05) -> list[PowerEstimate]:
    """Rejection rates under two standard normal samples, one row per (test, N)."""
    if not sizes:
        raise ValueError("need at least one sample size")
    rows = []
    for N in sizes:
        sub = replace(plan, seed=_replicate_seed(plan.seed, 10_000 + int(N)))
        spec = ScenarioSpec("null-normal", int(N), replicates, sub, tuple(tests), alpha)
        rows.extend(estimate_power(spec))
    return rows
