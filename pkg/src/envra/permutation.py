"""Permutation driver: relabel the pooled sample, build curve sets, run envelope tests."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from itertools import combinations
from typing import Sequence

import numpy as np

from .envelope import (ONE_SIDED_LOW, TWO_SIDED, CurveSet, EnvelopeBand, GlobalTestResult,
                       combined_two_step, critical_index_set, erl_measures, exclusion_budget,
                       global_rank_test, mc_p_value)
from .ks import sup_count_difference
from .stats import Block, CurveBuilder, GroupedSample

SINGLE = ("diff", "qq", "ecdf", "den", "qr")
COMBINED = {"c2": ("qq", "den"), "c4": ("qq", "diff", "ecdf", "den")}
PERMUTATION_TESTS = SINGLE + tuple(COMBINED) + ("ks-perm",)
# fixed so that the arithmetic of every chunk is independent of the worker count
CHUNK = 128
ENUMERATION_CAP = 10_000


class StatisticMismatch(ValueError):
    """The requested statistic cannot be used with this number of groups."""


@dataclass(frozen=True)
class PermutationPlan:
    s: int = 999
    seed: int = 0
    parallelism: int | None = None

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("need at least one permutation")

    def workers(self) -> int:
        if self.parallelism is not None:
            return max(1, int(self.parallelism))
        env = os.environ.get("ENVRA_THREADS")
        return max(1, int(env)) if env else 1


@dataclass(frozen=True)
class TestSpec:
    statistic: str = "c2"
    alpha: float = 0.05
    grid_d: int = 100
    tau_min: float = 0.05
    tau_max: float = 0.95
    reference: int = 0
    bandwidths: tuple[float, ...] | None = None

    def kinds(self) -> tuple[str, ...]:
        return component_kinds(self.statistic)


# keep pytest from collecting the dataclass
TestSpec.__test__ = False


def component_kinds(statistic: str) -> tuple[str, ...]:
    if statistic in SINGLE:
        return (statistic,)
    if statistic in COMBINED:
        return COMBINED[statistic]
    if statistic == "ks-perm":
        return ()
    raise ValueError(f"unknown statistic {statistic!r}")


def check_compatible(statistic: str, n_groups: int) -> None:
    needs_two = statistic in ("ks-perm", "ks") or "diff" in component_kinds_safe(statistic)
    if needs_two and n_groups != 2:
        raise StatisticMismatch(f"statistic {statistic!r} requires exactly two groups, got {n_groups}")


def component_kinds_safe(statistic: str) -> tuple[str, ...]:
    try:
        return component_kinds(statistic)
    except ValueError:
        return ()


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator determined by ``seed`` and an integer key path."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def permute_labels(sample: GroupedSample, rng: np.random.Generator) -> GroupedSample:
    """Redistribute the labels uniformly at random, keeping group sizes."""
    return sample.relabel(sample.labels[rng.permutation(sample.labels.size)])


def _builder(sample: GroupedSample, spec: TestSpec, kinds) -> CurveBuilder:
    taus = np.linspace(spec.tau_min, spec.tau_max, spec.grid_d)
    return CurveBuilder(sample, spec.grid_d, taus, spec.reference, spec.bandwidths,
                        need_bandwidths="den" in kinds)


def _ks_sup_counts(builder: CurveBuilder, labels: np.ndarray) -> np.ndarray:
    """Integer sup |c1 m2 - c2 m1| for each label row (pooled sorted order)."""
    m1, m2 = (int(v) for v in builder.sizes)
    ends = np.searchsorted(builder.z, np.unique(builder.z), side="right") - 1
    c1 = np.cumsum(labels == 0, axis=1, dtype=np.int64)[:, ends]
    c2 = (ends + 1)[None, :] - c1
    return np.max(np.abs(c1 * m2 - c2 * m1), axis=1)


def _permutation_labels(builder: CurveBuilder, plan: PermutationPlan, start: int, stop: int):
    base = builder.observed_labels
    rows = [base[stream(plan.seed, i).permutation(base.size)] for i in range(start, stop)]
    return np.array(rows)


def _evaluate(builder: CurveBuilder, labels: np.ndarray, kinds, want_ks: bool):
    out = builder.compute(labels, kinds) if kinds else {}
    if want_ks:
        out["ks"] = _ks_sup_counts(builder, labels)
    return out


def _null_curves(builder, plan, kinds, want_ks, labels=None):
    """Evaluate the statistics on the observed labels and all null relabelings."""
    if labels is not None:
        labels = np.atleast_2d(np.asarray(labels))[:, builder.order]
        s = labels.shape[0]
        get = lambda a, b: labels[a - 1:b - 1]
    else:
        s = plan.s
        get = lambda a, b: _permutation_labels(builder, plan, a, b)
    bounds = [(a, min(a + CHUNK, s + 1)) for a in range(1, s + 1, CHUNK)]
    work = lambda ab: _evaluate(builder, get(*ab), kinds, want_ks)
    workers = plan.workers()
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(ab) for ab in bounds]
    observed = _evaluate(builder, builder.observed_labels[None, :], kinds, want_ks)
    keys = list(kinds) + (["ks"] if want_ks else [])
    return {k: np.concatenate([observed[k]] + [p[k] for p in parts]) for k in keys}


def _ks_result(builder: CurveBuilder, sup_counts: np.ndarray, alpha: float, sample) -> GlobalTestResult:
    m1, m2 = (int(v) for v in builder.sizes)
    measure = erl_measures(-sup_counts[:, None].astype(float), ONE_SIDED_LOW)
    p = mc_p_value(measure)
    retained = critical_index_set(measure, alpha)
    crit = int(sup_counts[retained].max())
    points = np.unique(builder.z)
    c1 = np.searchsorted(np.sort(sample.group(0)), points, side="right")
    c2 = np.searchsorted(np.sort(sample.group(1)), points, side="right")
    observed = c1 / m1 - c2 / m2
    half = crit / (m1 * m2)
    expected = np.zeros_like(points)
    block = Block("ks", (), points)
    band = EnvelopeBand(block, "ks", np.full_like(points, -half), np.full_like(points, half),
                        observed, expected, alpha)
    M = m1 * m2 / (m1 + m2)
    scale = math.sqrt(M) / (m1 * m2)
    result = GlobalTestResult("ks-perm", p, [band], measure, alpha, len(sup_counts) - 1, retained)
    result.extra.update(d_stat=float(sup_counts[0] * scale), critical_d=float(crit * scale), m_factor=M)
    return result


def run_many(sample: GroupedSample, statistics: Sequence[str], spec: TestSpec = TestSpec(),
             plan: PermutationPlan = PermutationPlan(), labels=None) -> dict[str, GlobalTestResult]:
    """Run several permutation tests on one sample sharing one set of relabelings.

    ``labels`` optionally supplies the null relabelings explicitly as an
    ``(s, M)`` array in the sample's own order; otherwise ``plan`` generates
    them.
    """
    for stat in statistics:
        component_kinds(stat)
        check_compatible(stat, sample.n_groups)
    kinds = sorted({k for stat in statistics for k in component_kinds(stat)}, key=SINGLE.index)
    want_ks = "ks-perm" in statistics
    s = plan.s if labels is None else len(labels)
    exclusion_budget(spec.alpha, s)
    builder = _builder(sample, spec, kinds)
    curves = _null_curves(builder, plan, kinds, want_ks, labels)
    sets = {k: CurveSet(curves[k], builder.blocks(k), k) for k in kinds}
    results = {}
    for stat in statistics:
        if stat == "ks-perm":
            results[stat] = _ks_result(builder, curves["ks"], spec.alpha, sample)
        elif stat in COMBINED:
            results[stat] = combined_two_step([sets[k] for k in COMBINED[stat]], spec.alpha,
                                              TWO_SIDED, sample, name=stat)
        else:
            res = global_rank_test(sets[stat], spec.alpha, TWO_SIDED, sample)
            res.statistic = stat
            results[stat] = res
        results[stat].extra.setdefault("bandwidths", None if builder.bandwidths is None
                                       else [float(b) for b in builder.bandwidths])
    return results


def run_test(sample: GroupedSample, spec: TestSpec = TestSpec(),
             plan: PermutationPlan = PermutationPlan(), labels=None) -> GlobalTestResult:
    return run_many(sample, [spec.statistic], spec, plan, labels)[spec.statistic]


def ks_permutation_test(sample: GroupedSample, plan: PermutationPlan = PermutationPlan(),
                        alpha: float = 0.05, labels=None) -> GlobalTestResult:
    return run_test(sample, TestSpec("ks-perm", alpha), plan, labels)


# ---------------------------------------------------------------------------
# exact enumeration oracle
# ---------------------------------------------------------------------------

def count_assignments(sizes: Sequence[int]) -> int:
    total, out = sum(sizes), 1
    for m in sizes:
        out *= math.comb(total, m)
        total -= m
    return out


def all_assignments(sample: GroupedSample) -> np.ndarray:
    """Every distinct label vector with the sample's group sizes, observed first."""
    sizes = [int(m) for m in sample.sizes]
    count = count_assignments(sizes)
    if count > ENUMERATION_CAP:
        raise ValueError(f"{count} label assignments exceed the enumeration cap {ENUMERATION_CAP}")
    M = sample.labels.size
    out = []

    def fill(free: tuple[int, ...], group: int, labels: list[int]):
        if group == len(sizes) - 1:
            for i in free:
                labels[i] = group
            out.append(list(labels))
            return
        for chosen in combinations(free, sizes[group]):
            for i in chosen:
                labels[i] = group
            rest = tuple(i for i in free if i not in set(chosen))
            fill(rest, group + 1, labels)

    fill(tuple(range(M)), 0, [0] * M)
    arr = np.array(out, dtype=np.intp)
    obs = np.flatnonzero(np.all(arr == sample.labels, axis=1))
    assert obs.size == 1
    return np.concatenate([arr[obs], np.delete(arr, obs, axis=0)])


def enumerate_splits(sample: GroupedSample, spec: TestSpec = TestSpec()) -> float:
    """Exact permutation p-value over all label assignments (scalar statistic path)."""
    stat = spec.statistic
    check_compatible(stat, sample.n_groups)
    assignments = all_assignments(sample)
    kinds = component_kinds(stat)
    builder = _builder(sample, spec, kinds)
    relabeled = [sample.relabel(a) for a in assignments]
    if stat == "ks-perm":
        sups = np.array([sup_count_difference(g.group(0), g.group(1))[0] for g in relabeled])
        return mc_p_value(erl_measures(-sups[:, None].astype(float), ONE_SIDED_LOW))
    sets = []
    for k in kinds:
        rows = [builder.scalar(g, k) for g in relabeled]
        sets.append(CurveSet(np.array([r.flat() for r in rows]), rows[0].blocks, k))
    if stat in COMBINED:
        measure = erl_measures(
            np.column_stack([erl_measures(cs.curves).at_least_as_extreme() for cs in sets]).astype(float),
            ONE_SIDED_LOW)
    else:
        measure = erl_measures(sets[0].curves)
    return mc_p_value(measure)


def with_statistic(spec: TestSpec, statistic: str) -> TestSpec:
    return replace(spec, statistic=statistic)
