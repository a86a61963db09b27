"""Rank-based global envelopes with the extreme rank length (ERL) ordering."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .stats import Block

TWO_SIDED = "two-sided"
ONE_SIDED_LOW = "one-sided-low"
SIDEDNESS = (TWO_SIDED, ONE_SIDED_LOW)


@dataclass
class CurveSet:
    """Observed curve (row 0) and ``s`` null curves, with block layout."""

    curves: np.ndarray
    blocks: list[Block]
    name: str = ""

    def __post_init__(self):
        self.curves = np.asarray(self.curves, dtype=float)
        if self.curves.ndim != 2 or self.curves.shape[0] < 2:
            raise ValueError("a curve set needs the observed row and at least one null row")
        if not np.all(np.isfinite(self.curves)):
            raise ValueError("curves must be finite")
        width = sum(len(b.grid) for b in self.blocks)
        if width != self.curves.shape[1]:
            raise ValueError(f"block layout covers {width} columns, curves have {self.curves.shape[1]}")

    @property
    def s(self) -> int:
        return self.curves.shape[0] - 1

    def measure(self, sidedness: str = "two-sided") -> "MeasureVector":
        """ERL measure of the rows, computed once per sidedness."""
        cache = self.__dict__.setdefault("_measures", {})
        if sidedness not in cache:
            cache[sidedness] = erl_measures(self.curves, sidedness)
        return cache[sidedness]

    def block_slices(self):
        start = 0
        for b in self.blocks:
            stop = start + len(b.grid)
            yield b, slice(start, stop)
            start = stop


@dataclass
class MeasureVector:
    """ERL ordering as integer tokens: 1 is the most extreme, equal tokens tie."""

    tokens: np.ndarray

    @property
    def tie_flag(self) -> bool:
        return bool(np.unique(self.tokens).size < self.tokens.size)

    def at_least_as_extreme(self) -> np.ndarray:
        """For each row, the number of rows whose measure is at least as extreme."""
        counts = np.bincount(self.tokens)
        return np.cumsum(counts)[self.tokens]


@dataclass
class EnvelopeBand:
    block: Block
    name: str
    lower: np.ndarray
    upper: np.ndarray
    observed: np.ndarray
    expected: np.ndarray
    alpha: float

    @property
    def outside(self) -> np.ndarray:
        return (self.observed < self.lower) | (self.observed > self.upper)


@dataclass
class GlobalTestResult:
    statistic: str
    p_value: float
    envelopes: list[EnvelopeBand]
    measure: MeasureVector
    alpha: float
    s: int
    retained: np.ndarray = field(repr=False)
    extra: dict = field(default_factory=dict)

    @property
    def tie_flag(self) -> bool:
        return self.measure.tie_flag

    @property
    def outside_any(self) -> bool:
        return any(bool(e.outside.any()) for e in self.envelopes)

    def reject(self) -> bool:
        return self.p_value <= self.alpha


def pointwise_midranks(curves: np.ndarray, sidedness: str = TWO_SIDED) -> np.ndarray:
    """Column-wise mid-ranks; small rank means pointwise extreme."""
    curves = np.asarray(curves, dtype=float)
    below = rankdata(curves, method="average", axis=0)
    if sidedness == ONE_SIDED_LOW:
        return below
    if sidedness == TWO_SIDED:
        above = curves.shape[0] + 1 - below
        return np.minimum(below, above)
    raise ValueError(f"unknown sidedness {sidedness!r}")


def erl_measures(curves: np.ndarray, sidedness: str = TWO_SIDED) -> MeasureVector:
    """Order rows lexicographically by their ascending-sorted pointwise ranks."""
    ranks = np.sort(pointwise_midranks(curves, sidedness), axis=1)
    # mid-ranks are multiples of 1/2, so doubled ranks are exact integers; rows of
    # big-endian integers sort lexicographically as raw bytes
    doubled = np.ascontiguousarray((2 * ranks).astype(">u4"))
    keys = doubled.view(np.dtype((np.void, 4 * doubled.shape[1]))).ravel()
    order = np.argsort(keys, kind="stable")
    ordered = keys[order]
    new_level = ordered[1:] != ordered[:-1]
    dense = np.concatenate([[1], 1 + np.cumsum(new_level)])
    tokens = np.empty(len(order), dtype=np.int64)
    tokens[order] = dense
    return MeasureVector(tokens)


def mc_p_value(measure: MeasureVector) -> float:
    """Monte Carlo p-value; ties with the observed count against it."""
    t = measure.tokens
    if t.size < 2:
        raise ValueError("need at least one null measure")
    return (1 + int(np.sum(t[1:] <= t[0]))) / t.size


def exclusion_budget(alpha: float, s: int) -> int:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    # tolerance guards products such as 0.29 * 100 = 28.999999999999996
    k = math.floor(alpha * (s + 1) + 1e-9)
    if k < 1:
        raise ValueError(
            f"alpha*(s+1) = {alpha * (s + 1):.3g} < 1: no curve can be excluded; "
            f"increase the number of permutations to at least {math.ceil(1 / alpha) - 1}")
    return k


def critical_index_set(measure: MeasureVector, alpha: float) -> np.ndarray:
    """Indices of the retained (central) curves at level ``alpha``.

    Whole tie clusters are excluded from the most extreme end while the number
    of excluded curves stays within floor(alpha (s+1)).
    """
    t = measure.tokens
    budget = exclusion_budget(alpha, t.size - 1)
    levels, counts = np.unique(t, return_counts=True)
    fits = np.cumsum(counts) <= budget
    cutoff = levels[fits][-1] if fits.any() else 0
    return np.flatnonzero(t > cutoff)


def envelope(curveset: CurveSet, retained: np.ndarray, alpha: float, sample=None) -> list[EnvelopeBand]:
    retained = np.asarray(retained)
    if retained.size == 0:
        raise ValueError("retained set is empty")
    kept = curveset.curves[retained]
    lower, upper = kept.min(axis=0), kept.max(axis=0)
    expected = curveset.curves[1:].mean(axis=0)
    observed = curveset.curves[0]
    return [EnvelopeBand(b, b.name(sample), lower[sl], upper[sl], observed[sl], expected[sl], alpha)
            for b, sl in curveset.block_slices()]


def global_rank_test(curveset: CurveSet, alpha: float = 0.05, sidedness: str = TWO_SIDED,
                     sample=None) -> GlobalTestResult:
    exclusion_budget(alpha, curveset.s)
    measure = curveset.measure(sidedness)
    p = mc_p_value(measure)
    retained = critical_index_set(measure, alpha)
    bands = envelope(curveset, retained, alpha, sample)
    return GlobalTestResult(curveset.name, p, bands, measure, alpha, curveset.s, retained)


def combined_two_step(sets: Sequence[CurveSet], alpha: float = 0.05, sidedness: str = TWO_SIDED,
                      sample=None, name: str = "") -> GlobalTestResult:
    """Combine several statistics: per-statistic ERL, then one-sided ERL of the ranks."""
    if not sets:
        raise ValueError("need at least one curve set")
    s = sets[0].s
    if any(cs.s != s for cs in sets):
        raise ValueError("all curve sets must share the same number of null curves")
    exclusion_budget(alpha, s)
    step1 = [cs.measure(sidedness) for cs in sets]
    stacked = np.column_stack([m.at_least_as_extreme() for m in step1]).astype(float)
    measure = erl_measures(stacked, ONE_SIDED_LOW)
    p = mc_p_value(measure)
    retained = critical_index_set(measure, alpha)
    bands = [band for cs in sets for band in envelope(cs, retained, alpha, sample)]
    result = GlobalTestResult(name, p, bands, measure, alpha, s, retained)
    result.extra["step1_p_values"] = {cs.name: mc_p_value(m) for cs, m in zip(sets, step1)}
    return result
