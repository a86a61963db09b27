"""Functional test statistics for comparing the distributions of grouped samples.

Two evaluation paths live here:

* scalar functions (``ecdf_eval``, ``quantile_eval``, ``kde_eval`` and the
  ``stat_*`` constructors) that build one :class:`StatVector` from one
  :class:`GroupedSample`;
* :class:`CurveBuilder`, which evaluates the same statistics for a whole batch
  of label permutations at once.

The batch path is what the permutation engine uses; the scalar path backs the
exact enumeration oracle, so the two are kept arithmetically identical where
ties matter (ECDF counts, order-statistic indices, and kernel sums, which are
accumulated sequentially in ascending order of the data in both paths).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

SQRT_2PI = math.sqrt(2.0 * math.pi)

KINDS = ("diff", "qq", "ecdf", "den", "qr")


class DegenerateDataError(ValueError):
    """Raised when data are constant where a spread is required."""


@dataclass(frozen=True)
class GroupedSample:
    """Pooled observations with integer group labels ``0..n_groups-1``."""

    values: np.ndarray
    labels: np.ndarray
    n_groups: int
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        labels = np.asarray(self.labels, dtype=np.intp)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("values must be a nonempty 1-d array")
        if labels.shape != values.shape:
            raise ValueError("values and labels must have equal length")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        if self.n_groups < 2:
            raise ValueError("at least two groups are required")
        if labels.min() < 0 or labels.max() >= self.n_groups:
            raise ValueError("labels must lie in 0..n_groups-1")
        if np.any(np.bincount(labels, minlength=self.n_groups) == 0):
            raise ValueError("every group needs at least one observation")
        if self.names is not None and len(self.names) != self.n_groups:
            raise ValueError("names must have one entry per group")

    @classmethod
    def from_groups(cls, groups: Sequence[Sequence[float]], names=None) -> "GroupedSample":
        values = np.concatenate([np.asarray(g, dtype=float) for g in groups])
        labels = np.concatenate([np.full(len(g), i) for i, g in enumerate(groups)])
        return cls(values, labels, len(groups), tuple(names) if names is not None else None)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_groups)

    def group(self, l: int) -> np.ndarray:
        return self.values[self.labels == l]

    def group_name(self, l: int) -> str:
        return self.names[l] if self.names is not None else str(l + 1)

    def relabel(self, labels: np.ndarray) -> "GroupedSample":
        return GroupedSample(self.values, labels, self.n_groups, self.names)


@dataclass(frozen=True)
class Block:
    """One labelled segment of a statistic vector."""

    kind: str
    ids: tuple[int, ...]
    grid: np.ndarray
    axis: str = "x"

    def name(self, sample: GroupedSample | None = None) -> str:
        if not self.ids:
            return self.kind
        label = (lambda l: sample.group_name(l)) if sample is not None else (lambda l: str(l + 1))
        return self.kind + "-" + "-".join(label(l) for l in self.ids)


@dataclass
class StatVector:
    """Concatenation of statistic blocks evaluated on a grid."""

    blocks: list[Block]
    values: list[np.ndarray] = field(default_factory=list)

    @property
    def total_length(self) -> int:
        return sum(len(v) for v in self.values)

    def flat(self) -> np.ndarray:
        return np.concatenate(self.values)

    def structure(self) -> list[tuple[str, tuple[int, ...], int]]:
        return [(b.kind, b.ids, len(v)) for b, v in zip(self.blocks, self.values)]

    def __add__(self, other: "StatVector") -> "StatVector":
        return StatVector(self.blocks + other.blocks, self.values + other.values)


# ---------------------------------------------------------------------------
# grids and elementary estimators
# ---------------------------------------------------------------------------

def make_grid(sample: GroupedSample, d: int = 100) -> np.ndarray:
    """Equally spaced points from the pooled minimum to the pooled maximum."""
    if d < 2:
        raise ValueError("grid needs d >= 2")
    lo, hi = float(sample.values.min()), float(sample.values.max())
    if lo == hi:
        raise DegenerateDataError("pooled data are constant; no evaluation range")
    return np.linspace(lo, hi, d)


def make_tau_grid(d: int = 100, tau_min: float = 0.05, tau_max: float = 0.95) -> np.ndarray:
    if d < 2:
        raise ValueError("tau grid needs d >= 2")
    if not 0.0 < tau_min < tau_max < 1.0:
        raise ValueError("need 0 < tau_min < tau_max < 1")
    return np.linspace(tau_min, tau_max, d)


def ecdf_eval(values, x) -> float | np.ndarray:
    """Fraction of ``values`` that are ``<= x``; ``x`` may be an array."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("empty sample")
    counts = np.searchsorted(v, x, side="right")
    return counts / v.size


def _quantile_rank(tau: float, m: int) -> int:
    # smallest r in 1..m with r/m >= tau, using the same float comparison as the ECDF
    r = max(1, min(m, math.ceil(tau * m)))
    while r > 1 and (r - 1) / m >= tau:
        r -= 1
    while r < m and r / m < tau:
        r += 1
    return r


def quantile_eval(values, tau: float) -> float:
    """Left-continuous generalized inverse of the ECDF at ``tau`` in (0, 1]."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("empty sample")
    return float(v[_quantile_rank(tau, v.size) - 1])


def silverman_bandwidth(values) -> float:
    """Silverman's rule of thumb, 0.9 min(sd, IQR/1.34) m^(-1/5).

    The IQR uses :func:`quantile_eval`; when it is zero the standard deviation
    is used alone.
    """
    v = np.asarray(values, dtype=float)
    m = v.size
    if m < 2:
        raise DegenerateDataError("bandwidth needs at least two observations")
    sd = float(np.std(v, ddof=1))
    if sd == 0.0:
        raise DegenerateDataError("constant sample has zero bandwidth")
    iqr = quantile_eval(v, 0.75) - quantile_eval(v, 0.25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * m ** (-0.2)


def gaussian_kernel(u):
    return np.exp(-0.5 * np.square(u)) / SQRT_2PI


def ordered_sum(a: np.ndarray, axis: int) -> np.ndarray:
    """Left-to-right sum along ``axis``.

    Unlike ``np.sum`` (pairwise, layout dependent) the rounding depends only on
    the order of the terms, so equal multisets of kernel values summed in
    sorted order give bit-identical densities in every code path.
    """
    a = np.moveaxis(np.asarray(a, dtype=float), axis, 0)
    acc = np.zeros(a.shape[1:])
    for part in a:
        acc += part
    return acc


def kde_eval(values, b: float, grid) -> np.ndarray:
    """Gaussian kernel density estimate with bandwidth ``b`` at ``grid``."""
    if not b > 0 or not math.isfinite(b):
        raise ValueError("bandwidth must be positive and finite")
    v = np.sort(np.asarray(values, dtype=float))
    x = np.atleast_1d(np.asarray(grid, dtype=float))
    k = gaussian_kernel((x[None, :] - v[:, None]) / b)
    return ordered_sum(k, axis=0) / (v.size * b)


# ---------------------------------------------------------------------------
# scalar statistic constructors
# ---------------------------------------------------------------------------

def _ecdf_counts(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    return np.searchsorted(np.sort(values), grid, side="right")


def stat_diff(sample: GroupedSample, grid) -> StatVector:
    if sample.n_groups != 2:
        raise ValueError("DIFF statistic is defined for exactly two groups")
    m1, m2 = sample.sizes
    c1 = _ecdf_counts(sample.group(0), grid)
    c2 = _ecdf_counts(sample.group(1), grid)
    return StatVector([Block("diff", (), np.asarray(grid))], [c1 / m1 - c2 / m2])


def stat_qq_pair(sample: GroupedSample, l: int, k: int, grid) -> StatVector:
    """Quantiles of group ``k`` at the ECDF levels of group ``l``."""
    if l == k:
        raise ValueError("QQ pair needs two distinct groups")
    gl, gk = sample.group(l), sample.group(k)
    sk = np.sort(gk)
    out = np.empty(len(grid))
    for j, level in enumerate(ecdf_eval(gl, grid)):
        out[j] = sk[0] if level == 0 else quantile_eval(sk, level)
    return StatVector([Block("qq", (l, k), np.asarray(grid))], [out])


def stat_qq_pairs(sample: GroupedSample, grid) -> StatVector:
    out = StatVector([], [])
    for l, k in combinations(range(sample.n_groups), 2):
        out = out + stat_qq_pair(sample, l, k, grid)
    return out


def stat_ecdf_all(sample: GroupedSample, grid) -> StatVector:
    blocks, values = [], []
    for l in range(sample.n_groups):
        blocks.append(Block("ecdf", (l,), np.asarray(grid)))
        values.append(_ecdf_counts(sample.group(l), grid) / sample.sizes[l])
    return StatVector(blocks, values)


def default_bandwidths(sample: GroupedSample) -> np.ndarray:
    return np.array([silverman_bandwidth(sample.group(l)) for l in range(sample.n_groups)])


def stat_den_all(sample: GroupedSample, grid, bandwidths=None) -> StatVector:
    if bandwidths is None:
        bandwidths = default_bandwidths(sample)
    blocks, values = [], []
    for l in range(sample.n_groups):
        blocks.append(Block("den", (l,), np.asarray(grid)))
        values.append(kde_eval(sample.group(l), float(bandwidths[l]), grid))
    return StatVector(blocks, values)


def stat_qr(sample: GroupedSample, taus, reference: int = 0) -> StatVector:
    """Quantile-regression coefficients of a single categorical covariate.

    With one categorical covariate and no other terms the check-loss problem
    separates by group, so each coefficient is a group-quantile difference
    against the reference group.
    """
    if not 0 <= reference < sample.n_groups:
        raise ValueError("invalid reference group")
    ref = sample.group(reference)
    blocks, values = [], []
    for l in range(sample.n_groups):
        if l == reference:
            continue
        g = sample.group(l)
        beta = np.array([quantile_eval(g, t) - quantile_eval(ref, t) for t in taus])
        blocks.append(Block("qr", (l,), np.asarray(taus), axis="tau"))
        values.append(beta)
    return StatVector(blocks, values)


def check_loss(residuals, tau: float) -> float:
    u = np.asarray(residuals, dtype=float)
    return float(np.sum(u * (tau - (u < 0))))


# ---------------------------------------------------------------------------
# batch evaluation over label permutations
# ---------------------------------------------------------------------------

class CurveBuilder:
    """Evaluate statistics for many relabelings of one pooled sample.

    Grids, tau levels and bandwidths are fixed from the observed sample at
    construction and reused for every relabeling.  Label batches are
    ``(R, M)`` integer arrays indexed by position in :attr:`order` (the
    pooled values sorted ascending).
    """

    def __init__(self, sample: GroupedSample, d: int = 100, taus=None, reference: int = 0,
                 bandwidths=None, need_bandwidths: bool = True):
        self.sample = sample
        self.n = sample.n_groups
        self.sizes = sample.sizes
        self.order = np.argsort(sample.values, kind="stable")
        self.z = sample.values[self.order]
        self.observed_labels = sample.labels[self.order]
        self.grid = make_grid(sample, d)
        self.taus = make_tau_grid(d) if taus is None else np.asarray(taus, dtype=float)
        if not 0 <= reference < self.n:
            raise ValueError("invalid reference group")
        self.reference = reference
        self.bandwidths = None
        if bandwidths is not None:
            self.bandwidths = np.asarray(bandwidths, dtype=float)
        elif need_bandwidths:
            self.bandwidths = default_bandwidths(sample)
        self._grid_pos = np.searchsorted(self.z, self.grid, side="right")
        self._kernels = None

    def blocks(self, kind: str) -> list[Block]:
        pairs = list(combinations(range(self.n), 2))
        if kind == "diff":
            if self.n != 2:
                raise ValueError("DIFF statistic is defined for exactly two groups")
            return [Block("diff", (), self.grid)]
        if kind == "qq":
            return [Block("qq", p, self.grid) for p in pairs]
        if kind == "ecdf":
            return [Block("ecdf", (l,), self.grid) for l in range(self.n)]
        if kind == "den":
            return [Block("den", (l,), self.grid) for l in range(self.n)]
        if kind == "qr":
            return [Block("qr", (l,), self.taus, axis="tau") for l in range(self.n)
                    if l != self.reference]
        raise ValueError(f"unknown statistic {kind!r}")

    def compute(self, labels: np.ndarray, kinds: Sequence[str]) -> dict[str, np.ndarray]:
        """Return ``{kind: (R, D) matrix}`` for the requested statistics."""
        labels = np.atleast_2d(labels)
        R = labels.shape[0]
        masks = [labels == l for l in range(self.n)]
        counts = {}
        order_stats = {}

        def cnt(l):
            if l not in counts:
                c = np.cumsum(masks[l], axis=1, dtype=np.int64)
                c = np.concatenate([np.zeros((R, 1), np.int64), c], axis=1)
                counts[l] = c[:, self._grid_pos]
            return counts[l]

        def ostat(l):
            if l not in order_stats:
                order_stats[l] = self.z[self._member_positions(masks[l], l)]
            return order_stats[l]

        out = {}
        for kind in kinds:
            if kind == "diff":
                if self.n != 2:
                    raise ValueError("DIFF statistic is defined for exactly two groups")
                m1, m2 = self.sizes
                out[kind] = cnt(0) / m1 - cnt(1) / m2
            elif kind == "ecdf":
                out[kind] = np.hstack([cnt(l) / self.sizes[l] for l in range(self.n)])
            elif kind == "qq":
                parts = []
                for l, k in combinations(range(self.n), 2):
                    ml, mk = int(self.sizes[l]), int(self.sizes[k])
                    r = np.maximum(-((-cnt(l) * mk) // ml), 1)
                    parts.append(np.take_along_axis(ostat(k), r - 1, axis=1))
                out[kind] = np.hstack(parts)
            elif kind == "den":
                out[kind] = np.hstack([self._density(masks[l], l) for l in range(self.n)])
            elif kind == "qr":
                parts = []
                ref_r = np.array([_quantile_rank(t, int(self.sizes[self.reference])) for t in self.taus])
                ref_q = ostat(self.reference)[:, ref_r - 1]
                for l in range(self.n):
                    if l == self.reference:
                        continue
                    r = np.array([_quantile_rank(t, int(self.sizes[l])) for t in self.taus])
                    parts.append(ostat(l)[:, r - 1] - ref_q)
                out[kind] = np.hstack(parts)
            else:
                raise ValueError(f"unknown statistic {kind!r}")
        return out

    def _member_positions(self, mask: np.ndarray, l: int) -> np.ndarray:
        """Sorted-order positions of group ``l`` members, one row per relabeling."""
        return np.nonzero(mask)[1].reshape(mask.shape[0], int(self.sizes[l]))

    def _density(self, mask: np.ndarray, l: int) -> np.ndarray:
        # same left-to-right order over sorted members as kde_eval, without the (R, m, D) gather
        kernel, pos = self._kernel(l), self._member_positions(mask, l)
        acc = np.zeros((mask.shape[0], kernel.shape[1]))
        for k in range(pos.shape[1]):
            acc += kernel[pos[:, k]]
        return acc / (self.sizes[l] * self.bandwidths[l])

    def _kernel(self, l: int) -> np.ndarray:
        if self.bandwidths is None:
            raise ValueError("bandwidths are required for the DEN statistic")
        if self._kernels is None:
            self._kernels = {}
        if l not in self._kernels:
            b = self.bandwidths[l]
            self._kernels[l] = gaussian_kernel((self.grid[None, :] - self.z[:, None]) / b)
        return self._kernels[l]

    def scalar(self, sample: GroupedSample, kind: str) -> StatVector:
        """Scalar-path statistic for ``sample`` with this builder's fixed configuration."""
        if kind == "diff":
            return stat_diff(sample, self.grid)
        if kind == "qq":
            return stat_qq_pairs(sample, self.grid)
        if kind == "ecdf":
            return stat_ecdf_all(sample, self.grid)
        if kind == "den":
            return stat_den_all(sample, self.grid, self.bandwidths)
        if kind == "qr":
            return stat_qr(sample, self.taus, self.reference)
        raise ValueError(f"unknown statistic {kind!r}")
