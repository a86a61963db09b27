"""Asymptotic two-sample Kolmogorov-Smirnov test with its constant-width band."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

SMALL_SAMPLE = 30


@dataclass(frozen=True)
class KsResult:
    d_stat: float
    m_factor: float
    p_value: float
    c_alpha: float
    envelope_halfwidth: float
    alpha: float

    def reject(self) -> bool:
        return self.d_stat > self.c_alpha


def sup_count_difference(x, y) -> tuple[int, int, int]:
    """Return ``(k, m1, m2)`` with sup |F1 - F2| = k / (m1 m2), exact in integers.

    The supremum of the step-function difference is attained at a pooled
    data point, so only those are checked.
    """
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    if x.size == 0 or y.size == 0:
        raise ValueError("both samples must be nonempty")
    pts = np.concatenate([x, y])
    cx = np.searchsorted(x, pts, side="right").astype(np.int64)
    cy = np.searchsorted(y, pts, side="right").astype(np.int64)
    k = int(np.max(np.abs(cx * y.size - cy * x.size)))
    return k, x.size, y.size


def ks_statistic(x, y) -> tuple[float, float]:
    """Return (sqrt(M) * sup|F1 - F2|, M) with M = m1 m2 / (m1 + m2)."""
    k, m1, m2 = sup_count_difference(x, y)
    M = m1 * m2 / (m1 + m2)
    return math.sqrt(M) * k / (m1 * m2), M


def kolmogorov_cdf(t: float) -> float:
    """Limiting distribution function of sqrt(M) sup|F1 - F2| under the null."""
    if t <= 0:
        return 0.0
    if t < 1.0:
        # Jacobi-theta form of the same function; the alternating series
        # converges too slowly near zero
        total = 0.0
        k = 1
        while True:
            term = math.exp(-((2 * k - 1) ** 2) * math.pi ** 2 / (8 * t * t))
            total += term
            if term < 1e-16:
                break
            k += 1
        return min(1.0, math.sqrt(2 * math.pi) / t * total)
    total = 0.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * t * t)
        total += term if k % 2 else -term
        if term < 1e-12:
            break
        k += 1
    return max(0.0, min(1.0, 1.0 - 2.0 * total))


def kolmogorov_critical_value(alpha: float, tol: float = 1e-12) -> float:
    """Solve K(c) = 1 - alpha by bisection."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    lo, hi = 0.0, 10.0
    target = 1.0 - alpha
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if kolmogorov_cdf(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def ks_test_asymptotic(x, y, alpha: float = 0.05, warn: bool = True) -> KsResult:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    d, M = ks_statistic(x, y)
    if warn and min(len(x), len(y)) < SMALL_SAMPLE:
        warnings.warn("asymptotic KS test used with fewer than 30 observations in a group",
                      stacklevel=2)
    c = kolmogorov_critical_value(alpha)
    return KsResult(d, M, 1.0 - kolmogorov_cdf(d), c, c / math.sqrt(M), alpha)
