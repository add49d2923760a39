"""Descriptive statistics used at both feature levels.

Conventions: sample standard deviation (``ddof=1``, 0 for a single value),
population-moment skewness and excess kurtosis (both 0 for a constant
series), percentiles by linear interpolation at rank ``(n - 1) * q / 100``.
"""

import numpy as np
from numba import njit

STAT10_NAMES = ("mean", "std", "min", "max", "skew", "kurtosis",
                "p25", "p50", "p75", "max_drop")
STAT13_NAMES = ("p10", "p25", "p50", "p75", "p90", "mean", "min", "max",
                "std", "skew", "kurtosis", "iqr", "energy")


@njit(cache=True)
def percentile_sorted(xs, q):
    """Linear-interpolation percentile of an already sorted array."""
    pos = (xs.size - 1) * q / 100.0
    lo = int(np.floor(pos))
    hi = min(lo + 1, xs.size - 1)
    frac = pos - lo
    return xs[lo] + (xs[hi] - xs[lo]) * frac


@njit(cache=True)
def moments(x):
    """(mean, sample std, skewness, excess kurtosis)."""
    n = x.size
    mean = 0.0
    for v in x:
        mean += v
    mean /= n
    lo = x.min()
    hi = x.max()
    if n < 2 or lo == hi:
        return mean, 0.0, 0.0, 0.0
    m2 = 0.0
    m3 = 0.0
    m4 = 0.0
    for v in x:
        d = v - mean
        d2 = d * d
        m2 += d2
        m3 += d2 * d
        m4 += d2 * d2
    m2 /= n
    m3 /= n
    m4 /= n
    std = np.sqrt(m2 * n / (n - 1))
    if m2 * m2 == 0.0:  # spread too small to square without underflow
        return mean, std, 0.0, 0.0
    return mean, std, m3 / m2 ** 1.5, m4 / (m2 * m2) - 3.0


@njit(cache=True)
def _max_drawdown(x):
    peak = x[0]
    worst = 0.0
    for v in x:
        if v > peak:
            peak = v
        elif peak - v > worst:
            worst = peak - v
    return worst


@njit(cache=True)
def _stat10(x):
    out = np.empty(10)
    mean, std, skew, kurt = moments(x)
    xs = np.sort(x)
    out[0] = mean
    out[1] = std
    out[2] = xs[0]
    out[3] = xs[-1]
    out[4] = skew
    out[5] = kurt
    out[6] = percentile_sorted(xs, 25.0)
    out[7] = percentile_sorted(xs, 50.0)
    out[8] = percentile_sorted(xs, 75.0)
    out[9] = _max_drawdown(x)
    return out


@njit(cache=True)
def _stat13(x):
    out = np.empty(13)
    mean, std, skew, kurt = moments(x)
    xs = np.sort(x)
    out[0] = percentile_sorted(xs, 10.0)
    out[1] = percentile_sorted(xs, 25.0)
    out[2] = percentile_sorted(xs, 50.0)
    out[3] = percentile_sorted(xs, 75.0)
    out[4] = percentile_sorted(xs, 90.0)
    out[5] = mean
    out[6] = xs[0]
    out[7] = xs[-1]
    out[8] = std
    out[9] = skew
    out[10] = kurt
    out[11] = out[3] - out[1]
    energy = 0.0
    for v in x:
        energy += v * v
    out[12] = energy / x.size
    return out


def max_drawdown(series):
    """Largest drop from a running peak to a later value (>= 0)."""
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ValueError("max_drawdown of an empty series")
    return float(_max_drawdown(x))


def stat10(series):
    """Ten window-level statistics of a scalar signal, ordered as STAT10_NAMES.

    An empty series yields all-NaN.
    """
    x = np.ascontiguousarray(series, dtype=float)
    if x.size == 0:
        return np.full(10, np.nan)
    return _stat10(x)


def stat13(series, min_length=1):
    """Thirteen summary statistics over the time axis, ordered as STAT13_NAMES.

    NaN entries are treated as invalid windows and removed first; if fewer
    than ``min_length`` remain the result is all-NaN.
    """
    x = np.asarray(series, dtype=float)
    x = np.ascontiguousarray(x[np.isfinite(x)])
    if x.size == 0 or x.size < min_length:
        return np.full(13, np.nan)
    return _stat13(x)
