"""Eight actigraphy features of tri-axial acceleration (g)."""

import numpy as np
from numba import njit

from .stats import moments, percentile_sorted

ACTI_NAMES = ("meanVM", "stdVM", "minVM", "maxVM", "medianVM",
              "meanAbsJerk", "SMA", "activeFraction")

ACTIVE_THRESHOLD_G = 0.05


def vector_magnitude(xyz):
    xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)
    return np.sqrt(np.sum(xyz * xyz, axis=1))


@njit(cache=True)
def _acti8(t_s, xyz):
    n = xyz.shape[0]
    vm = np.empty(n)
    sma = 0.0
    active = 0
    for i in range(n):
        x, y, z = xyz[i, 0], xyz[i, 1], xyz[i, 2]
        vm[i] = np.sqrt(x * x + y * y + z * z)
        sma += abs(x) + abs(y) + abs(z)
        if abs(vm[i] - 1.0) > ACTIVE_THRESHOLD_G:
            active += 1
    mean, std, _, _ = moments(vm)
    jerk = np.nan
    if n > 1:
        jerk = 0.0
        for i in range(1, n):
            jerk += abs((vm[i] - vm[i - 1]) / (t_s[i] - t_s[i - 1]))
        jerk /= n - 1
    vs = np.sort(vm)
    out = np.empty(8)
    out[0] = mean
    out[1] = std
    out[2] = vs[0]
    out[3] = vs[-1]
    out[4] = percentile_sorted(vs, 50.0)
    out[5] = jerk
    out[6] = sma / n
    out[7] = active / n
    return out


def acti8(timestamps_ms, xyz):
    """Features of the vector magnitude VM, ordered as ACTI_NAMES.

    meanAbsJerk is the mean |dVM/dt| in g/s using the sample timestamps;
    activeFraction is the share of samples with |VM - 1| above 0.05 g.
    """
    xyz = np.ascontiguousarray(np.asarray(xyz, dtype=float).reshape(-1, 3))
    if xyz.shape[0] == 0:
        return np.full(8, np.nan)
    t = np.asarray(timestamps_ms, dtype=float) / 1000.0
    return _acti8(t, xyz)
