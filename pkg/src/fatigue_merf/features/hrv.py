"""Thirty heart-rate-variability features of an RR-interval series (ms).

Time-domain (14), frequency-domain (8) and nonlinear (8) groups, in the
order of HRV_NAMES. Spectral features use the tachogram resampled at 4 Hz
by linear interpolation and a Welch estimate (Hann, 256-sample segments,
50% overlap, per-segment mean removal).
"""

import numpy as np
from numba import njit

from .stats import percentile_sorted

HRV_NAMES = (
    # time domain
    "MeanNN", "SDNN", "RMSSD", "SDSD", "pNN50", "pNN20", "CVNN", "CVSD",
    "MedianNN", "MadNN", "IQRNN", "MeanHR", "MinHR", "MaxHR",
    # frequency domain
    "VLF", "LF", "HF", "TotalPower", "LFnorm", "HFnorm", "LF_HF", "HF_peak",
    # nonlinear
    "SD1", "SD2", "SD1_SD2", "PoincareArea", "SampEn", "ApEn", "DFA_alpha1",
    "TriangularIndex",
)

RESAMPLE_HZ = 4.0
WELCH_NPERSEG = 256
BANDS = {"VLF": (0.003, 0.04), "LF": (0.04, 0.15), "HF": (0.15, 0.4)}
TRI_BIN_MS = 7.8125
DFA_MIN_SCALE = 4
DFA_MAX_SCALE = 16


@njit(cache=True)
def _std(x):
    n = x.size
    if n < 2:
        return 0.0
    mean = x.mean()
    acc = 0.0
    for v in x:
        acc += (v - mean) ** 2
    return np.sqrt(acc / (n - 1))


@njit(cache=True)
def time_domain(rr):
    out = np.empty(14)
    n = rr.size
    mean_nn = rr.mean()
    sdnn = _std(rr)
    if n > 1:
        diff = rr[1:] - rr[:-1]
        rmssd = np.sqrt(np.mean(diff * diff))
        sdsd = _std(diff)
        pnn50 = np.mean(np.abs(diff) > 50.0)
        pnn20 = np.mean(np.abs(diff) > 20.0)
    else:
        rmssd = np.nan
        sdsd = np.nan
        pnn50 = np.nan
        pnn20 = np.nan
    xs = np.sort(rr)
    median = percentile_sorted(xs, 50.0)
    dev = np.sort(np.abs(rr - median))
    hr_sum = 0.0
    for v in rr:
        hr_sum += 60000.0 / v
    out[0] = mean_nn
    out[1] = sdnn
    out[2] = rmssd
    out[3] = sdsd
    out[4] = pnn50
    out[5] = pnn20
    out[6] = sdnn / mean_nn
    out[7] = rmssd / mean_nn
    out[8] = median
    out[9] = percentile_sorted(dev, 50.0)
    out[10] = percentile_sorted(xs, 75.0) - percentile_sorted(xs, 25.0)
    out[11] = hr_sum / n
    out[12] = 60000.0 / xs[-1]
    out[13] = 60000.0 / xs[0]
    return out


@njit(cache=True)
def entropies(x, m, r):
    """(sample entropy, approximate entropy) in one pass over template pairs.

    SampEn = -ln(A/B) over pairs i < j < N - m, NaN when A or B is zero.
    ApEn = phi_m - phi_{m+1} with self-matches included.
    """
    n = x.size
    if n <= m + 1:
        return np.nan, np.nan
    nm = n - m + 1  # templates of length m
    cm = np.ones(nm)
    cm1 = np.ones(nm - 1)
    a = 0
    b = 0
    for i in range(nm):
        for j in range(i + 1, nm):
            match = True
            for k in range(m):
                if abs(x[i + k] - x[j + k]) > r:
                    match = False
                    break
            if not match:
                continue
            cm[i] += 1
            cm[j] += 1
            if j < nm - 1:
                b += 1
                if abs(x[i + m] - x[j + m]) <= r:
                    a += 1
                    cm1[i] += 1
                    cm1[j] += 1
    phi_m = 0.0
    for i in range(nm):
        phi_m += np.log(cm[i] / nm)
    phi_m1 = 0.0
    for i in range(nm - 1):
        phi_m1 += np.log(cm1[i] / (nm - 1))
    apen = phi_m / nm - phi_m1 / (nm - 1)
    sampen = -np.log(a / b) if a > 0 and b > 0 else np.nan
    return sampen, apen


def sample_entropy(x, m=2, r=None):
    x = np.ascontiguousarray(x, dtype=float)
    r = 0.2 * _std(x) if r is None else r
    return entropies(x, m, r)[0]


def approximate_entropy(x, m=2, r=None):
    x = np.ascontiguousarray(x, dtype=float)
    r = 0.2 * _std(x) if r is None else r
    return entropies(x, m, r)[1]


@njit(cache=True)
def _dfa_fluctuation(profile, scale):
    n_boxes = profile.size // scale
    if n_boxes < 1:
        return np.nan
    tm = (scale - 1) / 2.0
    stt = 0.0
    for k in range(scale):
        stt += (k - tm) ** 2
    sq = 0.0
    for b in range(n_boxes):
        base = b * scale
        sm = 0.0
        for k in range(scale):
            sm += profile[base + k]
        sm /= scale
        sxy = 0.0
        for k in range(scale):
            sxy += (k - tm) * (profile[base + k] - sm)
        slope = sxy / stt
        for k in range(scale):
            res = profile[base + k] - (sm + slope * (k - tm))
            sq += res * res
    return np.sqrt(sq / (n_boxes * scale))


@njit(cache=True)
def dfa_alpha1(rr):
    """Slope of log F(n) against log n for box sizes 4..16."""
    profile = np.cumsum(rr - rr.mean())
    xs = np.empty(DFA_MAX_SCALE - DFA_MIN_SCALE + 1)
    ys = np.empty_like(xs)
    k = 0
    for s in range(DFA_MIN_SCALE, DFA_MAX_SCALE + 1):
        f = _dfa_fluctuation(profile, s)
        if np.isfinite(f) and f > 0:
            xs[k] = np.log(s)
            ys[k] = np.log(f)
            k += 1
    if k < 2:
        return np.nan
    xs = xs[:k]
    ys = ys[:k]
    xm = xs.mean()
    ym = ys.mean()
    return np.sum((xs - xm) * (ys - ym)) / np.sum((xs - xm) ** 2)


@njit(cache=True)
def triangular_index(rr):
    lo = rr.min()
    bins = np.floor((rr - lo) / TRI_BIN_MS).astype(np.int64)
    return rr.size / np.bincount(bins).max()


@njit(cache=True)
def nonlinear(rr):
    out = np.full(8, np.nan)
    if rr.size < 3:
        return out
    x1 = rr[:-1]
    x2 = rr[1:]
    sd1 = _std((x2 - x1) / np.sqrt(2.0))
    sd2 = _std((x2 + x1) / np.sqrt(2.0))
    sampen, apen = entropies(rr, 2, 0.2 * _std(rr))
    out[0] = sd1
    out[1] = sd2
    if sd2 > 0:
        out[2] = sd1 / sd2
    out[3] = np.pi * sd1 * sd2
    out[4] = sampen
    out[5] = apen
    out[6] = dfa_alpha1(rr)
    out[7] = triangular_index(rr)
    return out


def resample_tachogram(rr, fs=RESAMPLE_HZ):
    """Linearly interpolate RR values onto a uniform grid at ``fs`` Hz.

    Beat times are the cumulative sum of the intervals, so the result
    depends only on the interval values and their order.
    """
    rr = np.asarray(rr, dtype=float)
    t = np.cumsum(rr) / 1000.0
    grid = np.arange(t[0], t[-1], 1.0 / fs)
    return np.interp(grid, t, rr)


_hann_cache = {}


def welch_psd(x, fs=RESAMPLE_HZ, nperseg=WELCH_NPERSEG):
    """One-sided Welch PSD density (periodic Hann, 50% overlap, mean-detrended frames)."""
    x = np.asarray(x, dtype=float)
    nperseg = min(nperseg, x.size)
    step = nperseg - nperseg // 2
    win = _hann_cache.get(nperseg)
    if win is None:
        win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(nperseg) / nperseg)
        _hann_cache[nperseg] = win
    frames = np.lib.stride_tricks.sliding_window_view(x, nperseg)[::step]
    frames = frames - frames.mean(axis=1, keepdims=True)
    spec = np.abs(np.fft.rfft(frames * win, axis=1)) ** 2
    psd = spec.mean(axis=0) / (fs * np.sum(win * win))
    if nperseg % 2 == 0:
        psd[1:-1] *= 2.0
    else:
        psd[1:] *= 2.0
    return np.fft.rfftfreq(nperseg, 1.0 / fs), psd


def _band_power(freqs, psd, lo, hi):
    band = (freqs >= lo) & (freqs < hi)
    if band.sum() < 2:
        return 0.0
    f, p = freqs[band], psd[band]
    return float(np.sum((p[1:] + p[:-1]) * np.diff(f)) / 2.0)


def frequency_domain(rr):
    rr = np.asarray(rr, dtype=float)
    if rr.size < 3:
        return np.full(8, np.nan)
    tach = resample_tachogram(rr)
    if tach.size < 16:
        return np.full(8, np.nan)
    freqs, psd = welch_psd(tach)
    vlf, lf, hf = (_band_power(freqs, psd, *BANDS[k]) for k in ("VLF", "LF", "HF"))
    lf_hf_sum = lf + hf
    hf_band = (freqs >= BANDS["HF"][0]) & (freqs < BANDS["HF"][1])
    hf_peak = freqs[hf_band][np.argmax(psd[hf_band])] if hf_band.any() else np.nan
    return np.array([
        vlf, lf, hf, vlf + lf + hf,
        100.0 * lf / lf_hf_sum if lf_hf_sum > 0 else np.nan,
        100.0 * hf / lf_hf_sum if lf_hf_sum > 0 else np.nan,
        lf / hf if hf > 0 else np.nan,
        hf_peak,
    ])


def hrv30(rr):
    """All thirty features in HRV_NAMES order.

    Undefined values (e.g. LF/HF with no HF power, SampEn with no matches)
    come back as NaN; an empty input is all-NaN.
    """
    rr = np.ascontiguousarray(rr, dtype=float)
    if rr.size == 0:
        return np.full(30, np.nan)
    return np.concatenate([time_domain(rr), frequency_domain(rr), nonlinear(rr)])
