"""Synthetic data with known ground truth.

Two generators:

* :func:`gen_clustered` -- Friedman #1 (or linear) fixed effect plus
  per-cluster random intercepts; the oracle for the MERF fit.
* :func:`gen_streams` -- a raw multimodal CSV bundle (subjects, RR, accel,
  temperature, respiration, fatigue labels) consumable by :mod:`ingest`.

All randomness comes from :func:`~fatigue_merf.rng.keyed_rng` (Philox), so
each generator is a pure function of its arguments.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pyarrow as pa
import pyarrow.csv as pacsv
from scipy.signal import lfilter

from .ingest import DAY_MS, SLOT_MS
from .rng import keyed_rng

N_INFORMATIVE = 5
N_NOISE = 5

# Study start, 2021-03-01 00:00 UTC.
EPOCH_MS = 1_614_556_800_000

# Sampling rates used by gen_streams (Hz; RR is event-driven).
STREAM_RATES = {"ACCEL": 1.0, "TEMP": 0.25, "RESP": 0.25}


class FixedEffect(str, enum.Enum):
    FRIEDMAN1 = "FRIEDMAN1"
    LINEAR = "LINEAR"


@dataclass(frozen=True)
class SynthSpec:
    n_clusters: int = 20
    per_cluster: int = 40
    fixed_effect: FixedEffect = FixedEffect.FRIEDMAN1
    sigma_b: float = 2.0
    sigma_e: float = 1.0
    seed: int = 1

    def validate(self):
        if self.sigma_b < 0 or self.sigma_e <= 0:
            raise ValueError("need sigma_b >= 0 and sigma_e > 0")
        if self.n_clusters < 1 or self.per_cluster < 1:
            raise ValueError("need at least one cluster and one point per cluster")


@dataclass
class SynthTruth:
    intercepts: np.ndarray
    sigma_b2: float
    sigma_e2: float
    fixed: np.ndarray  # noiseless f(x) per point

    def to_dict(self):
        return {"intercepts": self.intercepts.tolist(), "sigma_b2": self.sigma_b2,
                "sigma_e2": self.sigma_e2, "fixed": self.fixed.tolist()}


def friedman1(x):
    """10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5 (rows or a single point)."""
    x = np.asarray(x, dtype=float)
    x1, x2, x3, x4, x5 = (x[..., k] for k in range(5))
    return 10 * np.sin(np.pi * x1 * x2) + 20 * (x3 - 0.5) ** 2 + 10 * x4 + 5 * x5


def linear_effect(x):
    x = np.asarray(x, dtype=float)
    return x[..., :5] @ np.array([10.0, -5.0, 3.0, 2.0, 1.0])


def _rng(*key):
    return keyed_rng(*key)


def gen_clustered(spec):
    """Clustered regression data: ``y = f(x) + b_c + e``.

    X has 5 informative columns followed by 5 pure-noise columns, all
    uniform on [0, 1]. Intercepts are recentred to sample mean zero.
    Returns ``(X, y, clusters, truth)``.
    """
    spec.validate()
    rng = _rng(spec.seed)
    n = spec.n_clusters * spec.per_cluster
    X = rng.random((n, N_INFORMATIVE + N_NOISE))
    clusters = np.repeat(np.arange(spec.n_clusters), spec.per_cluster)
    b = rng.normal(0.0, spec.sigma_b, spec.n_clusters) if spec.sigma_b > 0 else np.zeros(spec.n_clusters)
    b = b - b.mean()
    fn = friedman1 if FixedEffect(spec.fixed_effect) is FixedEffect.FRIEDMAN1 else linear_effect
    fixed = fn(X)
    y = fixed + b[clusters] + rng.normal(0.0, spec.sigma_e, n)
    truth = SynthTruth(b, spec.sigma_b ** 2, spec.sigma_e ** 2, fixed)
    return X, y, clusters, truth


def write_clustered(spec, out_dir):
    """Write ``synth_features.csv`` (cluster,y,x0..x9) and ``synth_truth.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    X, y, clusters, truth = gen_clustered(spec)
    with open(out_dir / "synth_features.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("cluster,y," + ",".join(f"x{k}" for k in range(X.shape[1])) + "\n")
        for c, yy, row in zip(clusters, y, X):
            fh.write(f"{int(c)},{float(yy)!r}," + ",".join(repr(float(v)) for v in row) + "\n")
    doc = {"spec": {**asdict(spec), "fixed_effect": FixedEffect(spec.fixed_effect).value},
           **truth.to_dict()}
    with open(out_dir / "synth_truth.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
    return [out_dir / "synth_features.csv", out_dir / "synth_truth.json"]


def read_clustered(path):
    """Inverse of :func:`write_clustered` for the features file."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 2:], data[:, 1], data[:, 0].astype(np.int64)


# ---------------------------------------------------------------- streams

def _ar1(rng, n, phi, sd):
    """Stationary AR(1) noise with marginal standard deviation ``sd``."""
    e = rng.normal(0.0, sd * np.sqrt(1 - phi ** 2), n)
    e[0] = rng.normal(0.0, sd)
    return lfilter([1.0], [1.0, -phi], e)


def _circadian(t_ms):
    """Cosine with peak at 15:00 and trough at 03:00 (local = UTC here)."""
    hours = (t_ms % DAY_MS) / 3_600_000.0
    return np.cos(2 * np.pi * (hours - 15.0) / 24.0)


def _dropout_mask(rng, n_minutes, missingness):
    """Per-minute non-wear mask made of contiguous 1-12 h blocks."""
    missing = np.zeros(n_minutes, dtype=bool)
    if missingness <= 0:
        return missing
    while missing.mean() < missingness:
        length = int(rng.integers(60, 12 * 60 + 1))
        start = int(rng.integers(0, n_minutes))
        missing[start:start + length] = True
    return missing


def _keep(t, start, mask):
    minute = ((t - start) // 60_000).astype(np.int64)
    return ~mask[np.clip(minute, 0, mask.size - 1)]


def _subject(rng, sid, days, missingness):
    start = EPOCH_MS
    end = start + days * DAY_MS
    n_slots = days * 4
    age = int(rng.integers(25, 76))
    bmi = float(np.round(rng.uniform(18.5, 38.0), 1))

    # latent fatigue per 6-hour slot
    base = 5.0 + 0.04 * (age - 50) + 0.12 * (bmi - 27) + rng.normal(0, 1.0)
    slot_effect = np.tile([-0.5, -0.8, 0.4, 0.9], days)
    fatigue = base + slot_effect + _ar1(rng, n_slots, 0.6, 1.2)
    scores = np.clip(np.rint(fatigue + rng.normal(0, 0.5, n_slots)), 0, 10).astype(int)

    def fatigue_at(t):
        return fatigue[np.clip((t - start) // SLOT_MS, 0, n_slots - 1)]

    mask = _dropout_mask(rng, days * 24 * 60, missingness)

    # RR: mean rises (heart rate falls) and variability drops with fatigue
    n_beats = int((end - start) / 450) + 10
    approx_t = start + np.arange(n_beats) * 850
    f = fatigue_at(approx_t) - 5.0
    mu = 850 + 25 * f + 70 * -_circadian(approx_t)
    sd = np.clip(45 - 3 * f, 15, 80)
    resp_mod = 25 * np.sin(2 * np.pi * np.arange(n_beats) * 0.85 / 4.0)
    rr = np.rint(np.clip(mu + sd * _ar1(rng, n_beats, 0.7, 1.0) + resp_mod, 450, 1500))
    t_rr = start + np.cumsum(rr).astype(np.int64)
    in_range = t_rr < end
    t_rr, rr = t_rr[in_range], rr[in_range]
    keep = _keep(t_rr, start, mask)
    rr_out = (t_rr[keep], rr[keep])

    # accelerometer: gravity on z plus activity bursts, fewer when fatigued
    t_acc = start + np.arange(0, end - start, int(1000 / STREAM_RATES["ACCEL"]), dtype=np.int64)
    minute = (t_acc - start) // 60_000
    n_min = int(minute[-1]) + 1
    t_min = start + np.arange(n_min) * 60_000
    p_active = np.clip(0.35 + 0.25 * _circadian(t_min) - 0.04 * (fatigue_at(t_min) - 5), 0.02, 0.9)
    active = rng.random(n_min) < p_active
    amp = np.where(active, rng.uniform(0.1, 0.6, n_min), 0.0)[minute]
    phase = 2 * np.pi * 1.7 * (t_acc - start) / 1000.0
    noise = rng.normal(0, 0.01, (t_acc.size, 3))
    xyz = np.column_stack([
        amp * np.sin(phase) + noise[:, 0],
        0.5 * amp * np.cos(phase) + noise[:, 1],
        1.0 + 0.3 * amp * np.sin(0.5 * phase) + noise[:, 2],
    ])
    keep = _keep(t_acc, start, mask)
    acc_out = (t_acc[keep], np.round(xyz[keep], 3))

    # skin temperature and respiration rate
    t_slow = start + np.arange(0, end - start, int(1000 / STREAM_RATES["TEMP"]), dtype=np.int64)
    f = fatigue_at(t_slow) - 5.0
    temp = 33.0 + 0.12 * f + 0.5 * _circadian(t_slow) + _ar1(rng, t_slow.size, 0.99, 0.4)
    resp = np.clip(16 + 0.35 * f + 1.5 * _circadian(t_slow) + _ar1(rng, t_slow.size, 0.95, 1.0), 10, 24)
    keep = _keep(t_slow, start, mask)
    temp_out = (t_slow[keep], np.round(temp[keep], 2))
    resp_out = (t_slow[keep], np.round(resp[keep], 1))

    labels = (start + np.arange(n_slots, dtype=np.int64) * SLOT_MS, scores)
    return (sid, age, bmi), rr_out, acc_out, temp_out, resp_out, labels


def _write_table(path, header, sid_codes, names, columns):
    table = pa.table(
        {"subject_id": pa.DictionaryArray.from_arrays(sid_codes.astype(np.int32), names),
         **{f"c{k}": col for k, col in enumerate(columns)}})
    with open(path, "wb") as fh:
        fh.write((",".join(header) + "\n").encode())
        pacsv.write_csv(table, fh, pacsv.WriteOptions(include_header=False, quoting_style="none"))


def gen_streams(out_dir, n_subjects=21, days=7, seed=1, missingness=0.0):
    """Write a raw CSV bundle for ``n_subjects`` over ``days`` days.

    Files: subjects.csv, rr.csv, accel.csv, temp.csv, resp.csv, labels.csv,
    plus bundle.toml recording the sampling rates used. Dropouts are shared
    by all sensors (non-wear) and cover ``missingness`` of the time.
    """
    if n_subjects < 1 or days < 1:
        raise ValueError("n_subjects and days must be positive")
    if not 0 <= missingness < 1:
        raise ValueError("missingness must lie in [0, 1)")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = [f"S{k + 1:02d}" for k in range(n_subjects)]
    parts = [_subject(_rng(seed, k), names[k], days, missingness) for k in range(n_subjects)]

    with open(out_dir / "subjects.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("subject_id,age,bmi\n")
        for (sid, age, bmi), *_ in parts:
            fh.write(f"{sid},{age},{bmi}\n")

    def stack(idx):
        codes = np.concatenate([np.full(len(p[idx][0]), k) for k, p in enumerate(parts)])
        ts = np.concatenate([p[idx][0] for p in parts])
        vals = np.concatenate([p[idx][1] for p in parts])
        return codes, ts, vals

    codes, ts, vals = stack(1)
    _write_table(out_dir / "rr.csv", ["subject_id", "timestamp_ms", "value"], codes, names,
                 [ts, vals.astype(np.int64)])
    codes, ts, vals = stack(2)
    _write_table(out_dir / "accel.csv", ["subject_id", "timestamp_ms", "x", "y", "z"], codes,
                 names, [ts, vals[:, 0], vals[:, 1], vals[:, 2]])
    for idx, name in ((3, "temp.csv"), (4, "resp.csv")):
        codes, ts, vals = stack(idx)
        _write_table(out_dir / name, ["subject_id", "timestamp_ms", "value"], codes, names,
                     [ts, vals])
    codes, ts, vals = stack(5)
    _write_table(out_dir / "labels.csv", ["subject_id", "slot_start_ms", "score"], codes, names,
                 [ts, vals.astype(np.int64)])

    rates = {"RR": 72.0 / 60.0, **STREAM_RATES}
    with open(out_dir / "bundle.toml", "w", encoding="utf-8") as fh:
        fh.write("# written by fatigue_merf.synth.gen_streams\n")
        fh.write(f"input_dir = \"{out_dir.resolve().as_posix()}\"\n")
        fh.write("tz_offset_min = 0\n\n[rates]\n")
        for k, v in rates.items():
            fh.write(f"{k} = {v!r}\n")
    return [out_dir / f for f in ("subjects.csv", "rr.csv", "accel.csv", "temp.csv",
                                  "resp.csv", "labels.csv")]
