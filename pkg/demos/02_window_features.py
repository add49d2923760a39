# %% [markdown]
# # Window features and the 754-dimensional vector
#
# Each 6-hour segment is split into 72 five-minute windows. Every window
# yields 58 base features (30 from RR intervals, 8 from the accelerometer,
# 10 each from skin temperature and respiration). Thirteen statistics over
# the window axis then give one fixed-length vector per segment.

# %%
import numpy as np

from fatigue_merf.features import HRV_NAMES, hrv30, max_drawdown, stat10, stat13

rng = np.random.default_rng(0)
t, rr = 0.0, []
while t < 300:  # five minutes of beats with a 0.25 Hz breathing rhythm
    v = 850 + 35 * np.sin(2 * np.pi * 0.25 * t) + rng.normal(0, 10)
    rr.append(v)
    t += v / 1000
features = dict(zip(HRV_NAMES, hrv30(rr)))
for name in ("MeanNN", "SDNN", "RMSSD", "pNN50", "LF", "HF", "HF_peak", "SampEn", "DFA_alpha1"):
    print(f"{name:>10s} {features[name]:.4g}")

# %% [markdown]
# The per-window summary `stat10` and the across-window summary `stat13`
# use sample standard deviation, population skewness and excess kurtosis,
# and linear-interpolation percentiles. The "drop" statistic is the
# largest peak-to-trough decline.

# %%
print(stat10([1, 2, 3, 4]))
print("drawdown of [3, 5, 4, 6, 2]:", max_drawdown([3, 5, 4, 6, 2]))
print("p10 / p90 of 1..100:", stat13(np.arange(1, 101))[[0, 4]])

# %% [markdown]
# On a real segment, windows whose sensor coverage is too low are marked
# invalid and skipped by `stat13`; a modality with fewer than 12 valid
# windows leaves its 13-statistic blocks empty.

# %%
import tempfile
from pathlib import Path

from fatigue_merf.config import load_config
from fatigue_merf.features import feature_meta, segment_features
from fatigue_merf.ingest import build_segments, load_bundle
from fatigue_merf.synth import gen_streams

work = Path(tempfile.mkdtemp(prefix="demo-features-"))
gen_streams(work, n_subjects=1, days=1, seed=5)
settings = load_config(work / "bundle.toml").extraction
_, streams, labels = load_bundle(work)
point = segment_features(build_segments(streams, labels)[0], settings)
print("valid windows:", point.valid_windows)
print("vector length:", len(point.features), "valid dims:", int(point.features.mask.sum()))
print("first dims:", [m["base_feature"] + "/" + m["statistic"] for m in feature_meta()[:3]])
