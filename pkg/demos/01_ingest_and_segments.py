# %% [markdown]
# # Raw CSV bundles, slots and coverage
#
# A bundle is six CSV files: `subjects.csv`, one stream file per sensor
# (`rr.csv`, `accel.csv`, `temp.csv`, `resp.csv`) and `labels.csv` with one
# fatigue score per subject and 6-hour slot. Here we generate a small
# synthetic bundle, parse it and cut it into labelled segments.

# %%
import tempfile
from pathlib import Path

from fatigue_merf.config import load_config
from fatigue_merf.ingest import build_segments, coverage, load_bundle
from fatigue_merf.synth import gen_streams

work = Path(tempfile.mkdtemp(prefix="demo-ingest-"))
gen_streams(work, n_subjects=2, days=1, seed=3, missingness=0.2)
print(sorted(p.name for p in work.iterdir()))

# %% [markdown]
# `load_bundle` validates schemas, drops out-of-order timestamps and keeps
# RR values in their plausible range. Streams are indexed by modality and
# subject.

# %%
subjects, streams, labels = load_bundle(work)
for sid, rec in subjects.items():
    print(sid, "age", rec.age, "bmi", rec.bmi)
for modality, per_subject in streams.items():
    print(modality.value, {sid: len(s) for sid, s in per_subject.items()})

# %% [markdown]
# Each label opens a 6-hour segment. Coverage is the fraction of the
# nominal sample count that actually arrived; the generator writes its
# sampling rates to `bundle.toml` so the denominators match.

# %%
rates = load_config(work / "bundle.toml").extraction.rates
for seg in build_segments(streams, labels):
    cov = coverage(seg, rates).fractions
    print(seg.subject_id, seg.slot.name, "score", seg.score,
          {m: round(v, 2) for m, v in cov.items()})
