"""Segment -> 58 x T window-feature matrix -> 754-dimensional feature vector."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..ingest import MODALITIES, NOMINAL_RATES, SLOT_MS, Modality
from .actigraphy import ACTI_NAMES, acti8
from .hrv import HRV_NAMES, hrv30
from .stats import STAT10_NAMES, STAT13_NAMES, stat10, stat13

WINDOW_MS = 5 * 60 * 1000
N_WINDOWS = SLOT_MS // WINDOW_MS  # 72

BASE_NAMES = (
    list(HRV_NAMES)
    + list(ACTI_NAMES)
    + [f"temp_{s}" for s in STAT10_NAMES]
    + [f"resp_{s}" for s in STAT10_NAMES]
)
BASE_MODALITY = ["ECG"] * 30 + ["ACCEL"] * 8 + ["TEMP"] * 10 + ["RESP"] * 10
N_BASE = len(BASE_NAMES)  # 58
N_FEATURES = N_BASE * len(STAT13_NAMES)  # 754

# rows of the window matrix fed by each stream
_ROWS = {
    Modality.RR: slice(0, 30),
    Modality.ACCEL: slice(30, 38),
    Modality.TEMP: slice(38, 48),
    Modality.RESP: slice(48, 58),
}


@dataclass
class ExtractionSettings:
    rates: dict = field(default_factory=lambda: dict(NOMINAL_RATES))
    min_window_coverage: float = 0.5
    min_rr_per_window: int = 100
    min_valid_windows: int = 12


@dataclass
class Window:
    index: int
    streams: dict  # Modality -> (timestamps, values)
    valid: dict  # Modality -> bool


@dataclass
class WindowFeatureMatrix:
    values: np.ndarray  # (58, T), NaN where invalid
    mask: np.ndarray  # (58, T) bool

    @property
    def n_windows(self):
        return self.values.shape[1]


@dataclass
class FeatureVector:
    values: np.ndarray  # (754,), NaN where invalid
    mask: np.ndarray

    def __len__(self):
        return len(self.values)


@dataclass
class DataPoint:
    features: FeatureVector
    score: int
    subject_id: str
    segment_start: int
    valid_windows: dict  # modality name -> count


class SegmentRejected(Exception):
    """No modality has enough valid windows."""


def feature_meta():
    """Per-dimension (base_feature, modality, statistic); index = base * 13 + stat."""
    return [
        {"index": b * len(STAT13_NAMES) + s, "base_feature": name,
         "modality": BASE_MODALITY[b], "statistic": stat}
        for b, name in enumerate(BASE_NAMES)
        for s, stat in enumerate(STAT13_NAMES)
    ]


def feature_names():
    return [f"{m['base_feature']}__{m['statistic']}" for m in feature_meta()]


def slice_windows(segment, settings=None):
    """Split a 6-hour segment into 72 five-minute windows with validity flags.

    A modality is valid in a window when its sample count reaches
    ``min_window_coverage`` of the nominal expected count; RR additionally
    needs ``min_rr_per_window`` intervals.
    """
    settings = settings or ExtractionSettings()
    edges = segment.start + WINDOW_MS * np.arange(N_WINDOWS + 1)
    cuts = {}
    for modality in MODALITIES:
        ts, _ = segment.streams[modality]
        cuts[modality] = np.searchsorted(ts, edges, side="left")
    windows = []
    for w in range(N_WINDOWS):
        streams, valid = {}, {}
        for modality in MODALITIES:
            ts, vals = segment.streams[modality]
            lo, hi = cuts[modality][w], cuts[modality][w + 1]
            count = hi - lo
            expected = settings.rates[modality.value] * WINDOW_MS / 1000.0
            ok = count > 0 and count / expected >= settings.min_window_coverage
            if modality is Modality.RR:
                ok = ok and count >= settings.min_rr_per_window
            streams[modality] = (ts[lo:hi], vals[lo:hi])
            valid[modality] = bool(ok)
        windows.append(Window(w, streams, valid))
    return windows


def window_matrix(windows):
    values = np.full((N_BASE, len(windows)), np.nan)
    for t, win in enumerate(windows):
        for modality, rows in _ROWS.items():
            if not win.valid[modality]:
                continue
            ts, vals = win.streams[modality]
            if modality is Modality.RR:
                values[rows, t] = hrv30(vals)
            elif modality is Modality.ACCEL:
                values[rows, t] = acti8(ts, vals)
            else:
                values[rows, t] = stat10(vals)
    return WindowFeatureMatrix(values, np.isfinite(values))


def segment_features(segment, settings=None):
    """Build the :class:`DataPoint` for one labelled segment.

    Raises :class:`SegmentRejected` when every modality has fewer than
    ``min_valid_windows`` valid windows.
    """
    settings = settings or ExtractionSettings()
    windows = slice_windows(segment, settings)
    counts = {m.value: sum(w.valid[m] for w in windows) for m in MODALITIES}
    if all(c < settings.min_valid_windows for c in counts.values()):
        raise SegmentRejected(f"{segment.subject_id}@{segment.start}: no modality has "
                              f">= {settings.min_valid_windows} valid windows")
    matrix = window_matrix(windows)
    vec = np.full(N_FEATURES, np.nan)
    for b in range(N_BASE):
        vec[b * 13:(b + 1) * 13] = stat13(matrix.values[b], settings.min_valid_windows)
    fv = FeatureVector(vec, np.isfinite(vec))
    return DataPoint(fv, segment.score, segment.subject_id, segment.start, counts)


def write_features(points, path, meta_path=None):
    """Write ``subject_id,segment_start_ms,score,f0..f753``; invalid cells empty."""
    header = ["subject_id", "segment_start_ms", "score"] + [f"f{i}" for i in range(N_FEATURES)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for p in points:
            cells = [repr(float(v)) if np.isfinite(v) else "" for v in p.features.values]
            fh.write(f"{p.subject_id},{p.segment_start},{p.score}," + ",".join(cells) + "\n")
    if meta_path is not None:
        with open(meta_path, "w", encoding="utf-8") as fh:
            json.dump({"n_features": N_FEATURES, "features": feature_meta()}, fh, indent=1)
