"""Raw CSV ingestion and 6-hour segmentation.

Four modalities are handled: RR intervals (ms), tri-axial acceleration (g),
skin temperature and respiratory rate. Every stream file may hold several
subjects; parsers return one :class:`SampleStream` per subject.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import pyarrow as pa
import pyarrow.csv as pacsv

log = logging.getLogger(__name__)

SLOT_MS = 6 * 3600 * 1000
DAY_MS = 24 * 3600 * 1000

RR_BOUNDS = (200.0, 3000.0)
BAD_ROW_TOLERANCE = 0.01

# Expected samples per second, used only as coverage denominators.
NOMINAL_RATES = {"RR": 72.0 / 60.0, "ACCEL": 30.0, "TEMP": 0.25, "RESP": 0.25}

SUBJECT_COLUMNS = ["subject_id", "age", "bmi"]
LABEL_COLUMNS = ["subject_id", "slot_start_ms", "score"]
SCALAR_COLUMNS = ["subject_id", "timestamp_ms", "value"]
ACCEL_COLUMNS = ["subject_id", "timestamp_ms", "x", "y", "z"]


class IngestError(ValueError):
    """Raised for malformed input files or values."""


class Modality(str, enum.Enum):
    RR = "RR"
    ACCEL = "ACCEL"
    TEMP = "TEMP"
    RESP = "RESP"

    @property
    def columns(self):
        return ACCEL_COLUMNS if self is Modality.ACCEL else SCALAR_COLUMNS


MODALITIES = tuple(Modality)


class Slot(enum.IntEnum):
    NIGHT = 0
    MORNING = 1
    AFTERNOON = 2
    EVENING = 3


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    age: int
    bmi: float


@dataclass
class SampleStream:
    subject_id: str
    modality: Modality
    timestamps: np.ndarray  # int64 ms
    values: np.ndarray  # (n,) or (n, 3) for ACCEL
    dropped: int = 0

    def __len__(self):
        return len(self.timestamps)


@dataclass(frozen=True)
class FatigueLabel:
    subject_id: str
    slot_start: int
    score: int


@dataclass
class Segment:
    subject_id: str
    slot: Slot
    start: int
    score: int
    streams: dict = field(default_factory=dict)  # Modality -> (timestamps, values)

    @property
    def end(self):
        return self.start + SLOT_MS

    @property
    def empty(self):
        return all(len(ts) == 0 for ts, _ in self.streams.values())

    def count(self, modality):
        ts, _ = self.streams.get(Modality(modality), (np.empty(0), None))
        return len(ts)


@dataclass
class CoverageReport:
    fractions: dict
    valid_windows: int | None = None


def _read_csv(path, expected_columns):
    path = Path(path)
    if not path.exists():
        raise IngestError(f"{path}: no such file")
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
    columns = [c.strip() for c in header.split(",")] if header else []
    if columns != expected_columns:
        raise IngestError(
            f"{path}: header {columns!r} does not match expected {expected_columns!r}")
    return path


def parse_subjects(path):
    """Read a ``subject_id,age,bmi`` table.

    Returns a dict keyed by subject id, in file order.
    """
    path = _read_csv(path, SUBJECT_COLUMNS)
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if df.empty:
        warnings.warn(f"{path}: subject table is empty", stacklevel=2)
        return {}
    table = {}
    for row_no, row in enumerate(df.itertuples(index=False), start=2):
        sid = row.subject_id.strip()
        if sid in table:
            raise IngestError(f"{path}: row {row_no}: duplicate subject_id {sid!r}")
        try:
            age_f = float(row.age)
        except ValueError:
            raise IngestError(f"{path}: row {row_no}: field 'age' is not numeric: {row.age!r}")
        try:
            bmi = float(row.bmi)
        except ValueError:
            raise IngestError(f"{path}: row {row_no}: field 'bmi' is not numeric: {row.bmi!r}")
        if not (0 < age_f < 130) or age_f != int(age_f):
            raise IngestError(f"{path}: row {row_no}: field 'age' out of bounds: {row.age}")
        if not (5 < bmi < 100):
            raise IngestError(f"{path}: row {row_no}: field 'bmi' out of bounds: {row.bmi}")
        table[sid] = SubjectRecord(sid, int(age_f), bmi)
    log.info("parsed %d subjects from %s", len(table), path)
    return table


def _read_numeric(path, columns):
    """Load a subject-keyed numeric CSV, tolerating up to 1% bad rows.

    Returns (subject codes, sorted unique subject ids, numeric columns,
    number of rows skipped).
    """
    types = {"subject_id": pa.dictionary(pa.int32(), pa.string()),
             "timestamp_ms": pa.float64()}
    types.update({c: pa.float64() for c in columns[2:]})
    try:
        table = pacsv.read_csv(
            path, convert_options=pacsv.ConvertOptions(column_types=types))
        sid = table.column("subject_id").unify_dictionaries().combine_chunks()
        if isinstance(sid, pa.ChunkedArray):
            sid = sid.chunk(0) if sid.num_chunks else pa.array([], types["subject_id"])
        names = np.asarray(sid.dictionary.to_pylist(), dtype=object)
        raw_codes = sid.indices.to_numpy(zero_copy_only=False).astype(np.int64)
        cols = [table.column(c).to_numpy() for c in columns[1:]]
    except (pa.ArrowInvalid, pa.ArrowTypeError):
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
        raw_codes, names = pd.factorize(df["subject_id"].to_numpy())
        names = np.asarray(names, dtype=object)
        cols = [pd.to_numeric(df[c], errors="coerce").to_numpy(float) for c in columns[1:]]
    names = np.array([str(n).strip() for n in names], dtype=object)
    uniques, inverse = np.unique(names, return_inverse=True)
    codes = inverse[raw_codes] if len(raw_codes) else raw_codes
    bad = np.zeros(len(codes), dtype=bool)
    for c in cols:
        bad |= ~np.isfinite(c)
    n = len(codes)
    if n and bad.sum() > BAD_ROW_TOLERANCE * n:
        raise IngestError(
            f"{path}: {int(bad.sum())} of {n} rows unparseable (tolerance {BAD_ROW_TOLERANCE:.0%})")
    keep = ~bad
    return codes[keep], uniques, [c[keep] for c in cols], int(bad.sum())


def parse_stream(path, modality):
    """Parse one modality file into per-subject streams.

    Rows whose timestamp is not strictly greater than every earlier
    timestamp of the same subject are dropped, as are RR values outside
    ``RR_BOUNDS``. Drop counts are kept on each stream.
    """
    try:
        modality = Modality(modality)
    except ValueError:
        raise IngestError(f"unknown modality {modality!r}")
    path = _read_csv(path, modality.columns)
    codes, uniques, cols, n_bad = _read_numeric(path, modality.columns)
    ts = cols[0]
    values = np.column_stack(cols[1:]) if modality is Modality.ACCEL else cols[1]

    order = np.argsort(codes, kind="stable")
    bounds = np.searchsorted(codes[order], np.arange(len(uniques) + 1))
    streams = {}
    for k, subject in enumerate(uniques):
        rows = order[bounds[k]:bounds[k + 1]]
        t = ts[rows]
        v = values[rows]
        prev_max = np.concatenate(([-np.inf], np.maximum.accumulate(t)[:-1]))
        keep = t > prev_max
        if modality is Modality.RR:
            keep &= (v > RR_BOUNDS[0]) & (v < RR_BOUNDS[1])
        dropped = int(len(t) - keep.sum())
        streams[str(subject)] = SampleStream(
            str(subject), modality, t[keep].astype(np.int64), np.ascontiguousarray(v[keep]),
            dropped=dropped)
    if n_bad:
        log.warning("%s: skipped %d unparseable rows", path, n_bad)
    return streams


def parse_labels(path, tz_offset_min=0, floor_to_slot=False):
    """Read ``subject_id,slot_start_ms,score`` rows into :class:`FatigueLabel`.

    With ``floor_to_slot`` free report timestamps are floored to their
    enclosing slot; otherwise misaligned timestamps are rejected later by
    :func:`build_segments`.
    """
    path = _read_csv(path, LABEL_COLUMNS)
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    labels = []
    for row_no, row in enumerate(df.itertuples(index=False), start=2):
        try:
            start = int(float(row.slot_start_ms))
            score_f = float(row.score)
        except ValueError:
            raise IngestError(f"{path}: row {row_no}: non-numeric label field")
        if score_f != int(score_f) or not 0 <= score_f <= 10:
            raise IngestError(f"{path}: row {row_no}: score must be an integer in 0..10")
        if floor_to_slot:
            start = _floor_slot(start, tz_offset_min)
        labels.append(FatigueLabel(row.subject_id.strip(), start, int(score_f)))
    return labels


def _floor_slot(t, tz_offset_min):
    off = tz_offset_min * 60_000
    return (t + off) // SLOT_MS * SLOT_MS - off


def slot_of(slot_start, tz_offset_min=0):
    local = slot_start + tz_offset_min * 60_000
    if local % SLOT_MS:
        raise IngestError(f"label time {slot_start} is not on a 6-hour slot boundary")
    return Slot((local % DAY_MS) // SLOT_MS)


def build_segments(streams, labels, tz_offset_min=0):
    """Cut one 6-hour :class:`Segment` per label.

    ``streams`` maps modality -> {subject_id: SampleStream}. Samples are
    clipped to ``[slot_start, slot_start + 6 h)``. Output order is sorted by
    (subject_id, slot_start), so the result is independent of label order.
    """
    seen = set()
    segments = []
    for lab in sorted(labels, key=lambda l: (l.subject_id, l.slot_start)):
        slot = slot_of(lab.slot_start, tz_offset_min)
        key = (lab.subject_id, lab.slot_start)
        if key in seen:
            raise IngestError(f"duplicate label for subject {key[0]!r} at {key[1]}")
        seen.add(key)
        seg = Segment(lab.subject_id, slot, lab.slot_start, lab.score)
        for modality in MODALITIES:
            stream = streams.get(modality, {}).get(lab.subject_id)
            if stream is None:
                seg.streams[modality] = (np.empty(0, np.int64), _empty_values(modality))
                continue
            lo, hi = np.searchsorted(stream.timestamps, [seg.start, seg.end], side="left")
            seg.streams[modality] = (stream.timestamps[lo:hi], stream.values[lo:hi])
        segments.append(seg)
    return segments


def _empty_values(modality):
    return np.empty((0, 3)) if modality is Modality.ACCEL else np.empty(0)


def coverage(segment, rates=None, duration_s=SLOT_MS / 1000):
    """Fraction of expected samples present per modality, clamped to [0, 1]."""
    rates = {**NOMINAL_RATES, **(rates or {})}
    fractions = {}
    for modality in MODALITIES:
        expected = rates[modality.value] * duration_s
        fractions[modality.value] = float(min(1.0, segment.count(modality) / expected))
    return CoverageReport(fractions)


def load_bundle(directory, tz_offset_min=0):
    """Parse a directory holding the six standard CSV files."""
    directory = Path(directory)
    subjects = parse_subjects(directory / "subjects.csv")
    streams = {
        Modality.RR: parse_stream(directory / "rr.csv", Modality.RR),
        Modality.ACCEL: parse_stream(directory / "accel.csv", Modality.ACCEL),
        Modality.TEMP: parse_stream(directory / "temp.csv", Modality.TEMP),
        Modality.RESP: parse_stream(directory / "resp.csv", Modality.RESP),
    }
    labels = parse_labels(directory / "labels.csv", tz_offset_min)
    return subjects, streams, labels
