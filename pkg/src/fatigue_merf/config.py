"""Pipeline configuration: a TOML file plus command-line overrides.

Layout of the file (every key optional)::

    input_dir = "bundle"          # raw CSV bundle for `extract`
    features = "out/features.csv" # feature table for evaluate / fit / predict
    subjects = "bundle/subjects.csv"
    meta = "out/feature_meta.json"
    out_dir = "out"
    tz_offset_min = 0
    seed = 0
    threads = 1

    [rates]       # nominal samples per second, used for coverage
    RR = 1.2

    [extraction]  # min_window_coverage, min_rr_per_window, min_valid_windows
    [forest]      # n_trees, mtry, min_samples_leaf, max_depth, bootstrap
    [merf]        # max_em_iters, gll_rel_tol, init_sigma2, init_sigma_b2, n_bins
    [cv]          # k, split ("record" | "subject"), models, ridge, top_k

Relative paths are resolved against the directory holding the file.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .features.extract import ExtractionSettings
from .forest import ForestParams
from .ingest import NOMINAL_RATES
from .merf import MerfParams

DEFAULT_MODELS = ("LINEAR", "RF", "MERF_AGE", "MERF_BMI", "MERF_AGE_BMI")

_TOP_LEVEL = {"input_dir", "features", "subjects", "meta", "out_dir", "tz_offset_min",
              "seed", "threads", "rates", "extraction", "forest", "merf", "cv"}
_PATH_KEYS = ("input_dir", "features", "subjects", "meta", "out_dir")


class ConfigError(ValueError):
    pass


@dataclass
class CvSettings:
    k: int = 5
    split: str = "record"
    models: tuple = DEFAULT_MODELS
    ridge: float = 1.0
    top_k: int = 15


@dataclass
class PipelineConfig:
    input_dir: Path | None = None
    features: Path | None = None
    subjects: Path | None = None
    meta: Path | None = None
    out_dir: Path = Path(".")
    tz_offset_min: int = 0
    seed: int = 0
    threads: int = 1
    extraction: ExtractionSettings = field(default_factory=ExtractionSettings)
    forest: ForestParams = field(default_factory=ForestParams)
    merf: MerfParams = field(default_factory=MerfParams)
    n_bins: int = 3
    cv: CvSettings = field(default_factory=CvSettings)

    def validate(self):
        if self.cv.k < 2:
            raise ConfigError("cv.k must be >= 2")
        if self.cv.split not in ("record", "subject"):
            raise ConfigError(f"cv.split must be 'record' or 'subject', not {self.cv.split!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.n_bins < 1:
            raise ConfigError("merf.n_bins must be >= 1")
        self.forest.validate()
        self.merf.validate()
        return self

    def merf_params(self):
        """MERF settings carrying the configured forest."""
        return replace(self.merf, forest=self.forest)


def _table(doc, name, cls, extra=()):
    raw = dict(doc.get(name, {}))
    allowed = {f.name for f in fields(cls)} | set(extra)
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {', '.join(unknown)}")
    return raw


def from_dict(doc, base_dir="."):
    unknown = sorted(set(doc) - _TOP_LEVEL)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    base_dir = Path(base_dir)
    cfg = PipelineConfig()
    for key in _PATH_KEYS:
        if key in doc:
            setattr(cfg, key, base_dir / doc[key])
    for key in ("tz_offset_min", "seed", "threads"):
        if key in doc:
            setattr(cfg, key, int(doc[key]))

    rates = dict(NOMINAL_RATES)
    bad = sorted(set(doc.get("rates", {})) - set(rates))
    if bad:
        raise ConfigError(f"unknown modalities in [rates]: {', '.join(bad)}")
    rates.update({k: float(v) for k, v in doc.get("rates", {}).items()})
    ext = _table(doc, "extraction", ExtractionSettings)
    ext.pop("rates", None)
    cfg.extraction = ExtractionSettings(rates=rates, **ext)

    cfg.forest = ForestParams(**_table(doc, "forest", ForestParams))
    merf = _table(doc, "merf", MerfParams, extra=("n_bins",))
    merf.pop("forest", None)
    cfg.n_bins = int(merf.pop("n_bins", cfg.n_bins))
    cfg.merf = MerfParams(**merf)
    cv = _table(doc, "cv", CvSettings)
    if "models" in cv:
        cv["models"] = tuple(cv["models"])
    cfg.cv = CvSettings(**cv)
    return cfg


def load_config(path=None):
    """Read a TOML config (defaults when ``path`` is None)."""
    if path is None:
        return PipelineConfig()
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return from_dict(doc, path.parent)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
