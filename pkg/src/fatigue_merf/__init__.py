"""Fatigue assessment from wearable sensor streams.

Pipeline: raw CSV streams -> 6-hour labelled segments -> 754 window-derived
features -> random forest or mixed-effects random forest (MERF) with
demographic random intercepts -> cross-validated reports.
"""

from .evaluation import CvReport, Dataset, ModelConfig, cross_validate, metrics, pearson
from .features import DataPoint, ExtractionSettings, segment_features
from .forest import ForestParams, RandomForest, fit_forest
from .ingest import Modality, Segment, build_segments, load_bundle
from .merf import ClusterMode, ClusterScheme, MerfModel, MerfParams, fit_merf, predict_merf

__version__ = "0.1.0"

__all__ = [
    "ClusterMode", "ClusterScheme", "CvReport", "DataPoint", "Dataset", "ExtractionSettings",
    "ForestParams", "MerfModel", "MerfParams", "Modality", "ModelConfig", "RandomForest",
    "Segment", "build_segments", "cross_validate", "fit_forest", "fit_merf", "load_bundle",
    "metrics", "pearson", "predict_merf", "segment_features",
]
