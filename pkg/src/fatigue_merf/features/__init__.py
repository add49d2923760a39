from .actigraphy import ACTI_NAMES, acti8, vector_magnitude
from .extract import (
    BASE_MODALITY, BASE_NAMES, N_BASE, N_FEATURES, N_WINDOWS, DataPoint,
    ExtractionSettings, FeatureVector, SegmentRejected, Window,
    WindowFeatureMatrix, feature_meta, feature_names, segment_features,
    slice_windows, window_matrix, write_features,
)
from .hrv import HRV_NAMES, hrv30
from .stats import STAT10_NAMES, STAT13_NAMES, max_drawdown, stat10, stat13
