"""QRS detection, HRV features and one-vs-one neural classification of ECG records."""

__version__ = "0.1.0"

from .hrv_features import (  # noqa: E402
    FEATURE_NAMES,
    FEATURE_VERSION,
    FeatureMatrix,
    Normalizer,
    apply_normalizer,
    build_matrix,
    extract_features,
    fit_normalizer,
    rr_intervals,
)
from .kernels import BACKEND  # noqa: E402
from .neural import (  # noqa: E402
    KINDS,
    Mlp,
    ScgParams,
    Topology,
    forward,
    init_network,
    loss_and_gradient,
    predict,
    scg_train,
    split_70_30,
)
from .ovo_classifier import (  # noqa: E402
    PairNetBank,
    classify,
    compute_flags,
    condition_lookup,
    enumerate_pairs,
    train_bank,
    train_multiclass_baseline,
)
from .qrs_detector import RPeakSeries, StageTrace, detect_r_peaks  # noqa: E402
from .signal_io import (  # noqa: E402
    EcgRecord,
    SegmentSet,
    read_csv_record,
    read_wfdb_record,
    resample,
    segment,
    synthesize_ecg,
)
