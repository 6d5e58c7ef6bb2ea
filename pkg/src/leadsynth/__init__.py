"""Synchronous 12-lead ECG synthesis from a single currently recorded lead.

The pipeline: parse or simulate multi-lead records (`recordio`, `simgen`),
clean them (`preprocess`), find beats and landmarks (`delineate`), extract
per-beat predictors (`features`), match historic beats by shape (`dtw`),
predict inter-lead timing lags with a from-scratch random forest
(`forest`), assemble missing leads (`synth`), and score or visualize the
result (`metrics`, `vcg`, `svgplot`, `cli`).
"""

from . import errors
from .leads import FRANK_LEADS, INDEPENDENT_8, STANDARD_12, LeadId, parse_lead
from .recordio import (
    MultiLeadRecord,
    RecordHeader,
    SignalSpec,
    load_record,
    make_record,
    parse_header,
    read_record,
    read_record_csv,
    records_allclose,
    resample_record,
    slice_record,
    write_record_csv,
    write_record_wfdb,
)
from .preprocess import PreprocessConfig, bandpass, preprocess_record, preprocess_signal, remove_baseline
from .delineate import (
    BeatFiducials,
    BeatSegment,
    FiducialSet,
    Landmark,
    delineate_beats,
    delineate_lead,
    detect_r_peaks,
    fiducials_to_csv,
    segment_beats,
)
from .dtw import DtwConfig, dtw_distance, nearest_beat
from .features import (
    FEATURE_NAMES,
    BeatFeatures,
    LagSample,
    TrainingSet,
    build_training_set,
    extract_features,
)
from .forest import (
    ForestConfig,
    LagModel,
    feature_importance,
    load_model,
    predict,
    save_model,
    train_forest,
)
from .synth import (
    HistoricLibrary,
    SynthesisConfig,
    SynthesizedLead,
    affine_transform_beat,
    build_library,
    match_historic_beat,
    synthesize_all,
    synthesize_beat,
    synthesize_lead,
    train_lag_models,
)
from .vcg import VcgSignal, forward_dower, inverse_dower, qrs_axis, record_to_vcg
from .metrics import (
    AccuracyMatrix,
    EvalProtocol,
    EvaluationReport,
    accuracy_matrix,
    improvement_report,
    pearson,
    r_squared,
)
from .simgen import (
    GroundTruth,
    HandheldSession,
    LagSpec,
    RrSchedule,
    SynthConfig,
    Wave,
    generate_synthetic_record,
    simulate_handheld_session,
)

__version__ = "0.1.0"
