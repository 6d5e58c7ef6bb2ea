"""Per-beat predictor vectors and training sets for inter-lead lag regression.

Ten predictors per beat: five amplitudes (R, P, T heights and S, Q peaks,
in microvolts relative to the beat's isoelectric level) and five durations
(RR, QRS, ST, PR and T-wave, in milliseconds).  The response paired with a
beat's features is the RR-length difference between the missing and the
current lead for that beat.
"""

from __future__ import annotations

from dataclasses import dataclass
from io import StringIO

import numpy as np

from .delineate import BeatFiducials, BeatSegment, delineate_beats, detect_r_peaks, segment_beats
from .errors import InsufficientBeats, LeadMissing, MissingLandmark
from .leads import LeadId
from .preprocess import PreprocessConfig, preprocess_record
from .recordio import MultiLeadRecord, slice_record

FEATURE_NAMES = (
    "r_height_uv", "p_height_uv", "t_height_uv", "s_peak_uv", "q_peak_uv",
    "rr_ms", "qrs_ms", "st_ms", "pr_ms", "twave_ms",
)

N_FEATURES = len(FEATURE_NAMES)

LAG_GATE_MS = 200.0      # |response| beyond this is a pairing/detection failure
PAIR_TOL_S = 0.15        # cross-lead R-peak pairing tolerance
MIN_TRAINING_BEATS = 10


@dataclass(frozen=True)
class BeatFeatures:
    r_height_uv: float
    p_height_uv: float
    t_height_uv: float
    s_peak_uv: float
    q_peak_uv: float
    rr_ms: float
    qrs_ms: float
    st_ms: float
    pr_ms: float
    twave_ms: float

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite feature value")
        if self.rr_ms <= 0:
            raise ValueError("RR interval must be positive")
        if min(self.qrs_ms, self.st_ms, self.pr_ms, self.twave_ms) < 0:
            raise ValueError("durations must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=np.float64)


_REQUIRED = ("ppeak", "qpeak", "speak", "tpeak", "pon", "ton", "toff")


def extract_features(beat: BeatSegment, fiducials: BeatFiducials, fs: float) -> BeatFeatures:
    """Build the predictor vector for one beat.

    Raises MissingLandmark when any required landmark is absent; the caller
    decides whether to skip the beat.
    """
    missing = [n for n in _REQUIRED if fiducials.get(n) is None]
    if missing:
        raise MissingLandmark(f"beat {beat.index} lacks {', '.join(missing)}")

    iso = fiducials.iso_mv

    def uv(lm):
        return (lm.value_mv - iso) * 1000.0

    def ms(a, b):
        return (b.index - a.index) / fs * 1000.0

    return BeatFeatures(
        r_height_uv=uv(fiducials.rpeak),
        p_height_uv=uv(fiducials.ppeak),
        t_height_uv=uv(fiducials.tpeak),
        s_peak_uv=uv(fiducials.speak),
        q_peak_uv=uv(fiducials.qpeak),
        rr_ms=beat.delta_ms,
        qrs_ms=ms(fiducials.qpeak, fiducials.speak),
        st_ms=ms(fiducials.speak, fiducials.ton),
        pr_ms=ms(fiducials.pon, fiducials.qpeak),
        twave_ms=ms(fiducials.ton, fiducials.toff),
    )


@dataclass(frozen=True)
class LagSample:
    features: BeatFeatures
    lag_ms: float
    beat_index: int
    lead_pair: tuple

    def __post_init__(self):
        if abs(self.lag_ms) > LAG_GATE_MS:
            raise ValueError(f"lag {self.lag_ms} ms beyond the +-{LAG_GATE_MS} ms gate")


@dataclass(frozen=True)
class TrainingSet:
    samples: tuple
    lead_pair: tuple          # (missing lead i, current lead j)
    source: str
    n_outliers: int = 0       # beats dropped by the lag gate

    def __post_init__(self):
        for s in self.samples:
            if s.lead_pair != self.lead_pair:
                raise ValueError("mixed lead pairs in one training set")

    @property
    def n(self) -> int:
        return len(self.samples)

    def as_arrays(self):
        X = np.vstack([s.features.as_array() for s in self.samples])
        y = np.array([s.lag_ms for s in self.samples])
        return X, y

    def to_csv(self) -> str:
        buf = StringIO()
        buf.write(",".join(FEATURE_NAMES) + ",lag_ms\n")
        for s in self.samples:
            row = ",".join(f"{v:.6f}" for v in s.features.as_array())
            buf.write(f"{row},{s.lag_ms:.6f}\n")
        return buf.getvalue()


def pair_rpeaks(r_a, r_b, fs: float, tol_s: float = PAIR_TOL_S):
    """One-to-one R-peak correspondence between two leads.

    Greedy nearest-first matching within the tolerance; returns index pairs
    (into r_a, r_b) sorted by the second lead's order.
    """
    r_a = np.asarray(r_a, dtype=float)
    r_b = np.asarray(r_b, dtype=float)
    cand = []
    for jb, rb in enumerate(r_b):
        ia = int(np.searchsorted(r_a, rb))
        for k in (ia - 1, ia):
            if 0 <= k < r_a.size:
                dist = abs(r_a[k] - rb)
                if dist <= tol_s * fs:
                    cand.append((dist, k, jb))
    cand.sort()
    used_a, used_b = set(), set()
    pairs = []
    for _, ka, jb in cand:
        if ka in used_a or jb in used_b:
            continue
        used_a.add(ka)
        used_b.add(jb)
        pairs.append((ka, jb))
    pairs.sort(key=lambda p: p[1])
    return pairs


def build_training_set(
    historic: MultiLeadRecord,
    lead_i: LeadId,
    lead_j: LeadId,
    window_s: float = 60.0,
    preprocess: PreprocessConfig | None = PreprocessConfig(),
) -> TrainingSet:
    """Assemble (features of lead j, lag delta_i - delta_j) rows from a
    synchronous historical record.

    Uses the first ``window_s`` seconds.  Beats pair across leads by R-peak
    proximity; beats with missing landmarks or gated lags are dropped.
    Pass ``preprocess=None`` when the record is already preprocessed.
    """
    for lead in (lead_i, lead_j):
        if lead not in historic.leads:
            raise LeadMissing(f"historic record lacks lead {lead}")

    window_s = min(window_s, historic.duration)
    rec = slice_record(historic, 0.0, window_s, leads=None)
    if preprocess is not None:
        rec = preprocess_record(rec, preprocess)
    fs = rec.fs

    xj = rec.lead(lead_j)
    r_j = detect_r_peaks(xj, fs)
    if lead_i == lead_j:
        r_i = r_j
    else:
        r_i = detect_r_peaks(rec.lead(lead_i), fs)

    fids = delineate_beats(xj, fs, r_j)
    segments, _ = segment_beats(xj, fs, r_j, lead_j)
    seg_by_index = {s.index: s for s in segments}

    pairs = pair_rpeaks(r_i, r_j, fs)
    pair_of_j = dict((jb, ka) for ka, jb in pairs)

    samples = []
    n_outliers = 0
    for k in range(len(r_j) - 1):
        seg = seg_by_index.get(k)
        if seg is None or k not in pair_of_j or (k + 1) not in pair_of_j:
            continue
        ia, ia_next = pair_of_j[k], pair_of_j[k + 1]
        if ia_next != ia + 1:
            continue  # a beat went missing on lead i in between
        delta_i = (r_i[ia + 1] - r_i[ia]) / fs * 1000.0
        delta_j = (r_j[k + 1] - r_j[k]) / fs * 1000.0
        lag = delta_i - delta_j
        if abs(lag) > LAG_GATE_MS:
            n_outliers += 1
            continue
        try:
            feats = extract_features(seg, fids[k], fs)
        except MissingLandmark:
            continue
        samples.append(LagSample(
            features=feats, lag_ms=lag, beat_index=k, lead_pair=(lead_i, lead_j),
        ))

    if len(samples) < MIN_TRAINING_BEATS:
        raise InsufficientBeats(
            f"only {len(samples)} usable beats for pair ({lead_i}, {lead_j}); need "
            f"{MIN_TRAINING_BEATS}"
        )
    return TrainingSet(
        samples=tuple(samples), lead_pair=(lead_i, lead_j),
        source=historic.header.name, n_outliers=n_outliers,
    )


def training_set_from_arrays(X, y, lead_pair=(LeadId.III, LeadId.I), source="arrays") -> TrainingSet:
    """Wrap raw (N, 10) features and (N,) lags as a TrainingSet (test helper)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    samples = []
    for k in range(X.shape[0]):
        feats = BeatFeatures(**dict(zip(FEATURE_NAMES, X[k])))
        samples.append(LagSample(features=feats, lag_ms=float(y[k]),
                                 beat_index=k, lead_pair=lead_pair))
    return TrainingSet(samples=tuple(samples), lead_pair=lead_pair, source=source)
