"""Missing-lead synthesis: historic morphology on the current lead's clock.

For every beat of the currently recorded lead the most similar historic
beat of the same lead is found by DTW; the synchronous historic beat of the
missing lead provides the morphology.  That beat is energy-matched through
the ratio of current to matched-historic beat RMS, resampled to the
corrected RR length (current RR plus the forest-predicted inter-lead lag)
and the per-beat results are concatenated, sharing boundary R samples.

Two timing details matter.  The first synthesized R is anchored at the
current lead's first R plus the inter-lead R-time offset observed at the
end of the historic window (event offsets between leads evolve slowly, so
the last observed offset is the best initial synchronization the history
can provide).  From there the per-beat lag corrections accumulate, tracked
by a cumulative drift clamp that keeps the synthesized clock within a
bounded offset of the current lead's R-peak clock.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .delineate import (
    BeatFiducials,
    BeatSegment,
    delineate_beats,
    detect_r_peaks,
    segment_beats,
)
from .dtw import DtwConfig, nearest_beat
from .errors import (
    DegenerateTarget,
    EmptyLibrary,
    InsufficientBeats,
    LeadMissing,
    MissingLandmark,
    ModelMissing,
    NoBeatsFound,
)
from .features import (
    LAG_GATE_MS,
    BeatFeatures,
    LagSample,
    TrainingSet,
    extract_features,
    pair_rpeaks,
)
from .forest import ForestConfig, LagModel, predict, train_forest
from .leads import STANDARD_12, LeadId
from .preprocess import PreprocessConfig, preprocess_record
from .recordio import MultiLeadRecord, slice_record


@dataclass(frozen=True)
class SynthesisConfig:
    preprocess: PreprocessConfig | None = PreprocessConfig()
    dtw: DtwConfig = DtwConfig()
    forest: ForestConfig = ForestConfig()
    drift_clamp_ms: float = 100.0
    lag_correction: bool = True


@dataclass
class HistoricLibrary:
    """Beat-aligned view of a historical synchronous recording.

    Beat ``l`` of every lead is synchronous (paired by R-peak proximity);
    each lead also keeps its full preprocessed signal and per-beat R-sample
    bounds so pre/post-R flanks can be copied during synthesis.
    """

    fs: float
    leads: tuple
    beats: dict            # LeadId -> list[BeatSegment], index-aligned
    fiducials: dict        # LeadId -> list[BeatFiducials | None]
    features: dict         # LeadId -> list[BeatFeatures | None]
    bounds: dict           # LeadId -> (n_beats, 2) int array of R-sample bounds
    signals: dict          # LeadId -> preprocessed historic signal
    source: str
    kappa_log: tuple = ()  # ((lead, beats elapsed at switch), ...) for sessions

    @property
    def n_beats(self) -> int:
        return len(next(iter(self.beats.values())))

    def log_switch(self, lead: LeadId, kappa: int) -> None:
        self.kappa_log = self.kappa_log + ((lead, kappa),)


def build_library(
    record: MultiLeadRecord,
    window_s: float = 60.0,
    leads=None,
    preprocess: PreprocessConfig | None = PreprocessConfig(),
) -> HistoricLibrary:
    """Segment the first ``window_s`` seconds of a synchronous record into
    an aligned beat library."""
    if leads is None:
        leads = tuple(l for l in record.leads if l in STANDARD_12)
    else:
        leads = tuple(leads)
    for lead in leads:
        if lead not in record.leads:
            raise LeadMissing(f"record lacks lead {lead}")
    if not leads:
        raise LeadMissing("no standard leads in record")

    rec = slice_record(record, 0.0, min(window_s, record.duration))
    if preprocess is not None:
        rec = preprocess_record(rec, preprocess)
    fs = rec.fs

    rpeaks = {lead: detect_r_peaks(rec.lead(lead), fs) for lead in leads}
    ref = LeadId.II if LeadId.II in leads else leads[0]
    r_ref = rpeaks[ref]

    # map reference beat index -> per-lead own R index
    maps = {}
    for lead in leads:
        maps[lead] = dict((jb, ka) for ka, jb in pair_rpeaks(rpeaks[lead], r_ref, fs))

    kept = []
    for l in range(len(r_ref) - 1):
        ok = True
        for lead in leads:
            m = maps[lead]
            if l not in m or (l + 1) not in m or m[l + 1] != m[l] + 1:
                ok = False
                break
            r = rpeaks[lead]
            delta = (r[m[l] + 1] - r[m[l]]) / fs
            if not (0.2 <= delta <= 3.0):
                ok = False
                break
        if ok:
            kept.append(l)
    if len(kept) < 2:
        raise InsufficientBeats(f"only {len(kept)} aligned beats in the training window")

    all_fids = {lead: delineate_beats(rec.lead(lead), fs, rpeaks[lead]) for lead in leads}

    beats, fids, feats, bounds, signals = {}, {}, {}, {}, {}
    for lead in leads:
        sig = rec.lead(lead)
        r = rpeaks[lead]
        m = maps[lead]
        lead_beats, lead_fids, lead_feats = [], [], []
        lead_bounds = np.empty((len(kept), 2), dtype=int)
        for pos, l in enumerate(kept):
            i0, i1 = r[m[l]], r[m[l] + 1]
            seg = BeatSegment(lead=lead, index=pos, samples=sig[i0:i1 + 1].copy(),
                              start_time=i0 / fs, fs=fs)
            fid = all_fids[lead][m[l]]
            try:
                fv = extract_features(seg, fid, fs)
            except MissingLandmark:
                fv = None
            lead_beats.append(seg)
            lead_fids.append(fid)
            lead_feats.append(fv)
            lead_bounds[pos] = (i0, i1)
        beats[lead] = lead_beats
        fids[lead] = lead_fids
        feats[lead] = lead_feats
        bounds[lead] = lead_bounds
        signals[lead] = sig

    return HistoricLibrary(
        fs=fs, leads=leads, beats=beats, fiducials=fids, features=feats,
        bounds=bounds, signals=signals, source=record.header.name,
    )


def training_set_from_library(lib: HistoricLibrary, lead_i: LeadId, lead_j: LeadId) -> TrainingSet:
    """TrainingSet over the library's aligned beats (same definition as
    features.build_training_set, shared beat alignment)."""
    for lead in (lead_i, lead_j):
        if lead not in lib.leads:
            raise LeadMissing(f"library lacks lead {lead}")
    samples, n_outliers = [], 0
    for pos in range(lib.n_beats):
        fv = lib.features[lead_j][pos]
        if fv is None:
            continue
        lag = lib.beats[lead_i][pos].delta_ms - lib.beats[lead_j][pos].delta_ms
        if abs(lag) > LAG_GATE_MS:
            n_outliers += 1
            continue
        samples.append(LagSample(features=fv, lag_ms=lag, beat_index=pos,
                                 lead_pair=(lead_i, lead_j)))
    if len(samples) < 10:
        raise InsufficientBeats(
            f"only {len(samples)} usable aligned beats for ({lead_i}, {lead_j})"
        )
    return TrainingSet(samples=tuple(samples), lead_pair=(lead_i, lead_j),
                       source=lib.source, n_outliers=n_outliers)


def train_lag_models(
    lib: HistoricLibrary,
    current_lead: LeadId,
    targets=None,
    forest: ForestConfig = ForestConfig(),
) -> dict:
    """Train one lag model per (missing, current) pair.

    Per-pair seeds derive from the base seed by fixed offsets so results do
    not depend on training order.
    """
    if targets is None:
        targets = tuple(l for l in lib.leads if l != current_lead)
    j_idx = lib.leads.index(current_lead)
    models = {}
    for lead_i in targets:
        i_idx = lib.leads.index(lead_i)
        cfg = replace(forest, seed=forest.seed + 37 * i_idx + j_idx)
        data = training_set_from_library(lib, lead_i, current_lead)
        models[(lead_i, current_lead)] = train_forest(data, cfg)
    return models


# ---------------------------------------------------------------------------
# beat-level synthesis

@njit(cache=True)
def _pchip_kernel(y, m):
    """Monotone cubic (Fritsch-Carlson) resample of a uniform grid to m points."""
    n = y.shape[0]
    d = np.empty(n)
    if n == 2:
        s0 = y[1] - y[0]
        d[0] = s0
        d[1] = s0
    else:
        s = np.empty(n - 1)
        for k in range(n - 1):
            s[k] = y[k + 1] - y[k]
        for k in range(1, n - 1):
            if s[k - 1] * s[k] > 0:
                d[k] = 2.0 * s[k - 1] * s[k] / (s[k - 1] + s[k])
            else:
                d[k] = 0.0
        d0 = (3.0 * s[0] - s[1]) / 2.0
        if d0 * s[0] <= 0:
            d0 = 0.0
        elif s[0] * s[1] < 0 and abs(d0) > 3.0 * abs(s[0]):
            d0 = 3.0 * s[0]
        d[0] = d0
        dn = (3.0 * s[n - 2] - s[n - 3]) / 2.0
        if dn * s[n - 2] <= 0:
            dn = 0.0
        elif s[n - 2] * s[n - 3] < 0 and abs(dn) > 3.0 * abs(s[n - 2]):
            dn = 3.0 * s[n - 2]
        d[n - 1] = dn

    out = np.empty(m)
    scale = (n - 1) / (m - 1)
    for i in range(m):
        x = i * scale
        k = int(x)
        if k > n - 2:
            k = n - 2
        t = x - k
        t2 = t * t
        t3 = t2 * t
        out[i] = ((2 * t3 - 3 * t2 + 1) * y[k] + (t3 - 2 * t2 + t) * d[k]
                  + (-2 * t3 + 3 * t2) * y[k + 1] + (t3 - t2) * d[k + 1])
    return out


def _resample_to(samples: np.ndarray, target_len: int) -> np.ndarray:
    """Monotone-cubic time rescale; endpoints map to endpoints exactly."""
    samples = np.ascontiguousarray(samples, dtype=np.float64)
    n = samples.size
    if target_len == n:
        return samples.copy()
    return _pchip_kernel(samples, target_len)


def affine_transform_beat(source: BeatSegment, target_len: int, scale: float) -> np.ndarray:
    """Time-rescale a historic beat to ``target_len`` samples and scale its
    voltage; the R-peak endpoints stay endpoints."""
    if target_len < 2:
        raise DegenerateTarget(f"target length {target_len} < 2")
    if not np.isfinite(scale) or scale <= 0:
        raise DegenerateTarget(f"bad energy scale {scale}")
    return _resample_to(source.samples, target_len) * scale


def match_historic_beat(current_beat: BeatSegment, lib: HistoricLibrary,
                        config: DtwConfig = DtwConfig()) -> int:
    """Index of the historic same-lead beat most similar to the current one."""
    lead_j = current_beat.lead
    if lead_j not in lib.leads or not lib.beats[lead_j]:
        raise EmptyLibrary(f"library has no beats for lead {lead_j}")
    idx, _ = nearest_beat(current_beat, lib.beats[lead_j], config)
    return idx


def _match_by_rr(current_beat: BeatSegment, library_beats) -> int:
    deltas = np.array([abs(b.delta_s - current_beat.delta_s) for b in library_beats])
    return int(np.argmin(deltas))


@dataclass(frozen=True)
class BeatProvenance:
    beat_index: int
    source_index: int
    delta_j_ms: float
    dhat_ms: float
    delta_tilde_ms: float
    scale: float
    fallback: bool = False          # features unavailable: lag forced to 0
    clamp_adjust_ms: float = 0.0    # drift-clamp correction applied to this beat

    def as_dict(self) -> dict:
        return {
            "beat": self.beat_index, "source": self.source_index,
            "delta_j_ms": self.delta_j_ms, "dhat_ms": self.dhat_ms,
            "delta_tilde_ms": self.delta_tilde_ms, "scale": self.scale,
            "fallback": self.fallback, "clamp_adjust_ms": self.clamp_adjust_ms,
        }


@dataclass
class SynthesizedLead:
    lead: LeadId
    samples: np.ndarray
    fs: float
    start_time: float
    beats: list                     # BeatProvenance per synthesized beat
    anchor_ms: float = 0.0          # historic inter-lead R offset used as anchor


def _rms(x) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


def synthesize_beat(
    current_beat: BeatSegment,
    missing_lead: LeadId,
    lib: HistoricLibrary,
    model: LagModel | None,
    config: SynthesisConfig = SynthesisConfig(),
    features: BeatFeatures | None = None,
    match: int | None = None,
):
    """Synthesize one beat of the missing lead; returns (samples, provenance).

    ``features``/``match`` may be precomputed by the lead-level loop; when
    features are unavailable the beat degrades to zero lag and an RR-length
    match instead of failing.
    """
    lead_j = current_beat.lead
    if missing_lead not in lib.leads:
        raise LeadMissing(f"library lacks lead {missing_lead}")
    if not lib.beats[lead_j]:
        raise EmptyLibrary(f"library has no beats for lead {lead_j}")

    fallback = False
    if features is None:
        fallback = True
        dhat = 0.0
        if match is None:
            match = _match_by_rr(current_beat, lib.beats[lead_j])
    else:
        if config.lag_correction:
            if model is None:
                raise ModelMissing(f"no lag model for ({missing_lead}, {lead_j})")
            dhat = predict(model, features)
        else:
            dhat = 0.0
        if match is None:
            match = match_historic_beat(current_beat, lib, config.dtw)

    hist_j = lib.beats[lead_j][match]
    hist_i = lib.beats[missing_lead][match]
    denom = _rms(hist_j.samples)
    scale = _rms(current_beat.samples) / denom if denom > 0 else 1.0
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0

    delta_j_ms = current_beat.delta_ms
    delta_tilde_ms = delta_j_ms + dhat
    fs = current_beat.fs
    target_len = max(2, int(round(delta_tilde_ms / 1000.0 * fs)) + 1)
    samples = affine_transform_beat(hist_i, target_len, scale)
    prov = BeatProvenance(
        beat_index=current_beat.index, source_index=match,
        delta_j_ms=delta_j_ms, dhat_ms=dhat,
        delta_tilde_ms=(target_len - 1) / fs * 1000.0,
        scale=scale, fallback=fallback,
    )
    return samples, prov


# ---------------------------------------------------------------------------
# lead-level synthesis

@dataclass
class _CurrentContext:
    raw: np.ndarray
    signal: np.ndarray
    fs: float
    lead: LeadId
    rpeaks: np.ndarray
    segments: list
    features: list      # per segment, None when landmarks were missing
    matches: list       # per segment, historic beat index
    scales: list        # per segment, energy ratio


def _prepare_current(signal, fs: float, lead_j: LeadId, lib: HistoricLibrary,
                     config: SynthesisConfig) -> _CurrentContext:
    raw = np.asarray(signal, dtype=np.float64)
    if lead_j not in lib.leads:
        raise LeadMissing(f"library lacks current lead {lead_j}")
    x = raw
    if config.preprocess is not None:
        from .preprocess import preprocess_signal
        x = preprocess_signal(raw, fs, config.preprocess)
    r = detect_r_peaks(x, fs)
    segments, _ = segment_beats(x, fs, r, lead_j)
    if not segments:
        raise NoBeatsFound("no plausible beats in the current signal")
    fids = delineate_beats(x, fs, r)
    feats, matches, scales = [], [], []
    for seg in segments:
        try:
            fv = extract_features(seg, fids[seg.index], fs)
        except MissingLandmark:
            fv = None
        feats.append(fv)
        if fv is None:
            matches.append(_match_by_rr(seg, lib.beats[lead_j]))
        else:
            matches.append(match_historic_beat(seg, lib, config.dtw))
        denom = _rms(lib.beats[lead_j][matches[-1]].samples)
        s = _rms(seg.samples) / denom if denom > 0 else 1.0
        scales.append(s if np.isfinite(s) and s > 0 else 1.0)
    return _CurrentContext(raw=raw, signal=x, fs=fs, lead=lead_j, rpeaks=r,
                           segments=segments, features=feats, matches=matches,
                           scales=scales)


def anchor_offset_s(lib: HistoricLibrary, lead_i: LeadId, lead_j: LeadId,
                    last_beats: int = 5) -> float:
    """Inter-lead R-time offset (lead i relative to lead j) at the end of the
    historic window; median over the last few aligned beats."""
    if lead_i == lead_j:
        return 0.0
    off = (lib.bounds[lead_i][:, 0] - lib.bounds[lead_j][:, 0]) / lib.fs
    m = min(last_beats, off.size)
    return float(np.median(off[-m:]))


def _flank(lib: HistoricLibrary, lead_i: LeadId, source_idx: int, n_out: int,
           fs_out: float, scale: float, side: str) -> np.ndarray:
    """Historic flank before/after the matched beat, time-scaled to n_out samples."""
    if n_out <= 0:
        return np.zeros(0)
    sig = lib.signals[lead_i]
    i0, i1 = lib.bounds[lead_i][source_idx]
    n_hist = max(2, int(round(n_out / fs_out * lib.fs)))
    if side == "pre":
        lo = max(0, i0 - n_hist)
        chunk = sig[lo:i0]
    else:
        hi = min(sig.size, i1 + 1 + n_hist)
        chunk = sig[i1 + 1:hi]
    if chunk.size < 2:
        return np.zeros(n_out)
    return _resample_to(chunk, n_out) * scale


def synthesize_lead(
    current_signal,
    current_fs: float,
    current_lead: LeadId,
    missing_lead: LeadId,
    lib: HistoricLibrary,
    models: dict,
    config: SynthesisConfig = SynthesisConfig(),
    _ctx: _CurrentContext | None = None,
) -> SynthesizedLead:
    """Synthesize a full missing-lead signal on the current lead's clock."""
    ctx = _ctx or _prepare_current(current_signal, current_fs, current_lead, lib, config)
    model = models.get((missing_lead, current_lead))
    if config.lag_correction and model is None:
        raise ModelMissing(f"no lag model for ({missing_lead}, {current_lead})")

    fs = ctx.fs
    n_in = ctx.raw.size
    anchor_s = anchor_offset_s(lib, missing_lead, current_lead)
    start_index = int(ctx.rpeaks[0]) + int(round(anchor_s * fs))
    clamp = config.drift_clamp_ms

    # predicted lag per segment; fallback beats (no features) stay at zero
    dhats = np.zeros(len(ctx.segments))
    if config.lag_correction:
        rows = [k for k, fv in enumerate(ctx.features) if fv is not None]
        if rows:
            X = np.vstack([ctx.features[k].as_array() for k in rows])
            dhats[rows] = model.predict_batch(X)

    pieces = []
    provs = []
    t_ideal = 0.0     # synthesized clock since the first output R, unrounded
    t_cur = 0.0       # current lead's clock since its first R
    out_pos = 0       # integer sample offset of the chain end (last emitted R)
    prev_seg = None
    first = True
    for pos, (seg, fv, match) in enumerate(zip(ctx.segments, ctx.features, ctx.matches)):
        fallback = fv is None
        dhat = float(dhats[pos])

        gap_len = 0
        start_pos = out_pos
        if prev_seg is not None and seg.index != prev_seg.index + 1:
            # implausible beats were skipped: advance both clocks across the gap
            gap = seg.start_time - (prev_seg.start_time + prev_seg.delta_s)
            t_ideal += gap
            t_cur += gap
            start_pos = max(out_pos + 1, int(round(t_ideal * fs)))
            gap_len = start_pos - out_pos - 1

        # drift clamp against the current lead's R clock
        desired = (t_ideal - t_cur) * 1000.0 + dhat
        allowed = float(np.clip(desired, -clamp, clamp))
        adjust = desired - allowed

        delta_j_ms = seg.delta_ms
        t_ideal += (delta_j_ms + dhat - adjust) / 1000.0
        t_cur += seg.delta_s
        # quantize chain positions, not increments, so rounding cannot drift
        end_pos = max(start_pos + 1, int(round(t_ideal * fs)))
        target_len = end_pos - start_pos + 1
        realized_ms = (target_len - 1) / fs * 1000.0

        hist_i = lib.beats[missing_lead][match]
        scale = ctx.scales[pos]
        samples = affine_transform_beat(hist_i, target_len, scale)

        if first:
            pieces.append(samples)
            first = False
        elif gap_len or start_pos != out_pos:
            pieces.append(np.zeros(max(0, gap_len)))
            pieces.append(samples)
        else:
            pieces.append(samples[1:])   # share the boundary R sample
        prev_seg = seg
        out_pos = end_pos
        provs.append(BeatProvenance(
            beat_index=seg.index, source_index=match, delta_j_ms=delta_j_ms,
            dhat_ms=dhat, delta_tilde_ms=realized_ms, scale=scale,
            fallback=fallback, clamp_adjust_ms=adjust,
        ))

    body = np.concatenate(pieces)
    if start_index < 0:
        body = body[-start_index:]
        start_index = 0
    post_len = max(0, n_in - start_index - body.size)
    pre = _flank(lib, missing_lead, ctx.matches[0], start_index, fs, ctx.scales[0], "pre")
    post = _flank(lib, missing_lead, ctx.matches[-1], post_len, fs, ctx.scales[-1], "post")
    out = np.concatenate([pre, body, post])
    return SynthesizedLead(lead=missing_lead, samples=out, fs=fs, start_time=0.0,
                           beats=provs, anchor_ms=anchor_s * 1000.0)


def synthesize_all(
    current_signal,
    current_fs: float,
    current_lead: LeadId,
    lib: HistoricLibrary,
    models: dict,
    config: SynthesisConfig = SynthesisConfig(),
) -> dict:
    """All 11 missing leads plus a bit-exact passthrough of the current one."""
    raw = np.asarray(current_signal, dtype=np.float64)
    if config.lag_correction:
        for lead in lib.leads:
            if lead != current_lead and (lead, current_lead) not in models:
                raise ModelMissing(f"no lag model for ({lead}, {current_lead})")
    ctx = _prepare_current(raw, current_fs, current_lead, lib, config)
    out = {}
    for lead in lib.leads:
        if lead == current_lead:
            out[lead] = SynthesizedLead(lead=lead, samples=raw.copy(), fs=current_fs,
                                        start_time=0.0, beats=[])
        else:
            out[lead] = synthesize_lead(raw, current_fs, current_lead, lead, lib,
                                        models, config, _ctx=ctx)
    return out
