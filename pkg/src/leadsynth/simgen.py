"""Synthetic multi-lead ECG with exact ground truth.

Beats are sums of five Gaussian waves (P, Q, R, S, T) per lead.  Inter-lead
timing differences are realized as per-beat time shifts of the whole beat
template; the ground-truth lag responses are then measured from the
resulting R-time sequences, the same way the training-set builder defines
them, so the generator stays an independent oracle for the pipeline.

Shift specifications:

* ``constant`` holds a fixed event shift, which leaves RR-length
  differences at zero (useful for testing what the lag response can and
  cannot see);
* ``constant_lag`` fixes the per-beat RR-length difference itself, so the
  event shift grows linearly with the beat index;
* ``linear_rr`` makes the per-beat RR-length difference a linear function
  of the beat's RR and integrates it into the event shift;
* ``sin_index`` does the same for a sinusoid in the beat index.

The per-beat lag itself is bounded to +-100 ms; cumulative shifts follow
from integration, so constructions choosing zero-mean lag sequences keep
events physiologically close while e.g. ``constant_lag`` deliberately
walks away (which is what exercises the training-set pairing gates).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidConfig, ScheduleOutOfRange
from .leads import STANDARD_12, LeadId
from .recordio import MultiLeadRecord, make_record, slice_record

MAX_SHIFT_MS = 100.0
RR_GATE_MS = (200.0, 3000.0)


@dataclass(frozen=True)
class Wave:
    amp_mv: float
    center_ms: float   # offset from the beat's R peak
    width_ms: float    # Gaussian sigma

    def __post_init__(self):
        if self.width_ms <= 0:
            raise InvalidConfig(f"wave width must be positive, got {self.width_ms}")


@dataclass(frozen=True)
class LeadWaves:
    """Beat template of one lead; any wave may be None (absent)."""

    p: Wave | None
    q: Wave | None
    r: Wave
    s: Wave | None
    t: Wave | None
    t2: Wave | None = None   # second T component for biphasic shapes

    def items(self):
        for name in ("p", "q", "r", "s", "t", "t2"):
            wave = getattr(self, name)
            if wave is not None and wave.amp_mv != 0.0:
                yield name, wave


@dataclass(frozen=True)
class RrSchedule:
    mean_ms: float = 800.0
    variability_ms: float = 50.0    # sinusoidal swing (respiratory-like)
    period_beats: float = 17.0
    jitter_ms: float = 3.0

    def __post_init__(self):
        lo, hi = RR_GATE_MS
        if not (lo <= self.mean_ms - self.variability_ms
                and self.mean_ms + self.variability_ms <= hi):
            raise InvalidConfig("RR schedule leaves the physiological gate")


@dataclass(frozen=True)
class LagSpec:
    """Per-lead timing specification relative to the reference beat grid.

    ``constant`` holds a fixed event shift (RR-length differences stay 0);
    the other modes define the per-beat RR-length difference itself, which
    integrates into the event shift: ``constant_lag`` a fixed difference,
    ``linear_rr`` a linear function of the beat's RR, ``sin_index`` a
    sinusoid in the beat index.
    """

    mode: str = "none"            # none | constant | constant_lag | linear_rr | sin_index
    shift_ms: float = 0.0         # base event shift, applies in every mode
    lag_ms: float = 0.0           # constant_lag: RR-length difference per beat
    slope: float = 0.0            # linear_rr: lag = slope * (RR - rr_ref)
    rr_ref_ms: float = 800.0
    amp_ms: float = 0.0           # sin_index: lag = amp * sin(2 pi k / period)
    period_beats: float = 16.0

    def __post_init__(self):
        if self.mode not in ("none", "constant", "constant_lag", "linear_rr", "sin_index"):
            raise InvalidConfig(f"unknown lag mode {self.mode!r}")
        if abs(self.shift_ms) > MAX_SHIFT_MS:
            raise InvalidConfig("base shift exceeds the +-100 ms bound")
        if max(abs(self.lag_ms), abs(self.amp_ms)) > MAX_SHIFT_MS:
            raise InvalidConfig("lag function exceeds the +-100 ms bound")


# baseline wave geometry shared by all leads; amplitudes scale per lead
_BASE = {
    "p": Wave(0.12, -180.0, 22.0),
    "q": Wave(-0.10, -38.0, 10.0),
    "r": Wave(1.00, 0.0, 14.0),
    "s": Wave(-0.25, 34.0, 11.0),
    "t": Wave(0.35, 300.0, 50.0),
}

# per-lead multipliers applied to the base amplitudes (rough physiology:
# aVR mostly negative, V1 deep S with inverted T, tall R around V4)
_LEAD_AMP = {
    LeadId.I:   (0.7, 0.8, 0.70, 0.6, 0.7),
    LeadId.II:  (1.2, 1.0, 1.10, 0.8, 1.0),
    LeadId.III: (0.6, 0.6, 0.50, 0.6, 0.4),
    LeadId.AVR: (-0.8, -0.5, -0.85, -0.6, -0.85),
    LeadId.AVL: (0.3, 0.5, 0.35, 0.5, 0.3),
    LeadId.AVF: (0.9, 0.8, 0.80, 0.7, 0.7),
    LeadId.V1:  (0.4, 0.3, 0.30, 3.2, -0.30),
    LeadId.V2:  (0.5, 0.4, 0.55, 3.8, 1.30),
    LeadId.V3:  (0.6, 0.6, 0.80, 2.8, 1.40),
    LeadId.V4:  (0.7, 1.0, 1.30, 1.8, 1.30),
    LeadId.V5:  (0.7, 1.2, 1.20, 1.2, 1.10),
    LeadId.V6:  (0.7, 1.0, 0.95, 0.8, 0.85),
}


def default_waves(lead: LeadId) -> LeadWaves:
    mp, mq, mr, ms_, mt = _LEAD_AMP.get(lead, (1.0, 1.0, 1.0, 1.0, 1.0))
    return LeadWaves(
        p=replace(_BASE["p"], amp_mv=_BASE["p"].amp_mv * mp),
        q=replace(_BASE["q"], amp_mv=_BASE["q"].amp_mv * mq),
        r=replace(_BASE["r"], amp_mv=_BASE["r"].amp_mv * mr),
        s=replace(_BASE["s"], amp_mv=_BASE["s"].amp_mv * ms_),
        t=replace(_BASE["t"], amp_mv=_BASE["t"].amp_mv * mt),
    )


@dataclass(frozen=True)
class SynthConfig:
    fs: float = 250.0
    duration_s: float = 60.0
    leads: tuple[LeadId, ...] = STANDARD_12
    waves: dict = None                 # LeadId -> LeadWaves, defaults per lead
    rr: RrSchedule = RrSchedule()
    lags: dict = None                  # LeadId -> LagSpec
    amp_mod_frac: float = 0.0          # sinusoidal beat-amplitude modulation
    amp_mod_period: float = 13.0
    twa_frac: float = 0.0              # T-wave alternans: +-frac on even/odd beats
    snr_db: float | None = None        # additive white noise per lead
    drift_mv: float = 0.0              # baseline-wander sinusoid
    drift_hz: float = 0.25

    def __post_init__(self):
        if self.fs <= 0 or self.duration_s <= 0:
            raise InvalidConfig("fs and duration must be positive")
        if len(self.leads) != len(set(self.leads)):
            raise InvalidConfig("duplicate leads")
        waves = dict(self.waves) if self.waves else {}
        for lead in self.leads:
            waves.setdefault(lead, default_waves(lead))
        object.__setattr__(self, "waves", waves)
        lags = dict(self.lags) if self.lags else {}
        for lead in self.leads:
            lags.setdefault(lead, LagSpec())
        object.__setattr__(self, "lags", lags)


@dataclass
class GroundTruth:
    """Exact construction record: R times, landmarks, shifts, lags, scales."""

    fs: float
    rr_ms: np.ndarray                    # scheduled reference RR per beat, (K-1,)
    ref_r_times_s: np.ndarray            # reference R-time grid, (K,)
    r_times_s: dict                      # LeadId -> (K,) realized R times
    shifts_ms: dict                      # LeadId -> (K,) applied event shifts
    amp_scale: np.ndarray                # (K,) common beat amplitude scale
    t_scale: np.ndarray                  # (K,) T-wave multiplier (TWA)
    landmarks: dict                      # LeadId -> {name: (K,) times in s, NaN absent}

    @property
    def n_beats(self) -> int:
        return len(self.ref_r_times_s)

    def rr_s(self, lead: LeadId) -> np.ndarray:
        """Realized RR lengths of one lead, seconds, (K-1,)."""
        return np.diff(self.r_times_s[lead])

    def true_lag_ms(self, lead_i: LeadId, lead_j: LeadId) -> np.ndarray:
        """Per-beat RR-length difference delta_i - delta_j in ms, (K-1,)."""
        return (self.rr_s(lead_i) - self.rr_s(lead_j)) * 1000.0

    def to_json(self) -> str:
        def arr(a):
            return [None if (isinstance(x, float) and math.isnan(x)) else x
                    for x in np.asarray(a, dtype=float).tolist()]
        doc = {
            "fs": self.fs,
            "rr_ms": arr(self.rr_ms),
            "ref_r_times_s": arr(self.ref_r_times_s),
            "r_times_s": {str(k): arr(v) for k, v in self.r_times_s.items()},
            "shifts_ms": {str(k): arr(v) for k, v in self.shifts_ms.items()},
            "amp_scale": arr(self.amp_scale),
            "t_scale": arr(self.t_scale),
            "landmarks": {
                str(k): {n: arr(v) for n, v in lm.items()}
                for k, lm in self.landmarks.items()
            },
        }
        return json.dumps(doc, sort_keys=True, indent=1)


def _beat_shifts(spec: LagSpec, rr_ms: np.ndarray) -> np.ndarray:
    """Per-beat event shift in ms for K = len(rr_ms) + 1 beats.

    The lag (per-beat RR-length difference) integrates into the shift, so
    the realized RR differences follow the requested formula exactly while
    events stay within the +-100 ms shift bound.
    """
    k = len(rr_ms) + 1
    if spec.mode == "none":
        return np.zeros(k)
    if spec.mode == "constant":
        return np.full(k, spec.shift_ms)
    if spec.mode == "constant_lag":
        inc = np.full(k - 1, spec.lag_ms)
    elif spec.mode == "linear_rr":
        inc = spec.slope * (rr_ms - spec.rr_ref_ms)
    else:  # sin_index
        idx = np.arange(1, k)
        inc = spec.amp_ms * np.sin(2 * np.pi * idx / spec.period_beats)
    if inc.size and np.max(np.abs(inc)) > MAX_SHIFT_MS:
        raise InvalidConfig("per-beat lag exceeds the +-100 ms bound")
    return spec.shift_ms + np.concatenate([[0.0], np.cumsum(inc)])


def generate_synthetic_record(config: SynthConfig, seed: int) -> tuple[MultiLeadRecord, GroundTruth]:
    """Build a record plus its exact construction ground truth."""
    rng = np.random.default_rng(seed)
    fs, dur = config.fs, config.duration_s

    # reference R-time grid: leave room for the P side of the first beat and
    # the T side of the last one
    lead_in = 0.45
    lead_out = 0.60
    rr_list = []
    t = lead_in
    kidx = 1
    while True:
        rr = (config.rr.mean_ms
              + config.rr.variability_ms * np.sin(2 * np.pi * kidx / config.rr.period_beats)
              + config.rr.jitter_ms * rng.standard_normal())
        rr = float(np.clip(rr, *RR_GATE_MS))
        if t + rr / 1000.0 > dur - lead_out:
            break
        rr_list.append(rr)
        t += rr / 1000.0
        kidx += 1
    rr_ms = np.array(rr_list)
    if len(rr_ms) < 2:
        raise InvalidConfig("duration too short for two beats")
    ref_r = lead_in + np.concatenate([[0.0], np.cumsum(rr_ms) / 1000.0])
    n_beats = len(ref_r)

    beat_idx = np.arange(n_beats)
    if config.amp_mod_frac:
        amp_scale = 1.0 + config.amp_mod_frac * np.sin(2 * np.pi * beat_idx / config.amp_mod_period)
    else:
        amp_scale = np.ones(n_beats)
    if config.twa_frac:
        t_scale = 1.0 + config.twa_frac * np.where(beat_idx % 2 == 0, 1.0, -1.0)
    else:
        t_scale = np.ones(n_beats)

    n = int(round(dur * fs))
    tgrid = np.arange(n) / fs
    data = np.zeros((len(config.leads), n))
    r_times, shifts, landmarks = {}, {}, {}

    for li, lead in enumerate(config.leads):
        shift = _beat_shifts(config.lags[lead], rr_ms)
        r_lead = ref_r + shift / 1000.0
        waves = config.waves[lead]
        sig = data[li]
        marks = {name: np.full(n_beats, np.nan) for name in
                 ("p", "q", "r", "s", "t", "pon", "poff", "ton", "toff")}
        for k in range(n_beats):
            scale = amp_scale[k]
            for name, wave in waves.items():
                amp = wave.amp_mv * scale
                if name in ("t", "t2"):
                    amp *= t_scale[k]
                center = r_lead[k] + wave.center_ms / 1000.0
                sigma = wave.width_ms / 1000.0
                lo = max(0, int((center - 5 * sigma) * fs))
                hi = min(n, int((center + 5 * sigma) * fs) + 1)
                if lo >= hi:
                    continue
                seg = tgrid[lo:hi]
                sig[lo:hi] += amp * np.exp(-0.5 * ((seg - center) / sigma) ** 2)
                if name != "t2":
                    marks[name][k] = center
                if name == "p":
                    marks["pon"][k] = center - 2.5 * sigma
                    marks["poff"][k] = center + 2.5 * sigma
                if name == "t":
                    marks["ton"][k] = center - 2.5 * sigma
                    marks["toff"][k] = center + 2.5 * sigma
        r_times[lead] = r_lead
        shifts[lead] = shift
        landmarks[lead] = marks

    # noise and drift are additive on top of the clean construction
    for li, lead in enumerate(config.leads):
        if config.snr_db is not None:
            rms = float(np.sqrt(np.mean(data[li] ** 2)))
            sigma = rms * 10.0 ** (-config.snr_db / 20.0)
            data[li] = data[li] + sigma * rng.standard_normal(n)
        if config.drift_mv:
            phase = rng.uniform(0, 2 * np.pi)
            data[li] = data[li] + config.drift_mv * np.sin(2 * np.pi * config.drift_hz * tgrid + phase)

    record = make_record(f"simgen-{seed}", fs, config.leads, data, gain=1000.0, adc_res=0)
    gt = GroundTruth(
        fs=fs, rr_ms=rr_ms, ref_r_times_s=ref_r, r_times_s=r_times,
        shifts_ms=shifts, amp_scale=amp_scale, t_scale=t_scale, landmarks=landmarks,
    )
    return record, gt


# ---------------------------------------------------------------------------
# handheld sequential-recording sessions

@dataclass(frozen=True)
class HandheldSession:
    """Ordered single-lead recording schedule: at most one lead at a time."""

    segments: tuple          # ((LeadId, t_start_s, t_end_s), ...)
    switch_gap_s: float = 0.0

    def __post_init__(self):
        if not self.segments:
            raise ScheduleOutOfRange("empty schedule")
        prev_end = None
        for lead, t0, t1 in self.segments:
            if t1 <= t0:
                raise ScheduleOutOfRange(f"segment for {lead} has non-positive length")
            if prev_end is not None and t0 < prev_end:
                raise ScheduleOutOfRange("segments overlap or are out of order")
            prev_end = t1


def simulate_handheld_session(record: MultiLeadRecord, session: HandheldSession) -> list[MultiLeadRecord]:
    """Slice one lead per schedule segment, exactly as a handheld device
    switching electrode positions would see the record."""
    out = []
    for lead, t0, t1 in session.segments:
        if t1 > record.duration + 1e-9:
            raise ScheduleOutOfRange(
                f"segment [{t0}, {t1}] exceeds record duration {record.duration:.3f} s"
            )
        out.append(slice_record(record, t0, t1, leads=[lead]))
    return out


def session_kappas(session: HandheldSession, r_times_s: dict) -> list[int]:
    """Beat count recorded in each segment, given per-lead R times."""
    counts = []
    for lead, t0, t1 in session.segments:
        times = np.asarray(r_times_s[lead])
        counts.append(int(np.sum((times >= t0) & (times < t1))))
    return counts


def twa_config(base: SynthConfig | None = None, frac: float = 0.2) -> SynthConfig:
    """A T-wave-alternans variant: T amplitude alternates +-frac per beat."""
    base = base or SynthConfig()
    return replace(base, twa_frac=frac)
