"""R-peak detection and per-beat wave delineation.

Detection follows the Pan-Tompkins chain (band-pass, derivative, squaring,
150 ms moving-window integration, adaptive dual thresholds with a 200 ms
refractory period, a 360 ms T-wave discrimination rule and search-back at
1.66x the running RR).  Delineation then locates P/Q/S/T peaks by windowed
extremum search around each R and wave onsets/offsets by a slope-threshold
rule on the smoothed derivative.

Landmarks that cannot be located confidently are recorded as absent rather
than guessed; downstream feature extraction skips those beats.
"""

from __future__ import annotations

from dataclasses import dataclass
from io import StringIO

import numpy as np
from scipy import ndimage
from scipy import signal as sps

from .errors import NoBeatsFound
from .leads import LeadId

PLAUSIBLE_RR_S = (0.2, 3.0)

LANDMARK_NAMES = ("pon", "ppeak", "poff", "qpeak", "rpeak", "speak", "ton", "tpeak", "toff")


@dataclass(frozen=True)
class Landmark:
    index: int        # sample index into the delineated signal
    value_mv: float   # signal value at that sample


@dataclass(frozen=True)
class BeatFiducials:
    """Landmarks of one beat, anchored at its R peak; None means absent."""

    rpeak: Landmark
    pon: Landmark | None = None
    ppeak: Landmark | None = None
    poff: Landmark | None = None
    qpeak: Landmark | None = None
    speak: Landmark | None = None
    ton: Landmark | None = None
    tpeak: Landmark | None = None
    toff: Landmark | None = None
    iso_mv: float = 0.0   # per-beat isoelectric reference level

    def get(self, name: str) -> Landmark | None:
        return getattr(self, name)

    def ordered_indices(self):
        return [(n, lm.index) for n in LANDMARK_NAMES if (lm := self.get(n)) is not None]


@dataclass(frozen=True)
class FiducialSet:
    lead: LeadId
    fs: float
    beats: tuple

    def __post_init__(self):
        last_r = -1
        for beat in self.beats:
            idxs = [i for _, i in beat.ordered_indices()]
            if any(b < a for a, b in zip(idxs, idxs[1:])):
                raise ValueError(f"landmark ordering violated: {beat}")
            if beat.rpeak.index <= last_r:
                raise ValueError("R peaks not strictly increasing across beats")
            last_r = beat.rpeak.index

    def __len__(self):
        return len(self.beats)

    @property
    def rpeaks(self) -> np.ndarray:
        return np.array([b.rpeak.index for b in self.beats], dtype=int)


def fiducials_to_csv(fs: FiducialSet) -> str:
    """One row per beat, one column per landmark (sample index), absent empty."""
    buf = StringIO()
    buf.write("beat," + ",".join(LANDMARK_NAMES) + ",iso_mv\n")
    for k, beat in enumerate(fs.beats):
        cells = []
        for name in LANDMARK_NAMES:
            lm = beat.get(name)
            cells.append("" if lm is None else str(lm.index))
        buf.write(f"{k}," + ",".join(cells) + f",{beat.iso_mv:.6f}\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# R-peak detection

def _detection_waveform(x, fs):
    nyq = fs / 2.0
    hi = min(15.0, 0.9 * nyq)
    sos = sps.butter(2, [5.0 / nyq, hi / nyq], btype="bandpass", output="sos")
    f = sps.sosfiltfilt(sos, x, padlen=min(x.size - 1, int(fs)))
    deriv = np.gradient(f) * fs
    squared = deriv * deriv
    w = max(1, int(round(0.150 * fs)))
    mwi = np.convolve(squared, np.ones(w) / w, mode="same")
    return f, mwi


def detect_r_peaks(signal, fs: float) -> np.ndarray:
    """Detect R peaks; returns strictly increasing sample indices.

    Indices are refined to the dominant local extremum of the input signal,
    so they land on an extremum exactly.  Raises NoBeatsFound when fewer
    than two beats survive.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.size < int(2 * fs):
        raise NoBeatsFound("need at least 2 s of signal")

    f, mwi = _detection_waveform(x, fs)
    refractory = int(round(0.2 * fs))
    cand, _ = sps.find_peaks(mwi, distance=refractory)
    if cand.size == 0:
        raise NoBeatsFound("no candidate peaks in the integrated waveform")

    head = mwi[: int(2 * fs)]
    spki = 0.6 * float(np.max(head))
    npki = 0.5 * float(np.mean(head))
    if spki <= 0:
        raise NoBeatsFound("flat signal")

    slope_win = max(1, int(round(0.075 * fs)))

    def local_slope(i):
        lo, hi2 = max(0, i - slope_win), min(f.size, i + slope_win)
        seg = np.abs(np.gradient(f[lo:hi2]))
        return float(np.max(seg)) if seg.size else 0.0

    accepted: list[int] = []
    slopes: list[float] = []
    rr_hist: list[float] = []
    pending: list[tuple[int, float]] = []   # below-threshold candidates for search-back

    def thr1():
        return npki + 0.25 * (spki - npki)

    for p in cand:
        v = mwi[p]
        is_qrs = v > thr1()
        if is_qrs and accepted and (p - accepted[-1]) < int(0.36 * fs):
            # possible T wave: QRS slope should not halve between beats
            if local_slope(p) < 0.5 * slopes[-1]:
                is_qrs = False
        if is_qrs:
            if accepted:
                rr_hist.append(p - accepted[-1])
                rr_hist[:] = rr_hist[-8:]
            accepted.append(int(p))
            slopes.append(local_slope(p))
            spki = 0.125 * v + 0.875 * spki
            pending.clear()
        else:
            npki = 0.125 * v + 0.875 * npki
            pending.append((int(p), float(v)))
            # search-back with the lower threshold when a beat is overdue
            if accepted and rr_hist:
                overdue = (p - accepted[-1]) > 1.66 * float(np.mean(rr_hist))
                if overdue:
                    thr2 = 0.5 * thr1()
                    best = max(pending, key=lambda t: t[1])
                    if best[1] > thr2 and (best[0] - accepted[-1]) >= refractory:
                        rr_hist.append(best[0] - accepted[-1])
                        rr_hist[:] = rr_hist[-8:]
                        accepted.append(best[0])
                        slopes.append(local_slope(best[0]))
                        spki = 0.25 * best[1] + 0.75 * spki
                        pending.clear()

    if len(accepted) < 2:
        raise NoBeatsFound(f"only {len(accepted)} beats detected")

    # refine each detection to the R wave of the input signal; on RS-dominant
    # morphologies (deep-S leads like V1/V2) the dominant deflection is the S
    # wave, so prefer a strong opposite-polarity peak just before it
    half = int(round(0.10 * fs))
    qrs_half = int(round(0.09 * fs))
    gap = max(1, int(round(0.004 * fs)))
    refined = []
    for p in accepted:
        lo, hi2 = max(0, p - half), min(x.size, p + half + 1)
        seg = x[lo:hi2]
        med = np.median(seg)
        main = lo + int(np.argmax(np.abs(seg - med)))
        sign = 1.0 if x[main] >= med else -1.0

        def opp_peak(a, b):
            a, b = max(0, a), min(x.size, b)
            if b - a < 2:
                return None, 0.0
            dev = (x[a:b] - med) * (-sign)
            k = int(np.argmax(dev))
            return a + k, float(dev[k])

        pre_i, pre_v = opp_peak(main - qrs_half, main - gap)
        post_i, post_v = opp_peak(main + gap, main + qrs_half)
        main_dev = abs(x[main] - med)
        r_idx = main
        if pre_i is not None and pre_v >= max(0.25 * main_dev, 0.04) and pre_v >= post_v:
            r_idx = pre_i
        refined.append(r_idx)

    # de-duplicate anything the refinement pulled inside the refractory gap
    out: list[int] = []
    for idx in refined:
        if out and idx - out[-1] < refractory:
            if np.abs(x[idx]) > np.abs(x[out[-1]]):
                out[-1] = idx
        else:
            out.append(idx)
    if len(out) < 2:
        raise NoBeatsFound("fewer than two beats after refinement")
    return np.array(out, dtype=int)


# ---------------------------------------------------------------------------
# delineation

_MIN_WAVE_MV = 0.015   # significance gate for P/T peaks
_SLOPE_FRAC = 0.15     # onset/offset threshold relative to the flank's max slope


def _extremum(x, lo, hi, iso, signed=None, gate=0.0):
    """Largest deflection from iso in [lo, hi); None when below the gate."""
    lo, hi = max(0, lo), min(x.size, hi)
    if hi - lo < 3:
        return None
    seg = x[lo:hi] - iso
    if signed is not None:
        seg = seg * signed
        i = int(np.argmax(seg))
        if seg[i] <= gate:
            return None
        return lo + i
    i = int(np.argmax(np.abs(seg)))
    idx = lo + i
    if np.abs(seg[i]) <= gate:
        return None
    if idx in (lo, hi - 1):   # edge hit: likely a neighbor's tail
        return None
    return idx


def _slope_bound(d, peak, walk_lo, walk_hi, direction, search_len):
    """Wave onset/offset: walk outward from the wave's own max-slope point
    until |slope| drops below a fraction of it.

    The max-slope search stays within ``search_len`` of the peak so a
    steeper neighbouring wave inside the walk range cannot hijack the
    threshold.
    """
    walk_lo = max(0, walk_lo)
    walk_hi = min(d.size, walk_hi)
    if direction < 0:
        s_lo, s_hi = max(walk_lo, peak - search_len), peak
    else:
        s_lo, s_hi = peak + 1, min(walk_hi, peak + 1 + search_len)
    if s_hi - s_lo < 2:
        return None
    seg = np.abs(d[s_lo:s_hi])
    ms_i = s_lo + int(np.argmax(seg))
    thr = _SLOPE_FRAC * np.abs(d[ms_i])
    if thr <= 0:
        return None
    step = -1 if direction < 0 else 1
    i = ms_i
    while walk_lo <= i < walk_hi:
        if np.abs(d[i]) < thr:
            return i
        i += step
    return None


def delineate_beats(signal, fs: float, rpeaks) -> "FiducialSet | tuple":
    """Locate P/Q/S/T landmarks around each R peak.

    Returns a list of BeatFiducials, one per R peak.  Use
    :func:`delineate_lead` for the FiducialSet wrapper.
    """
    x = np.asarray(signal, dtype=np.float64)
    r = np.asarray(rpeaks, dtype=int)
    if r.size < 2:
        raise NoBeatsFound("delineation needs at least 2 R peaks")

    smooth = ndimage.gaussian_filter1d(x, sigma=max(1.0, 0.004 * fs))
    d = np.gradient(smooth)

    def ms(v):
        return int(round(v * fs / 1000.0))

    beats = []
    for k, rk in enumerate(r):
        rr_prev = (r[k] - r[k - 1]) / fs if k > 0 else (r[k + 1] - r[k]) / fs
        rr_next = (r[k + 1] - r[k]) / fs if k < r.size - 1 else rr_prev
        sp = float(np.clip(rr_prev / 0.8, 0.6, 1.4))
        st = float(np.clip(rr_next / 0.8, 0.6, 1.4))

        # rough isoelectric level from the quiet zone between P and Q
        iso0 = float(np.median(x[max(0, rk - ms(150)):max(1, rk - ms(95))])) if rk > ms(150) else 0.0
        pol = 1.0 if x[rk] >= iso0 else -1.0

        q_idx = _extremum(x, rk - ms(80), rk - ms(4), iso0, signed=-pol, gate=0.008)
        s_idx = _extremum(x, rk + ms(4), rk + ms(80), iso0, signed=-pol, gate=0.008)

        if q_idx is not None and q_idx - ms(60) >= 0:
            iso = float(np.median(x[q_idx - ms(60):q_idx - ms(20)])) if ms(40) >= 2 else iso0
        else:
            lo_b = max(0, rk - ms(300 * sp))
            hi_b = min(x.size, rk + ms(500 * st))
            iso = float(np.median(x[lo_b:hi_b]))

        p_lo, p_hi = rk - ms(300 * sp), rk - ms(80)
        p_idx = _extremum(x, p_lo, p_hi, iso)
        if p_idx is not None and np.abs(x[p_idx] - iso) < _MIN_WAVE_MV:
            p_idx = None

        t_lo = rk + ms(max(80.0, 80 * st))
        if s_idx is not None:
            t_lo = max(t_lo, s_idx + ms(20))
        t_hi = rk + ms(500 * st)
        t_idx = _extremum(x, t_lo, t_hi, iso)
        if t_idx is not None and np.abs(x[t_idx] - iso) < _MIN_WAVE_MV:
            t_idx = None

        pon = poff = ton = toff = None
        if p_idx is not None:
            pon = _slope_bound(d, p_idx, p_idx - ms(140), p_idx, -1, ms(60))
            p_cap = (q_idx - ms(8)) if q_idx is not None else rk - ms(55)
            poff = _slope_bound(d, p_idx, p_idx, p_cap, +1, ms(60))
        if t_idx is not None:
            t_floor = (s_idx + ms(8)) if s_idx is not None else rk + ms(60)
            ton = _slope_bound(d, t_idx, t_floor, t_idx, -1, ms(110))
            toff = _slope_bound(d, t_idx, t_idx, t_idx + ms(260), +1, ms(110))

        def lm(idx):
            return None if idx is None else Landmark(int(idx), float(x[int(idx)]))

        cand = {
            "pon": lm(pon), "ppeak": lm(p_idx), "poff": lm(poff),
            "qpeak": lm(q_idx), "rpeak": Landmark(int(rk), float(x[rk])),
            "speak": lm(s_idx), "ton": lm(ton), "tpeak": lm(t_idx), "toff": lm(toff),
        }
        # enforce the monotone landmark chain: drop anything out of order
        last = -1
        for name in LANDMARK_NAMES:
            lmx = cand[name]
            if lmx is None:
                continue
            if name != "rpeak" and lmx.index <= last:
                cand[name] = None
            else:
                last = lmx.index
        # a P/T peak without both bounds keeps the peak; bounds stay absent
        beats.append(BeatFiducials(
            rpeak=cand["rpeak"], pon=cand["pon"], ppeak=cand["ppeak"], poff=cand["poff"],
            qpeak=cand["qpeak"], speak=cand["speak"], ton=cand["ton"],
            tpeak=cand["tpeak"], toff=cand["toff"], iso_mv=iso,
        ))
    return beats


def delineate_lead(signal, fs: float, rpeaks, lead: LeadId) -> FiducialSet:
    return FiducialSet(lead=lead, fs=fs, beats=tuple(delineate_beats(signal, fs, rpeaks)))


# ---------------------------------------------------------------------------
# beat segmentation

@dataclass(frozen=True)
class BeatSegment:
    """One RR interval: samples span [T_{k-1}, T_k] inclusive of both R samples."""

    lead: LeadId
    index: int
    samples: np.ndarray
    start_time: float
    fs: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.size < 2:
            raise ValueError("beat segment needs at least 2 samples")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def delta_s(self) -> float:
        """RR length in seconds (both boundary R samples included)."""
        return (self.samples.size - 1) / self.fs

    @property
    def delta_ms(self) -> float:
        return self.delta_s * 1000.0


@dataclass(frozen=True)
class ImplausibleBeat:
    """Report entry for a segment outside the physiological RR gate."""

    index: int
    delta_s: float


def segment_beats(signal, fs: float, rpeaks, lead: LeadId):
    """Split a lead into RR segments; adjacent segments share their boundary R sample.

    Returns (segments, skipped); segments outside the 0.2-3.0 s gate are
    reported in ``skipped`` instead of raised.
    """
    x = np.asarray(signal, dtype=np.float64)
    r = np.asarray(rpeaks, dtype=int)
    if r.size < 2:
        raise NoBeatsFound("segmentation needs at least 2 R peaks")
    lo, hi = PLAUSIBLE_RR_S
    segments, skipped = [], []
    for k in range(r.size - 1):
        delta = (r[k + 1] - r[k]) / fs
        if not (lo <= delta <= hi):
            skipped.append(ImplausibleBeat(index=k, delta_s=delta))
            continue
        segments.append(BeatSegment(
            lead=lead, index=k, samples=x[r[k]:r[k + 1] + 1].copy(),
            start_time=r[k] / fs, fs=fs,
        ))
    return segments, skipped
