"""Reading, slicing, resampling and writing multi-lead ECG records.

Two storage formats are supported:

* a WFDB-style subset: ``<name>.hea`` text header plus ``<name>.dat``
  binary payload in signal format 16 (16-bit little-endian two's
  complement, sample-interleaved across leads);
* plain CSV with a ``time_s,<lead names>`` header row.

Internally everything is millivolts as float64; ADC counts exist only at
the I/O boundary.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .errors import (
    GainZero,
    IoFailure,
    MalformedHeader,
    OutOfRange,
    TruncatedPayload,
    UnknownLead,
    UnsupportedFormat,
)
from .leads import LeadId, parse_lead


@dataclass(frozen=True)
class SignalSpec:
    """Per-lead descriptor from a record header."""

    lead: LeadId
    gain: float = 200.0          # ADC units per mV
    baseline: int = 0            # ADC units at 0 mV
    fmt: str = "16"              # storage format tag
    adc_res: int = 16            # A/D resolution in bits
    units: str = "mV"

    @property
    def range_mv(self) -> float | None:
        """Full-scale bound in mV implied by the ADC resolution, if any."""
        if self.adc_res <= 0 or self.gain == 0:
            return None
        return float(2 ** (self.adc_res - 1)) / abs(self.gain)


@dataclass(frozen=True)
class RecordHeader:
    name: str
    fs: float
    n_samples: int
    specs: tuple[SignalSpec, ...]

    def __post_init__(self):
        if self.fs <= 0:
            raise MalformedHeader(f"sampling rate must be positive, got {self.fs}")
        if len(self.specs) == 0:
            raise MalformedHeader("header declares zero leads")
        if self.n_samples < 0:
            raise MalformedHeader("negative sample count")
        leads = [s.lead for s in self.specs]
        if len(set(leads)) != len(leads):
            raise MalformedHeader(f"duplicate lead ids in header: {leads}")

    @property
    def n_leads(self) -> int:
        return len(self.specs)

    @property
    def leads(self) -> tuple[LeadId, ...]:
        return tuple(s.lead for s in self.specs)


@dataclass(frozen=True, eq=False)
class MultiLeadRecord:
    """Sampled multi-lead signal in mV on a common time grid.

    ``data`` has shape (n_leads, n_samples) and is frozen after
    construction, so records are safe to share across threads.
    """

    header: RecordHeader
    data: np.ndarray
    start_time: float = 0.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise OutOfRange("record data must be 2-D (leads x samples)")
        if data.shape[0] != self.header.n_leads:
            raise MalformedHeader(
                f"header declares {self.header.n_leads} leads, data has {data.shape[0]}"
            )
        if not np.all(np.isfinite(data)):
            raise OutOfRange("record contains non-finite samples")
        for spec, row in zip(self.header.specs, data):
            bound = spec.range_mv
            if bound is not None and row.size and np.max(np.abs(row)) > bound * (1 + 1e-9):
                raise OutOfRange(
                    f"lead {spec.lead} exceeds declared range of {bound:.3f} mV"
                )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def fs(self) -> float:
        return self.header.fs

    @property
    def leads(self) -> tuple[LeadId, ...]:
        return self.header.leads

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        """Record length in seconds."""
        return self.n_samples / self.fs

    def lead(self, lead: LeadId) -> np.ndarray:
        """Return one lead's samples (a read-only view)."""
        try:
            idx = self.leads.index(lead)
        except ValueError:
            raise UnknownLead(f"record has no lead {lead}") from None
        return self.data[idx]

    def has_leads(self, leads) -> bool:
        return all(l in self.leads for l in leads)


def make_record(name, fs, leads, data, start_time=0.0, gain=1000.0, adc_res=16) -> MultiLeadRecord:
    """Build an in-memory record from mV arrays without parsing anything."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    specs = tuple(SignalSpec(lead=l, gain=gain, baseline=0, adc_res=adc_res) for l in leads)
    header = RecordHeader(name=name, fs=float(fs), n_samples=data.shape[1], specs=specs)
    return MultiLeadRecord(header=header, data=data, start_time=start_time)


# ---------------------------------------------------------------------------
# WFDB-subset parsing

_SUPPORTED_FORMATS = {"16", "csv"}


def parse_header(text: str) -> RecordHeader:
    """Parse a WFDB-style header for signal format 16 (or format tag csv).

    Unknown optional fields are ignored.  Raises MalformedHeader on syntax
    problems and UnsupportedFormat for any storage format other than 16 or
    CSV.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise MalformedHeader("empty header")

    rec = lines[0].split()
    if len(rec) < 2:
        raise MalformedHeader(f"record line needs at least name and lead count: {lines[0]!r}")
    name = rec[0]
    if "/" in name:
        raise UnsupportedFormat("multi-segment records are not supported")
    try:
        n_sig = int(rec[1])
    except ValueError:
        raise MalformedHeader(f"bad lead count {rec[1]!r}") from None
    if n_sig <= 0:
        raise MalformedHeader(f"header declares {n_sig} leads")

    fs = 250.0  # WFDB default when the field is absent
    if len(rec) >= 3:
        # the rate field may carry a counter spec: "1000/50(0)"
        fs_tok = rec[2].split("/")[0]
        try:
            fs = float(fs_tok)
        except ValueError:
            raise MalformedHeader(f"bad sampling rate {rec[2]!r}") from None
    n_samples = 0
    if len(rec) >= 4:
        try:
            n_samples = int(rec[3])
        except ValueError:
            raise MalformedHeader(f"bad sample count {rec[3]!r}") from None
        if n_samples < 0:
            raise MalformedHeader("negative sample count")

    sig_lines = lines[1:]
    if len(sig_lines) < n_sig:
        raise MalformedHeader(
            f"header declares {n_sig} leads but lists {len(sig_lines)} signal lines"
        )

    specs = []
    for i, ln in enumerate(sig_lines[:n_sig]):
        toks = ln.split()
        if len(toks) < 2:
            raise MalformedHeader(f"signal line {i} too short: {ln!r}")
        fmt = toks[1]
        if any(c in fmt for c in "x:+"):
            raise UnsupportedFormat(f"format modifiers not supported: {fmt!r}")
        if fmt not in _SUPPORTED_FORMATS:
            raise UnsupportedFormat(f"signal format {fmt!r} (only 16 and csv)")

        gain, baseline, units = 200.0, None, "mV"
        if len(toks) >= 3:
            g = toks[2]
            if "/" in g:
                g, units = g.split("/", 1)
            if "(" in g:
                if not g.endswith(")"):
                    raise MalformedHeader(f"bad gain field {toks[2]!r}")
                g, b = g[:-1].split("(", 1)
                try:
                    baseline = int(b)
                except ValueError:
                    raise MalformedHeader(f"bad baseline in {toks[2]!r}") from None
            try:
                gain = float(g)
            except ValueError:
                raise MalformedHeader(f"bad gain {toks[2]!r}") from None

        adc_res = 16
        adc_zero = 0
        if len(toks) >= 4:
            try:
                adc_res = int(toks[3])
            except ValueError:
                raise MalformedHeader(f"bad ADC resolution {toks[3]!r}") from None
        if len(toks) >= 5:
            try:
                adc_zero = int(toks[4])
            except ValueError:
                raise MalformedHeader(f"bad ADC zero {toks[4]!r}") from None
        if baseline is None:
            baseline = adc_zero

        # description (lead name) is everything past the checksum/blocksize
        if len(toks) >= 9:
            lead_name = " ".join(toks[8:])
        else:
            raise MalformedHeader(f"signal line {i} lacks a lead description: {ln!r}")
        lead = parse_lead(lead_name)

        specs.append(SignalSpec(lead=lead, gain=gain, baseline=baseline,
                                fmt=fmt, adc_res=adc_res, units=units))

    return RecordHeader(name=name, fs=fs, n_samples=n_samples, specs=tuple(specs))


def read_record(header: RecordHeader, payload: bytes) -> MultiLeadRecord:
    """Decode a format-16 payload against its header.

    Counts convert to mV as (count - baseline) / gain.  Lead order follows
    the header.
    """
    for spec in header.specs:
        if spec.fmt != "16":
            raise UnsupportedFormat(f"read_record handles format 16 only, got {spec.fmt!r}")
        if spec.gain == 0:
            raise GainZero(f"lead {spec.lead} declares zero gain")

    n_leads = header.n_leads
    frame = 2 * n_leads
    if header.n_samples:
        expected = frame * header.n_samples
        if len(payload) < expected:
            raise TruncatedPayload(
                f"payload holds {len(payload)} bytes, header implies {expected}"
            )
        payload = payload[:expected]
    if len(payload) % frame:
        raise TruncatedPayload(
            f"payload of {len(payload)} bytes is not a whole number of "
            f"{frame}-byte frames"
        )

    counts = np.frombuffer(payload, dtype="<i2").reshape(-1, n_leads).T
    gains = np.array([s.gain for s in header.specs])[:, None]
    baselines = np.array([s.baseline for s in header.specs], dtype=np.float64)[:, None]
    data = (counts.astype(np.float64) - baselines) / gains

    hdr = replace(header, n_samples=data.shape[1])
    return MultiLeadRecord(header=hdr, data=data)


def load_record(path_base: str | Path) -> MultiLeadRecord:
    """Load ``<base>.hea`` + ``<base>.dat`` from disk."""
    base = Path(path_base)
    hea = base.with_suffix(".hea")
    dat = base.with_suffix(".dat")
    try:
        header = parse_header(hea.read_text())
        payload = dat.read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return read_record(header, payload)


def write_record_wfdb(record: MultiLeadRecord, directory: str | Path, name: str | None = None) -> Path:
    """Write a record as a format-16 ``.hea``/``.dat`` pair; returns the base path."""
    name = name or record.header.name
    base = Path(directory) / name
    n = record.n_samples
    lines = [f"{name} {record.header.n_leads} {_fmt_num(record.fs)} {n}"]
    counts = np.empty((record.header.n_leads, n), dtype="<i2")
    for i, spec in enumerate(record.header.specs):
        if spec.gain == 0:
            raise GainZero(f"lead {spec.lead} has zero gain")
        raw = np.rint(record.data[i] * spec.gain + spec.baseline)
        if np.any(raw > 32767) or np.any(raw < -32768):
            raise OutOfRange(f"lead {spec.lead} does not fit 16-bit at gain {spec.gain}")
        counts[i] = raw.astype("<i2")
        lines.append(
            f"{name}.dat 16 {_fmt_num(spec.gain)}({spec.baseline})/{spec.units} "
            f"{spec.adc_res} {spec.baseline} 0 0 0 {spec.lead}"
        )
    try:
        base.with_suffix(".hea").write_text("\n".join(lines) + "\n")
        base.with_suffix(".dat").write_bytes(counts.T.tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return base


def _fmt_num(x: float) -> str:
    return f"{x:g}"


# ---------------------------------------------------------------------------
# CSV

def write_record_csv(record: MultiLeadRecord, destination) -> None:
    """Write ``time_s,<leads>`` CSV; values round-trip within 1e-9 mV."""
    close = False
    if isinstance(destination, (str, Path)):
        try:
            fh = open(destination, "w", encoding="utf-8", newline="")
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        close = True
    else:
        fh = destination
    try:
        fh.write("time_s," + ",".join(str(l) for l in record.leads) + "\n")
        t0, fs = record.start_time, record.fs
        for k in range(record.n_samples):
            # repr gives the shortest exact float round trip, so reading the
            # file back reproduces the samples bit-for-bit
            vals = ",".join(repr(float(v)) for v in record.data[:, k])
            fh.write(f"{t0 + k / fs:.9f},{vals}\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    finally:
        if close:
            fh.close()


def read_record_csv(source, fs: float | None = None, name: str = "csv") -> MultiLeadRecord:
    """Read a CSV written by :func:`write_record_csv` (or hand-authored).

    The sampling rate is inferred from the time column unless given; a
    header-only CSV needs an explicit ``fs`` (falls back to 1 Hz).
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
    elif hasattr(source, "read"):
        text = source.read()
    else:
        text = source

    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MalformedHeader("empty CSV")
    cols = [c.strip() for c in lines[0].split(",")]
    if not cols or cols[0] != "time_s" or len(cols) < 2:
        raise MalformedHeader(f"CSV header row must be 'time_s,<leads>', got {lines[0]!r}")
    leads = tuple(parse_lead(c) for c in cols[1:])
    if len(set(leads)) != len(leads):
        raise MalformedHeader("duplicate lead columns")

    rows = []
    times = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(cols):
            raise MalformedHeader(f"row has {len(parts)} fields, expected {len(cols)}: {ln!r}")
        try:
            times.append(float(parts[0]))
            rows.append([float(p) for p in parts[1:]])
        except ValueError:
            raise MalformedHeader(f"non-numeric field in row {ln!r}") from None

    if fs is None:
        if len(times) >= 2:
            dt = float(np.median(np.diff(times)))
            if dt <= 0:
                raise MalformedHeader("time column is not increasing")
            fs = 1.0 / dt
            if abs(fs - round(fs)) < 1e-6 * fs:
                fs = float(round(fs))
        else:
            fs = 1.0
    data = np.array(rows, dtype=np.float64).T if rows else np.zeros((len(leads), 0))
    start = times[0] if times else 0.0
    specs = tuple(SignalSpec(lead=l, gain=1.0, baseline=0, fmt="csv", adc_res=0) for l in leads)
    header = RecordHeader(name=name, fs=fs, n_samples=data.shape[1], specs=specs)
    return MultiLeadRecord(header=header, data=data, start_time=start)


# ---------------------------------------------------------------------------
# slicing and resampling

def slice_record(record: MultiLeadRecord, t0: float, t1: float, leads=None) -> MultiLeadRecord:
    """Sample-aligned sub-record over [t0, t1) seconds relative to record start.

    Composition is exact for sample-aligned windows:
    ``slice(slice(r, a, b), c, d) == slice(r, a + c, a + d)``.
    """
    fs = record.fs
    if not (0 <= t0 < t1 <= record.duration + 0.5 / fs):
        raise OutOfRange(f"slice [{t0}, {t1}] outside record of {record.duration:.3f} s")
    i0 = int(round(t0 * fs))
    i1 = int(round(t1 * fs))
    i1 = min(i1, record.n_samples)
    if i0 >= i1:
        raise OutOfRange(f"slice [{t0}, {t1}] is empty at fs={fs}")

    if leads is None:
        keep = list(range(len(record.leads)))
    else:
        leads = list(leads)
        for l in leads:
            if l not in record.leads:
                raise UnknownLead(f"record has no lead {l}")
        keep = [i for i, l in enumerate(record.leads) if l in leads]

    specs = tuple(record.header.specs[i] for i in keep)
    data = record.data[keep, i0:i1]
    header = RecordHeader(name=record.header.name, fs=fs, n_samples=i1 - i0, specs=specs)
    return MultiLeadRecord(header=header, data=data, start_time=record.start_time + i0 / fs)


_SINC_HALF = 32       # polyphase filter half-length per branch
_KAISER_BETA = 14.0   # ~1e-7 passband ripple


def _rational_ratio(target_fs: float, fs: float) -> tuple[int, int] | None:
    ratio = target_fs / fs
    frac = Fraction(ratio).limit_denominator(1000)
    if frac.numerator <= 0:
        return None
    if abs(float(frac) - ratio) <= 1e-12 * ratio:
        return frac.numerator, frac.denominator
    return None


def resample_record(record: MultiLeadRecord, target_fs: float) -> MultiLeadRecord:
    """Resample every lead to target_fs.

    Rational ratios use windowed-sinc polyphase filtering (reflect-padded to
    keep the record edges clean); anything else falls back to linear
    interpolation.  Output length is floor(n * target_fs / fs).
    """
    if target_fs <= 0:
        raise OutOfRange(f"target sampling rate must be positive, got {target_fs}")
    fs = record.fs
    if target_fs == fs:
        return record

    n = record.n_samples
    m = int(math.floor(n * target_fs / fs))
    ratio = _rational_ratio(target_fs, fs)

    if ratio is not None and n > 2:
        up, down = ratio
        big = max(up, down)
        numtaps = 2 * _SINC_HALF * big + 1
        # resample_poly scales the supplied taps by `up` internally
        taps = sps.firwin(numtaps, 1.0 / big, window=("kaiser", _KAISER_BETA))
        # reflect-pad a whole number of `down` blocks so the pad maps to an
        # integer number of output samples
        base = numtaps // (2 * up) + 1
        pad = (base + down - 1) // down * down
        if pad > n - 1:
            pad = (n - 1) // down * down
        out_rows = []
        for row in record.data:
            if pad:
                # odd reflection keeps value and slope continuous at the edges
                head = 2.0 * row[0] - row[pad:0:-1]
                tail = 2.0 * row[-1] - row[-2:-pad - 2:-1]
                padded = np.concatenate([head, row, tail])
            else:
                padded = row
            y = sps.resample_poly(padded, up, down, window=taps)
            lead_pad = pad * up // down
            out_rows.append(y[lead_pad:lead_pad + m])
        data = np.vstack(out_rows)
    else:
        t_in = np.arange(n) / fs
        t_out = np.arange(m) / target_fs
        data = np.vstack([np.interp(t_out, t_in, row) for row in record.data])

    header = RecordHeader(
        name=record.header.name, fs=float(target_fs), n_samples=m, specs=record.header.specs
    )
    return MultiLeadRecord(header=header, data=data, start_time=record.start_time)


def records_allclose(a: MultiLeadRecord, b: MultiLeadRecord, tol_mv: float = 1e-9) -> bool:
    """True when two records agree lead-for-lead within tol_mv."""
    if a.leads != b.leads or a.n_samples != b.n_samples:
        return False
    return bool(np.all(np.abs(a.data - b.data) <= tol_mv))
