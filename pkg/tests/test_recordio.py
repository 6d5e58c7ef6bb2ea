import io
import struct

import numpy as np
import pytest
from scipy.signal.windows import tukey as sps_tukey

from leadsynth import errors
from leadsynth.leads import LeadId, STANDARD_12
from leadsynth.recordio import (
    MultiLeadRecord,
    RecordHeader,
    SignalSpec,
    make_record,
    parse_header,
    read_record,
    read_record_csv,
    records_allclose,
    resample_record,
    slice_record,
    write_record_csv,
    write_record_wfdb,
    load_record,
)

PTB_STYLE_HEADER = """\
s0010re 15 1000 4000
s0010re.dat 16 2000 16 0 -489 0 0 i
s0010re.dat 16 2000 16 0 -1135 0 0 ii
s0010re.dat 16 2000 16 0 -646 0 0 iii
s0010re.dat 16 2000 16 0 1092 0 0 avr
s0010re.dat 16 2000 16 0 79 0 0 avl
s0010re.dat 16 2000 16 0 -891 0 0 avf
s0010re.dat 16 2000 16 0 507 0 0 v1
s0010re.dat 16 2000 16 0 228 0 0 v2
s0010re.dat 16 2000 16 0 387 0 0 v3
s0010re.dat 16 2000 16 0 418 0 0 v4
s0010re.dat 16 2000 16 0 1746 0 0 v5
s0010re.dat 16 2000 16 0 742 0 0 v6
s0010re.dat 16 2000 16 0 -196 0 0 vx
s0010re.dat 16 2000 16 0 -36 0 0 vy
s0010re.dat 16 2000 16 0 -166 0 0 vz
"""


class TestParseHeader:
    def test_ptb_style_15_leads_1khz(self):
        hdr = parse_header(PTB_STYLE_HEADER)
        assert hdr.fs == 1000.0
        assert hdr.n_leads == 15
        assert hdr.n_samples == 4000
        assert hdr.leads[:3] == (LeadId.I, LeadId.II, LeadId.III)
        assert hdr.leads[-3:] == (LeadId.X, LeadId.Y, LeadId.Z)
        # 16-bit at 2000 units/mV implies the +-16.384 mV full scale
        assert hdr.specs[0].range_mv == pytest.approx(16.384)

    def test_zero_leads_rejected(self):
        with pytest.raises(errors.MalformedHeader):
            parse_header("rec 0 500 100\n")

    def test_two_lead_fixture_field_by_field(self):
        text = (
            "mini 2 500 10\n"
            "mini.dat 16 100(5)/mV 12 5 0 0 0 i\n"
            "mini.dat 16 250 16 0 0 0 0 v2\n"
        )
        hdr = parse_header(text)
        assert hdr.name == "mini"
        assert hdr.fs == 500.0
        assert hdr.n_samples == 10
        s0, s1 = hdr.specs
        assert (s0.lead, s0.gain, s0.baseline, s0.adc_res) == (LeadId.I, 100.0, 5, 12)
        assert (s1.lead, s1.gain, s1.baseline, s1.adc_res) == (LeadId.V2, 250.0, 0, 16)

    def test_unsupported_format(self):
        text = "rec 1 500 10\nrec.dat 212 200 12 0 0 0 0 ii\n"
        with pytest.raises(errors.UnsupportedFormat):
            parse_header(text)

    def test_format_modifiers_rejected(self):
        text = "rec 1 500 10\nrec.dat 16x2 200 12 0 0 0 0 ii\n"
        with pytest.raises(errors.UnsupportedFormat):
            parse_header(text)

    def test_duplicate_leads_rejected(self):
        text = (
            "rec 2 500 10\n"
            "rec.dat 16 200 12 0 0 0 0 ii\n"
            "rec.dat 16 200 12 0 0 0 0 ii\n"
        )
        with pytest.raises(errors.MalformedHeader):
            parse_header(text)

    @pytest.mark.parametrize("blob_seed", range(20))
    def test_fuzz_never_panics(self, blob_seed):
        rng = np.random.default_rng(blob_seed)
        raw = bytes(rng.integers(0, 256, size=rng.integers(1, 400)).astype(np.uint8))
        text = raw.decode("utf-8", errors="replace")
        try:
            parse_header(text)
        except errors.LeadSynthError:
            pass


def _mini_header(n_samples=4, gain=200.0, baseline=0):
    specs = (
        SignalSpec(lead=LeadId.I, gain=gain, baseline=baseline),
        SignalSpec(lead=LeadId.II, gain=gain, baseline=baseline),
    )
    return RecordHeader(name="mini", fs=500.0, n_samples=n_samples, specs=specs)


class TestReadRecord:
    def test_baseline_maps_to_zero(self):
        hdr = _mini_header(n_samples=1, baseline=37)
        payload = struct.pack("<2h", 37, 37)
        rec = read_record(hdr, payload)
        assert np.all(rec.data == 0.0)

    def test_linear_conversion(self):
        hdr = _mini_header(n_samples=1)
        payload = struct.pack("<2h", 400, -400)
        rec = read_record(hdr, payload)
        assert rec.data[0, 0] == pytest.approx(2.0)
        assert rec.data[1, 0] == pytest.approx(-2.0)

    def test_interleaved_deinterleave(self):
        # hand-assembled: samples (lead I, lead II) = (1,2),(3,4),(5,6),(7,8)
        hdr = _mini_header(n_samples=4, gain=1.0)
        payload = struct.pack("<8h", 1, 2, 3, 4, 5, 6, 7, 8)
        rec = read_record(hdr, payload)
        assert rec.lead(LeadId.I).tolist() == [1.0, 3.0, 5.0, 7.0]
        assert rec.lead(LeadId.II).tolist() == [2.0, 4.0, 6.0, 8.0]

    def test_truncated_payload(self):
        hdr = _mini_header(n_samples=4)
        with pytest.raises(errors.TruncatedPayload):
            read_record(hdr, b"\x00" * 6)

    def test_gain_zero(self):
        hdr = _mini_header(n_samples=1, gain=0.0)
        with pytest.raises(errors.GainZero):
            read_record(hdr, b"\x00" * 4)

    def test_range_bound_enforced(self):
        hdr = _mini_header(n_samples=1, gain=10000.0)
        # 16-bit at 10000/mV allows 3.2768 mV; raw record construction with
        # a larger value must be rejected
        with pytest.raises(errors.OutOfRange):
            MultiLeadRecord(header=hdr, data=np.array([[4.0], [0.0]]))


class TestWfdbRoundTrip:
    def test_write_then_load(self, tmp_path):
        rng = np.random.default_rng(5)
        data = np.round(rng.uniform(-5, 5, size=(2, 50)), 3)
        rec = make_record("rt", 500.0, (LeadId.I, LeadId.II), data, gain=1000.0)
        base = write_record_wfdb(rec, tmp_path)
        back = load_record(base)
        assert back.fs == rec.fs
        assert back.leads == rec.leads
        assert np.max(np.abs(back.data - rec.data)) < 1e-9


class TestSlice:
    def test_identity(self, clean_record):
        rec, _ = clean_record
        out = slice_record(rec, 0.0, rec.duration)
        assert records_allclose(out, rec, tol_mv=0.0)

    def test_sample_count(self):
        data = np.zeros((1, 120000))
        rec = make_record("r", 1000.0, (LeadId.I,), data)
        out = slice_record(rec, 0.0, 60.0)
        assert out.n_samples == 60000

    @pytest.mark.parametrize("seed", range(5))
    def test_composition_law(self, seed):
        rng = np.random.default_rng(seed)
        fs = float(rng.choice([250.0, 500.0, 997.0]))
        n = 5000
        rec = make_record("r", fs, (LeadId.I,), rng.standard_normal((1, n)), adc_res=0)
        # sample-aligned windows
        a = rng.integers(0, n // 2)
        b = rng.integers(a + 100, n)
        c = rng.integers(0, (b - a) // 2)
        d = rng.integers(c + 10, b - a)
        t = lambda k: k / fs
        inner = slice_record(slice_record(rec, t(a), t(b)), t(c), t(d))
        direct = slice_record(rec, t(a + c), t(a + d))
        assert records_allclose(inner, direct, tol_mv=0.0)
        assert inner.start_time == direct.start_time

    def test_out_of_range(self, clean_record):
        rec, _ = clean_record
        with pytest.raises(errors.OutOfRange):
            slice_record(rec, -1.0, 5.0)
        with pytest.raises(errors.OutOfRange):
            slice_record(rec, 5.0, rec.duration + 10.0)

    def test_unknown_lead(self, clean_record):
        rec, _ = clean_record
        with pytest.raises(errors.UnknownLead):
            slice_record(rec, 0.0, 5.0, leads=[LeadId.X])

    def test_lead_subset(self, clean_record):
        rec, _ = clean_record
        out = slice_record(rec, 0.0, 5.0, leads=[LeadId.V2, LeadId.I])
        assert set(out.leads) == {LeadId.I, LeadId.V2}


class TestResample:
    def test_identity(self, clean_record):
        rec, _ = clean_record
        assert resample_record(rec, rec.fs) is rec

    def test_sinusoid_downsample_analytic(self):
        fs = 1000.0
        # whole number of 5 Hz cycles so both edges sit at zero crossings
        t = np.arange(4001) / fs
        x = np.sin(2 * np.pi * 5.0 * t)
        rec = make_record("s", fs, (LeadId.I,), x[None, :], adc_res=0)
        out = resample_record(rec, 500.0)
        t2 = np.arange(out.n_samples) / 500.0
        err = out.data[0] - np.sin(2 * np.pi * 5.0 * t2)
        assert np.sqrt(np.mean(err ** 2)) < 1e-3

    def test_updown_round_trip(self):
        fs = 500.0
        t = np.arange(int(4 * fs)) / fs
        # tapered to zero at the ends: the fixture stays effectively
        # band-limited and edge extension is exact
        taper = sps_tukey(t.size, alpha=0.5)
        x = (np.sin(2 * np.pi * 7.0 * t) + 0.5 * np.sin(2 * np.pi * 31.0 * t + 0.3)) * taper
        rec = make_record("b", fs, (LeadId.I,), x[None, :], adc_res=0)
        back = resample_record(resample_record(rec, 1000.0), 500.0)
        n = back.n_samples
        assert np.max(np.abs(back.data[0] - x[:n])) < 1e-6

    def test_length_scaling(self):
        rec = make_record("r", 300.0, (LeadId.I,), np.zeros((1, 3000)))
        out = resample_record(rec, 500.0)
        assert out.n_samples == 5000
        assert out.fs == 500.0

    def test_bad_target(self, clean_record):
        rec, _ = clean_record
        with pytest.raises(errors.OutOfRange):
            resample_record(rec, 0.0)


class TestCsv:
    def test_empty_record_header_only(self):
        rec = make_record("e", 100.0, (LeadId.I, LeadId.II), np.zeros((2, 0)))
        buf = io.StringIO()
        write_record_csv(rec, buf)
        assert buf.getvalue() == "time_s,I,II\n"

    def test_three_samples_four_lines(self):
        rec = make_record("r", 10.0, (LeadId.I,), np.array([[0.1, 0.2, 0.3]]))
        buf = io.StringIO()
        write_record_csv(rec, buf)
        assert len(buf.getvalue().splitlines()) == 4

    def test_round_trip_exact(self, clean_record):
        rec, _ = clean_record
        small = slice_record(rec, 0.0, 2.0)
        buf = io.StringIO()
        write_record_csv(small, buf)
        back = read_record_csv(buf.getvalue())
        assert back.leads == small.leads
        assert back.fs == small.fs
        assert np.array_equal(back.data, small.data)

    def test_malformed_rows(self):
        with pytest.raises(errors.MalformedHeader):
            read_record_csv("time_s,I\n0.0,1.0,2.0\n")
        with pytest.raises(errors.MalformedHeader):
            read_record_csv("time_s,I\n0.0,abc\n")
        with pytest.raises(errors.MalformedHeader):
            read_record_csv("nope,I\n0.0,1.0\n")
