import numpy as np
import pytest

from leadsynth.leads import STANDARD_12, LeadId
from leadsynth.simgen import (
    LagSpec,
    LeadWaves,
    RrSchedule,
    SynthConfig,
    Wave,
    default_waves,
    generate_synthetic_record,
)


def grid_config(fs=500.0, duration_s=70.0, snr_db=26.0, amp_mod=0.1, twa=0.0,
                lag_scale=1.0):
    """Oracle preset: per-lead constant event offsets plus learnable
    linear-in-RR lags riding a slow respiratory-like RR swing."""
    lags = {}
    for k, lead in enumerate(STANDARD_12):
        lags[lead] = LagSpec(
            mode="linear_rr",
            slope=lag_scale * 0.12 * (k - 5.5) / 5.5,
            rr_ref_ms=780.0,
            shift_ms=25.0 * np.sin(2.0 + 2.1 * k),
        )
    return SynthConfig(
        fs=fs, duration_s=duration_s,
        rr=RrSchedule(mean_ms=780.0, variability_ms=40.0, period_beats=20.0,
                      jitter_ms=2.0),
        lags=lags, amp_mod_frac=amp_mod, snr_db=snr_db, twa_frac=twa,
    )


def make_grid_record(seed, **kw):
    return generate_synthetic_record(grid_config(**kw), seed)


def null_lag_config(fs=500.0, duration_s=70.0, snr_db=26.0):
    """Same texture as the grid preset but zero lag everywhere."""
    return SynthConfig(
        fs=fs, duration_s=duration_s,
        rr=RrSchedule(mean_ms=780.0, variability_ms=40.0, period_beats=20.0,
                      jitter_ms=2.0),
        amp_mod_frac=0.1, snr_db=snr_db,
    )


def beat_signal(r_times_s, fs, duration_s, waves=None, noise_mv=0.0, seed=0):
    """Single-lead sum-of-Gaussians signal with beats at explicit R times."""
    waves = waves if waves is not None else default_waves(LeadId.II)
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    x = np.zeros(n)
    for rt in r_times_s:
        for _, w in waves.items():
            c = rt + w.center_ms / 1000.0
            s = w.width_ms / 1000.0
            x += w.amp_mv * np.exp(-0.5 * ((t - c) / s) ** 2)
    if noise_mv:
        x = x + noise_mv * np.random.default_rng(seed).standard_normal(n)
    return x


@pytest.fixture(scope="session")
def clean_record():
    """Default 12-lead record: no lag, no noise, 250 Hz, 40 s."""
    return generate_synthetic_record(SynthConfig(fs=250.0, duration_s=40.0), seed=3)


@pytest.fixture(scope="session")
def grid_record():
    return make_grid_record(7)
