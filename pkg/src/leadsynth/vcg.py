"""Vectorcardiogram derivation via the Dower transforms and QRS-axis
measurement.

The coefficient matrices are compile-time constants transcribed from
Edenbrandt & Pahlm, J Electrocardiol 21(4), 1988 (the Dower matrix after
Dower 1980 and its pseudoinverse, the "inverse Dower" matrix); the test
suite checksums the transcription and verifies the pseudoinverse property
numerically.

Axis convention: +X points left, +Y points down (standard frontal-plane
ECG convention); angles are measured from +X toward +Y in degrees,
reported in (-180, 180].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, MissingLead, WindowOutOfRange
from .leads import INDEPENDENT_8, LeadId

# rows in INDEPENDENT_8 order (I, II, V1..V6), columns (X, Y, Z)
DOWER_MATRIX = np.array([
    [0.632, -0.235, 0.059],    # I
    [0.235, 1.066, -0.132],    # II
    [-0.515, 0.157, -0.917],   # V1
    [0.044, 0.164, -1.387],    # V2
    [0.882, 0.098, -1.277],    # V3
    [1.213, 0.127, -0.601],    # V4
    [1.125, 0.127, -0.086],    # V5
    [0.831, 0.076, 0.230],     # V6
])

# rows (X, Y, Z), columns in INDEPENDENT_8 order (I, II, V1..V6)
INVERSE_DOWER_MATRIX = np.array([
    [0.156, -0.010, -0.172, -0.074, 0.122, 0.231, 0.239, 0.194],
    [-0.227, 0.887, 0.057, -0.019, -0.106, -0.022, 0.041, 0.048],
    [0.022, 0.102, -0.229, -0.310, -0.246, -0.063, 0.055, 0.108],
])

DOWER_MATRIX.setflags(write=False)
INVERSE_DOWER_MATRIX.setflags(write=False)


@dataclass(frozen=True)
class VcgSignal:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    fs: float

    def __post_init__(self):
        arrs = []
        for name in ("x", "y", "z"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(a)):
                raise LengthMismatch(f"non-finite values in VCG {name}")
            arrs.append(a)
        if not (arrs[0].size == arrs[1].size == arrs[2].size):
            raise LengthMismatch("VCG components differ in length")
        for name, a in zip(("x", "y", "z"), arrs):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n_samples(self) -> int:
        return self.x.size


def inverse_dower(leads: dict, fs: float = 1.0) -> VcgSignal:
    """Derive X/Y/Z from the 8 independent leads (I, II, V1..V6)."""
    rows = []
    n = None
    for lead in INDEPENDENT_8:
        if lead not in leads:
            raise MissingLead(f"inverse Dower needs lead {lead}")
        a = np.asarray(leads[lead], dtype=np.float64)
        if n is None:
            n = a.size
        elif a.size != n:
            raise LengthMismatch(f"lead {lead} has {a.size} samples, expected {n}")
        rows.append(a)
    stacked = np.vstack(rows)
    xyz = INVERSE_DOWER_MATRIX @ stacked
    return VcgSignal(x=xyz[0], y=xyz[1], z=xyz[2], fs=fs)


def forward_dower(vcg: VcgSignal) -> dict:
    """Project a VCG back onto the 8 independent leads."""
    xyz = np.vstack([vcg.x, vcg.y, vcg.z])
    out = DOWER_MATRIX @ xyz
    return {lead: out[i] for i, lead in enumerate(INDEPENDENT_8)}


def qrs_axis(vcg: VcgSignal, window: tuple) -> float:
    """Frontal-plane angle (degrees) of the largest QRS-loop vector.

    ``window`` is a (start, stop) sample range; the angle is taken at the
    sample whose X-Y projection has maximal magnitude.
    """
    lo, hi = int(window[0]), int(window[1])
    if not (0 <= lo < hi <= vcg.n_samples):
        raise WindowOutOfRange(f"window [{lo}, {hi}) outside signal of {vcg.n_samples}")
    px = vcg.x[lo:hi]
    py = vcg.y[lo:hi]
    mag = px * px + py * py
    k = int(np.argmax(mag))
    angle = float(np.degrees(np.arctan2(py[k], px[k])))
    if angle <= -180.0:
        angle = 180.0
    return angle


def axis_difference_deg(a: float, b: float) -> float:
    """Smallest absolute angular difference between two axes in degrees."""
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def record_to_vcg(record, leads=None) -> VcgSignal:
    """Convenience: inverse Dower straight from a record's 8 independent leads."""
    return inverse_dower({l: record.lead(l) for l in INDEPENDENT_8 if l in record.leads},
                         fs=record.fs)
