"""Reconstruction scoring: R-squared, Pearson correlation, the 12x12
accuracy grid and with/without-lag-correction comparison reports.

Synthesized and measured signals are compared on the current lead's clock
over the evaluation span, truncated to the shared extent.  R-squared is
the coefficient of determination with the measured signal as reference.
Aggregates are the mean and population standard deviation over all
off-diagonal cells.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .dtw import DtwConfig
from .errors import LeadMissing, LengthMismatch, RecordTooShort, ZeroVariance
from .forest import ForestConfig
from .leads import STANDARD_12, LeadId
from .preprocess import PreprocessConfig, preprocess_record
from .recordio import MultiLeadRecord, slice_record
from .synth import (
    SynthesisConfig,
    build_library,
    synthesize_lead,
    train_lag_models,
    _prepare_current,
)


def r_squared(reference, estimate) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot about the
    reference mean."""
    ref = np.asarray(reference, dtype=np.float64)
    est = np.asarray(estimate, dtype=np.float64)
    if ref.size != est.size:
        raise LengthMismatch(f"{ref.size} vs {est.size} samples")
    if ref.size < 2:
        raise LengthMismatch("need at least 2 samples")
    ss_tot = float(np.sum((ref - ref.mean()) ** 2))
    if ss_tot <= 0:
        raise ZeroVariance("reference has zero variance")
    ss_res = float(np.sum((ref - est) ** 2))
    return 1.0 - ss_res / ss_tot


def pearson(reference, estimate) -> float:
    """Product-moment correlation."""
    ref = np.asarray(reference, dtype=np.float64)
    est = np.asarray(estimate, dtype=np.float64)
    if ref.size != est.size:
        raise LengthMismatch(f"{ref.size} vs {est.size} samples")
    if ref.size < 2:
        raise LengthMismatch("need at least 2 samples")
    a = ref - ref.mean()
    b = est - est.mean()
    na = float(np.sqrt(np.sum(a * a)))
    nb = float(np.sqrt(np.sum(b * b)))
    if na == 0 or nb == 0:
        raise ZeroVariance("zero variance input")
    return float(np.dot(a, b) / (na * nb))


# ---------------------------------------------------------------------------
# evaluation protocol

@dataclass(frozen=True)
class EvalProtocol:
    train_window_s: float = 60.0
    eval_window_s: float | None = None   # None: the held-out remainder
    min_eval_s: float = 10.0
    preprocess: PreprocessConfig = PreprocessConfig()
    dtw: DtwConfig = DtwConfig()
    forest: ForestConfig = ForestConfig()
    drift_clamp_ms: float = 100.0
    seed: int = 0
    score_preprocessed: bool = True      # compare against preprocessed measured leads


@dataclass
class AccuracyMatrix:
    """12x12 grid; rows are synthesized leads, columns the current lead."""

    leads: tuple
    r2: np.ndarray
    rho: np.ndarray
    counts: np.ndarray

    def off_diagonal(self, which: str = "rho") -> np.ndarray:
        m = self.rho if which == "rho" else self.r2
        mask = ~np.eye(len(self.leads), dtype=bool)
        return m[mask]

    @property
    def mean_rho(self) -> float:
        return float(self.off_diagonal("rho").mean())

    @property
    def mean_r2(self) -> float:
        return float(self.off_diagonal("r2").mean())

    @property
    def std_rho(self) -> float:
        return float(self.off_diagonal("rho").std())

    @property
    def std_r2(self) -> float:
        return float(self.off_diagonal("r2").std())

    def to_json(self) -> str:
        doc = {
            "leads": [str(l) for l in self.leads],
            "r2": self.r2.tolist(),
            "rho": self.rho.tolist(),
            "counts": self.counts.tolist(),
            "aggregate": {
                "mean_r2": self.mean_r2, "std_r2": self.std_r2,
                "mean_rho": self.mean_rho, "std_rho": self.std_rho,
            },
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    def to_markdown(self, which: str = "rho") -> str:
        m = self.rho if which == "rho" else self.r2
        names = [str(l) for l in self.leads]
        lines = ["| synth \\ current | " + " | ".join(names) + " |",
                 "|---" * (len(names) + 1) + "|"]
        for i, row_name in enumerate(names):
            cells = " | ".join(f"{m[i, j]:.3f}" for j in range(len(names)))
            lines.append(f"| {row_name} | {cells} |")
        return "\n".join(lines) + "\n"


@dataclass
class EvaluationReport:
    record_name: str
    with_correction: AccuracyMatrix
    without_correction: AccuracyMatrix

    @property
    def delta_mean_rho(self) -> float:
        return self.with_correction.mean_rho - self.without_correction.mean_rho

    @property
    def delta_mean_r2(self) -> float:
        return self.with_correction.mean_r2 - self.without_correction.mean_r2

    @property
    def worst_pair_rho_gain(self) -> float:
        """Correction gain on the pair that scored worst without it."""
        off = ~np.eye(len(self.with_correction.leads), dtype=bool)
        rho_wo = self.without_correction.rho
        rho_w = self.with_correction.rho
        flat = np.where(off, rho_wo, np.inf)
        i, j = np.unravel_index(int(np.argmin(flat)), flat.shape)
        return float(rho_w[i, j] - rho_wo[i, j])

    def per_cell_delta_rho(self) -> np.ndarray:
        return self.with_correction.rho - self.without_correction.rho

    def to_json(self) -> str:
        doc = {
            "record": self.record_name,
            "with": json.loads(self.with_correction.to_json()),
            "without": json.loads(self.without_correction.to_json()),
            "delta": {
                "mean_r2": self.delta_mean_r2,
                "mean_rho": self.delta_mean_rho,
                "worst_pair_rho_gain": self.worst_pair_rho_gain,
            },
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    def to_markdown(self) -> str:
        rows = [
            ("with correction", self.with_correction),
            ("without correction", self.without_correction),
        ]
        lines = [
            "| Variant | Average R2 (std) | Average rho (std) |",
            "|---|---|---|",
        ]
        for name, m in rows:
            lines.append(
                f"| {name} | {m.mean_r2:.3f} ({m.std_r2:.3f}) "
                f"| {m.mean_rho:.3f} ({m.std_rho:.3f}) |"
            )
        lines.append(
            f"| improvement | {self.delta_mean_r2:+.3f} | {self.delta_mean_rho:+.3f} |"
        )
        return "\n".join(lines) + "\n"


def _check_windows(record: MultiLeadRecord, protocol: EvalProtocol):
    need = protocol.train_window_s + max(protocol.min_eval_s, 2.0)
    if record.duration < need:
        raise RecordTooShort(
            f"record of {record.duration:.1f} s cannot cover a "
            f"{protocol.train_window_s:.0f} s training window plus evaluation"
        )


def _eval_slices(record, protocol):
    t0 = protocol.train_window_s
    t1 = record.duration if protocol.eval_window_s is None else min(
        record.duration, t0 + protocol.eval_window_s)
    raw = slice_record(record, t0, t1)
    ref = preprocess_record(raw, protocol.preprocess) if protocol.score_preprocessed else raw
    return raw, ref


def _grid(record, protocol, leads, lib, eval_raw, eval_ref, lag_correction, contexts):
    n = len(leads)
    r2 = np.eye(n)
    rho = np.eye(n)
    counts = np.zeros((n, n), dtype=int)
    cfg = SynthesisConfig(
        preprocess=protocol.preprocess, dtw=protocol.dtw, forest=protocol.forest,
        drift_clamp_ms=protocol.drift_clamp_ms, lag_correction=lag_correction,
    )
    for jx, lead_j in enumerate(leads):
        if lag_correction:
            models = train_lag_models(
                lib, lead_j, forest=replace(protocol.forest, seed=protocol.seed))
        else:
            models = {}
        raw_j = eval_raw.lead(lead_j)
        ctx = contexts.get(lead_j)
        if ctx is None:
            ctx = _prepare_current(raw_j, eval_raw.fs, lead_j, lib, cfg)
            contexts[lead_j] = ctx
        for ix, lead_i in enumerate(leads):
            if lead_i == lead_j:
                counts[ix, jx] = raw_j.size
                continue
            syn = synthesize_lead(raw_j, eval_raw.fs, lead_j, lead_i, lib, models,
                                  cfg, _ctx=ctx)
            ref = eval_ref.lead(lead_i)
            m = min(ref.size, syn.samples.size)
            r2[ix, jx] = r_squared(ref[:m], syn.samples[:m])
            rho[ix, jx] = pearson(ref[:m], syn.samples[:m])
            counts[ix, jx] = m
    return AccuracyMatrix(leads=tuple(leads), r2=r2, rho=rho, counts=counts)


def accuracy_matrix(record: MultiLeadRecord, protocol: EvalProtocol = EvalProtocol(),
                    lag_correction: bool = True) -> AccuracyMatrix:
    """Train on the leading window, synthesize every lead from every other
    over the held-out remainder, and score against the measured truth.
    The diagonal is (1, 1) by the self-synthesis convention."""
    leads = [l for l in STANDARD_12 if l in record.leads]
    if len(leads) != 12:
        raise LeadMissing("accuracy matrix needs all 12 standard leads")
    _check_windows(record, protocol)
    lib = build_library(record, protocol.train_window_s, leads=leads,
                        preprocess=protocol.preprocess)
    eval_raw, eval_ref = _eval_slices(record, protocol)
    return _grid(record, protocol, leads, lib, eval_raw, eval_ref, lag_correction, {})


def improvement_report(record: MultiLeadRecord,
                       protocol: EvalProtocol = EvalProtocol()) -> EvaluationReport:
    """Run the grid twice, with the predicted lag and with it forced to
    zero, and report the deltas."""
    leads = [l for l in STANDARD_12 if l in record.leads]
    if len(leads) != 12:
        raise LeadMissing("improvement report needs all 12 standard leads")
    _check_windows(record, protocol)
    lib = build_library(record, protocol.train_window_s, leads=leads,
                        preprocess=protocol.preprocess)
    eval_raw, eval_ref = _eval_slices(record, protocol)
    contexts = {}
    with_c = _grid(record, protocol, leads, lib, eval_raw, eval_ref, True, contexts)
    without_c = _grid(record, protocol, leads, lib, eval_raw, eval_ref, False, contexts)
    return EvaluationReport(record_name=record.header.name,
                            with_correction=with_c, without_correction=without_c)
