"""Command-line surface: ingest, train, synth, eval, simulate, plot.

Exit codes: 0 success, 2 input/parse problems, 3 training failures,
4 synthesis/evaluation failures, 1 anything unexpected.  All randomness
flows from --seed, and every artifact (JSON, CSV, SVG) is byte-identical
across runs with the same inputs and seed.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import errors as err
from .delineate import detect_r_peaks
from .dtw import DtwConfig
from .forest import ForestConfig, load_model, model_to_json, save_model
from .leads import STANDARD_12, LeadId, parse_lead
from .metrics import EvalProtocol, accuracy_matrix, improvement_report
from .preprocess import PreprocessConfig, preprocess_signal
from .recordio import (
    MultiLeadRecord,
    load_record,
    make_record,
    read_record_csv,
    slice_record,
    write_record_csv,
)
from .simgen import (
    HandheldSession,
    SynthConfig,
    generate_synthetic_record,
    session_kappas,
    simulate_handheld_session,
)
from .svgplot import svg_heatmap, svg_time_series, svg_vcg_loop
from .synth import SynthesisConfig, build_library, synthesize_all, train_lag_models
from .vcg import record_to_vcg

_INPUT_ERRORS = (
    err.MalformedHeader, err.UnsupportedFormat, err.TruncatedPayload, err.GainZero,
    err.UnknownLead, err.IoFailure, err.OutOfRange, err.InvalidConfig,
    err.ScheduleOutOfRange, err.SignalTooShort, err.InvalidCutoffs,
)
_TRAIN_ERRORS = (err.InsufficientBeats, err.InsufficientData, err.LeadMissing)
_SYNTH_ERRORS = (
    err.NoBeatsFound, err.ModelMissing, err.RecordTooShort, err.DegenerateTarget,
    err.EmptyLibrary, err.EmptySequence, err.ZeroVariance, err.LengthMismatch,
    err.MissingLead, err.WindowOutOfRange, err.MissingLandmark,
)


def load_any_record(path: str) -> MultiLeadRecord:
    """Load a record from a .csv file or a WFDB .hea/.dat base path."""
    p = Path(path)
    if p.suffix == ".csv":
        return read_record_csv(p, name=p.stem)
    if p.suffix in (".hea", ".dat"):
        p = p.with_suffix("")
    return load_record(p)


# ---------------------------------------------------------------------------
# configuration file handling (flat key-value with [section] headers)

def load_config_file(path: str | None):
    cp = configparser.ConfigParser()
    if path:
        read = cp.read(path)
        if not read:
            raise err.IoFailure(f"config file {path!r} not readable")
    return cp


def _cfg_get(cp, section, key, cast, default):
    if cp.has_option(section, key):
        raw = cp.get(section, key)
        if raw == "":
            return None
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    return default


def build_protocol(cp, args) -> EvalProtocol:
    pre = PreprocessConfig(
        band_low_hz=_cfg_get(cp, "preprocess", "band_low_hz", float, 0.5),
        band_high_hz=_cfg_get(cp, "preprocess", "band_high_hz", float, 40.0),
        median_win1_s=_cfg_get(cp, "preprocess", "median_win1_s", float, 0.2),
        median_win2_s=_cfg_get(cp, "preprocess", "median_win2_s", float, 0.6),
        enable_baseline=_cfg_get(cp, "preprocess", "enable_baseline", bool, True),
        enable_bandpass=_cfg_get(cp, "preprocess", "enable_bandpass", bool, True),
    )
    dtw = DtwConfig(
        window_frac=_cfg_get(cp, "dtw", "window_frac", float, 0.15),
        normalize=_cfg_get(cp, "dtw", "normalize", bool, True),
        znorm=_cfg_get(cp, "dtw", "znorm", bool, True),
    )
    forest = ForestConfig(
        n_trees=_cfg_get(cp, "forest", "n_trees", int, 100),
        m_features=_cfg_get(cp, "forest", "m_features", int, None),
        min_leaf=_cfg_get(cp, "forest", "min_leaf", int, 5),
        max_depth=_cfg_get(cp, "forest", "max_depth", int, None),
        seed=0,
    )
    train_w = _cfg_get(cp, "pipeline", "train_window_s", float, 60.0)
    eval_w = _cfg_get(cp, "pipeline", "eval_window_s", float, None)
    clamp = _cfg_get(cp, "pipeline", "drift_clamp_ms", float, 100.0)
    seed = _cfg_get(cp, "pipeline", "seed", int, 0)

    if getattr(args, "train_window_s", None) is not None:
        train_w = args.train_window_s
    if getattr(args, "eval_window_s", None) is not None:
        eval_w = args.eval_window_s
    if getattr(args, "seed", None) is not None:
        seed = args.seed
    return EvalProtocol(
        train_window_s=train_w, eval_window_s=eval_w, preprocess=pre, dtw=dtw,
        forest=forest, drift_clamp_ms=clamp, seed=seed,
    )


def _synthesis_config(protocol: EvalProtocol, lag_correction: bool) -> SynthesisConfig:
    return SynthesisConfig(
        preprocess=protocol.preprocess, dtw=protocol.dtw,
        forest=replace(protocol.forest, seed=protocol.seed),
        drift_clamp_ms=protocol.drift_clamp_ms, lag_correction=lag_correction,
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _header_json(record: MultiLeadRecord) -> str:
    doc = {
        "name": record.header.name,
        "fs": record.fs,
        "n_samples": record.n_samples,
        "duration_s": record.duration,
        "start_time_s": record.start_time,
        "leads": [str(l) for l in record.leads],
    }
    return json.dumps(doc, sort_keys=True, indent=1)


# ---------------------------------------------------------------------------
# subcommands

def cmd_ingest(args) -> int:
    out = _out_dir(args)
    for path in args.inputs:
        record = load_any_record(path)
        name = record.header.name
        write_record_csv(record, out / f"{name}.csv")
        (out / f"{name}.header.json").write_text(_header_json(record))
        try:
            ref_lead = LeadId.II if LeadId.II in record.leads else record.leads[0]
            x = preprocess_signal(record.lead(ref_lead), record.fs)
            beats = len(detect_r_peaks(x, record.fs))
        except err.LeadSynthError:
            beats = None
        print(
            f"{name}: {len(record.leads)} leads, fs={record.fs:g} Hz, "
            f"{record.duration:.1f} s, beats={'n/a' if beats is None else beats}"
        )
    return 0


def cmd_train(args) -> int:
    cp = load_config_file(args.config)
    protocol = build_protocol(cp, args)
    record = load_any_record(args.record)
    current = parse_lead(args.current_lead)
    lib = build_library(record, protocol.train_window_s, preprocess=protocol.preprocess)
    models = train_lag_models(lib, current,
                              forest=replace(protocol.forest, seed=protocol.seed))
    out = _out_dir(args)
    summary = {}
    for (lead_i, lead_j), model in sorted(models.items(), key=lambda kv: str(kv[0][0])):
        fname = f"lagmodel_{lead_i}_from_{lead_j}.json"
        save_model(model, out / fname)
        summary[str(lead_i)] = {
            "file": fname,
            "n": model.n_samples,
            "oob_rmse_ms": model.oob_rmse_ms,
            "importances": dict(zip(model.feature_names, model.importances.tolist())),
        }
    (out / "training_summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1))
    print(f"trained {len(models)} lag models -> {out}")
    return 0


def _load_models(models_dir: str, current: LeadId) -> dict:
    models = {}
    for path in sorted(Path(models_dir).glob(f"lagmodel_*_from_{current}.json")):
        model = load_model(path)
        models[model.lead_pair] = model
    if not models:
        raise err.ModelMissing(f"no lag models for current lead {current} in {models_dir}")
    return models


def cmd_synth(args) -> int:
    cp = load_config_file(args.config)
    protocol = build_protocol(cp, args)
    current = parse_lead(args.current_lead)

    historic = load_any_record(args.historic)
    lib = build_library(historic, protocol.train_window_s, preprocess=protocol.preprocess)

    current_rec = load_any_record(args.current)
    if current in current_rec.leads:
        signal = current_rec.lead(current)
    elif len(current_rec.leads) == 1:
        signal = current_rec.data[0]
    else:
        raise err.LeadMissing(f"current record lacks lead {current}")

    lag_on = not args.no_lag_correction
    if args.models:
        models = _load_models(args.models, current)
    elif lag_on:
        models = train_lag_models(lib, current,
                                  forest=replace(protocol.forest, seed=protocol.seed))
    else:
        models = {}

    cfg = _synthesis_config(protocol, lag_on)
    result = synthesize_all(signal, current_rec.fs, current, lib, models, cfg)

    out = _out_dir(args)
    leads = [l for l in STANDARD_12 if l in result]
    n = min(result[l].samples.size for l in leads)
    data = np.vstack([result[l].samples[:n] for l in leads])
    bundle = make_record(f"synth_from_{current}", current_rec.fs, leads, data, adc_res=0)
    write_record_csv(bundle, out / "synthesized_12lead.csv")
    (out / "synthesized_12lead.header.json").write_text(_header_json(bundle))

    with open(out / "provenance.jsonl", "w", encoding="utf-8") as fh:
        for lead in leads:
            for prov in result[lead].beats:
                doc = {"lead": str(lead)}
                doc.update(prov.as_dict())
                fh.write(json.dumps(doc, sort_keys=True) + "\n")

    if args.svg:
        t = np.arange(n) / current_rec.fs
        series = [("current " + str(current), t, result[current].samples[:n])]
        other = next(l for l in leads if l != current)
        series.append(("synthesized " + str(other), t, result[other].samples[:n]))
        (out / "synth_overlay.svg").write_text(
            svg_time_series(series, title=f"synthesis from lead {current}"))
    print(f"synthesized {len(leads)} leads -> {out}")
    return 0


def cmd_eval(args) -> int:
    cp = load_config_file(args.config)
    protocol = build_protocol(cp, args)
    record = load_any_record(args.record)
    out = _out_dir(args)
    labels = [str(l) for l in STANDARD_12]

    if args.compare_correction:
        report = improvement_report(record, protocol)
        (out / "report.json").write_text(report.to_json())
        (out / "report.md").write_text(report.to_markdown())
        matrix = report.with_correction
        print(
            f"mean rho {report.with_correction.mean_rho:.3f} with correction, "
            f"{report.without_correction.mean_rho:.3f} without "
            f"(delta {report.delta_mean_rho:+.3f})"
        )
    else:
        matrix = accuracy_matrix(record, protocol)
        print(
            f"mean R2 {matrix.mean_r2:.3f} ({matrix.std_r2:.3f}), "
            f"mean rho {matrix.mean_rho:.3f} ({matrix.std_rho:.3f})"
        )
    (out / "accuracy.json").write_text(matrix.to_json())
    (out / "accuracy.md").write_text(matrix.to_markdown())
    (out / "accuracy_rho.svg").write_text(
        svg_heatmap(matrix.rho, labels, title="accuracy (rho)"))
    return 0


def _parse_schedule(text: str) -> HandheldSession:
    segments = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        bits = part.split(":")
        if len(bits) != 3:
            raise err.ScheduleOutOfRange(f"bad schedule segment {part!r}")
        lead = parse_lead(bits[0])
        segments.append((lead, float(bits[1]), float(bits[2])))
    return HandheldSession(segments=tuple(segments))


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    gt = None
    if args.simgen:
        cfg = SynthConfig(
            fs=args.fs, duration_s=args.duration_s,
            snr_db=args.snr_db, twa_frac=args.twa_frac,
        )
        record, gt = generate_synthetic_record(cfg, seed=args.seed or 0)
        write_record_csv(record, out / f"{record.header.name}.csv")
        (out / f"{record.header.name}.header.json").write_text(_header_json(record))
        (out / "groundtruth.json").write_text(gt.to_json())
    else:
        if not args.record:
            raise err.InvalidConfig("simulate needs a record path or --simgen")
        record = load_any_record(args.record)

    session = _parse_schedule(args.schedule) if args.schedule else None
    doc = {"record": record.header.name, "segments": []}
    if session is not None:
        slices = simulate_handheld_session(record, session)
        kappas = session_kappas(session, gt.r_times_s) if gt is not None else None
        for k, ((lead, t0, t1), seg) in enumerate(zip(session.segments, slices)):
            fname = f"segment_{k:02d}_{lead}.csv"
            write_record_csv(seg, out / fname)
            doc["segments"].append({
                "lead": str(lead), "t_start_s": t0, "t_end_s": t1, "file": fname,
                "kappa": None if kappas is None else kappas[k],
            })
    (out / "schedule.json").write_text(json.dumps(doc, sort_keys=True, indent=1))
    print(f"simulated {len(doc['segments'])} segments -> {out}")
    return 0


def cmd_plot(args) -> int:
    out = _out_dir(args)
    if args.mode == "overlay":
        ref = load_any_record(args.inputs[0])
        est = load_any_record(args.inputs[1])
        lead = parse_lead(args.lead) if args.lead else ref.leads[0]
        a = ref.lead(lead)
        b = est.lead(lead) if lead in est.leads else est.data[0]
        n = min(a.size, b.size)
        t = np.arange(n) / ref.fs
        svg = svg_time_series(
            [("measured", t, a[:n]), ("synthesized", t, b[:n])],
            title=f"lead {lead}: measured vs synthesized",
        )
        (out / "overlay.svg").write_text(svg)
    elif args.mode == "vcg":
        record = load_any_record(args.inputs[0])
        v = record_to_vcg(record)
        (out / "vcg_loop.svg").write_text(
            svg_vcg_loop(v.x, v.y, title="frontal-plane VCG loop"))
    else:
        raise err.InvalidConfig(f"unknown plot mode {args.mode!r}")
    print(f"plotted -> {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="leadsynth",
        description="12-lead ECG synthesis from a single recorded lead",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", default=None, help="key-value config file")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("ingest", help="parse records into the canonical CSV bundle")
    sp.add_argument("inputs", nargs="+")
    common(sp, config=False)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("train", help="train the 11 per-pair lag models")
    sp.add_argument("record")
    sp.add_argument("--current-lead", required=True)
    sp.add_argument("--train-window-s", type=float, default=None)
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("synth", help="synthesize the missing 11 leads")
    sp.add_argument("--historic", required=True, help="synchronous historical record")
    sp.add_argument("--current", required=True, help="current single-lead record")
    sp.add_argument("--current-lead", required=True)
    sp.add_argument("--models", default=None, help="directory of trained lag models")
    sp.add_argument("--train-window-s", type=float, default=None)
    sp.add_argument("--no-lag-correction", action="store_true")
    sp.add_argument("--svg", action="store_true", help="emit overlay SVG strips")
    common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("eval", help="12x12 accuracy matrix on a synchronous record")
    sp.add_argument("record")
    sp.add_argument("--train-window-s", type=float, default=None)
    sp.add_argument("--eval-window-s", type=float, default=None)
    sp.add_argument("--compare-correction", action="store_true",
                    help="also run with lag correction disabled and report deltas")
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("simulate", help="sequential single-lead session simulator")
    sp.add_argument("record", nargs="?", default=None)
    sp.add_argument("--simgen", action="store_true", help="generate a synthetic record")
    sp.add_argument("--fs", type=float, default=250.0)
    sp.add_argument("--duration-s", type=float, default=90.0)
    sp.add_argument("--snr-db", type=float, default=None)
    sp.add_argument("--twa-frac", type=float, default=0.0)
    sp.add_argument("--schedule", default=None,
                    help="comma-separated LEAD:t0:t1 segments, e.g. II:0:30,I:32:62")
    common(sp, config=False)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("plot", help="deterministic SVG plots")
    sp.add_argument("mode", choices=["overlay", "vcg"])
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--lead", default=None)
    common(sp, config=False)
    sp.set_defaults(func=cmd_plot)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _TRAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _SYNTH_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except err.LeadSynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"unexpected error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
