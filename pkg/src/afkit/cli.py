"""Command-line pipeline: synth, preprocess, train, eval, benchmark, report.

Exit codes: 0 ok, 2 bad input, 3 empty pipeline, 4 training failure,
5 artifact mismatch.  A JSON config file (--config) may set any flag by
its destination name; explicit command-line values win.  Output files
never embed timestamps, so identical inputs and seeds reproduce identical
bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import benchstat, metrics, models, report, synth, train as train_mod
from .errors import (
    AfkitError,
    ConfigMismatch,
    EmptySplit,
    ShapeMismatch,
    TrainingDiverged,
)
from .io import load_manifest, load_record, split_records, validate_record
from .quality import (
    DEFAULT_BSQI_THRESHOLD,
    DEFAULT_MATCH_WINDOW_S,
    detect_r_peaks_energy,
    quality_gate,
    rr_from_peaks,
)
from .windowing import (
    PredictedSpan,
    align_to_grid,
    load_window_cache,
    save_window_cache,
    segment_beat_windows,
    segment_windows,
)

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_EMPTY_PIPELINE = 3
EXIT_TRAINING_FAILURE = 4
EXIT_ARTIFACT_MISMATCH = 5


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.scenario is not None:
        scenario = synth.load_scenario(args.scenario)
        if args.seed is not None:
            scenario.seed = args.seed
    else:
        scenario = synth.default_scenario(seed=args.seed if args.seed is not None else 0)
    manifest = synth.synth_dataset(scenario, args.out)
    _say(args, f"wrote {len(manifest.entries)} records")
    _say(args, str(Path(args.out) / "manifest.csv"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# preprocess
# ---------------------------------------------------------------------------

def cmd_preprocess(args) -> int:
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    quality_rows = []
    raw_by_split = defaultdict(list)
    rr_by_split = defaultdict(list)
    n_invalid = n_noisy = n_kept = 0
    fs_hz = 0.0

    for entry in manifest.entries:
        samples_path, sidecar_path = manifest.resolve(entry)
        record = load_record(samples_path, sidecar_path)
        violations = validate_record(record)
        if violations:
            n_invalid += 1
            continue
        bsqi_value, keep = quality_gate(
            record, threshold=args.bsqi_threshold, match_window_s=args.match_window_s
        )
        quality_rows.append((record.record_id, bsqi_value, keep))
        if not keep:
            n_noisy += 1
            continue
        n_kept += 1
        fs_hz = record.sampling_rate_hz
        raw_by_split[entry.split].extend(segment_windows(record))
        peaks = detect_r_peaks_energy(record.samples, record.sampling_rate_hz)
        if len(peaks) >= 2:
            rr = rr_from_peaks(peaks, record.sampling_rate_hz)
            rr_by_split[entry.split].extend(
                segment_beat_windows(rr, record.annotations, record_id=record.record_id)
            )

    with (out_dir / "quality.csv").open("w", newline="", encoding="utf-8") as fh:
        fh.write("record_id,bsqi,kept\n")
        for rid, value, keep in quality_rows:
            fh.write(f"{rid},{value:.6f},{str(keep).lower()}\n")

    for split in ("train", "validation", "test"):
        save_window_cache(out_dir / f"{split}_raw.bin", raw_by_split.get(split, []),
                          fs_hz=fs_hz, kind=0)
        save_window_cache(out_dir / f"{split}_rr.bin", rr_by_split.get(split, []), kind=1)

    total = len(manifest.entries)
    _say(args, f"records: {total} total, {n_invalid} excluded, {n_noisy} too noisy, {n_kept} kept")
    for split in ("train", "validation", "test"):
        _say(args, f"{split}: {len(raw_by_split.get(split, []))} raw windows, "
                   f"{len(rr_by_split.get(split, []))} beat windows")
    if n_kept == 0:
        print("no records survived preprocessing", file=sys.stderr)
        return EXIT_EMPTY_PIPELINE
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    windows_dir = Path(args.windows)
    kind = "raw" if args.model == "raw" else "rr"
    train_windows, _ = load_window_cache(windows_dir / f"train_{kind}.bin")
    val_windows, _ = load_window_cache(windows_dir / f"validation_{kind}.bin")
    if not train_windows or not val_windows:
        print("empty training or validation window cache", file=sys.stderr)
        return EXIT_EMPTY_PIPELINE

    if args.arch_config is not None:
        config = models.ModelConfig.from_dict(
            json.loads(Path(args.arch_config).read_text(encoding="utf-8"))
        )
    else:
        config = models.default_raw_config() if kind == "raw" else models.default_rr_config()
    seed = args.seed if args.seed is not None else 0
    model = models.build_model(config, seed=seed)

    cfg = train_mod.TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        pos_weight="auto" if args.pos_weight == "auto" else float(args.pos_weight),
        seed=seed,
    )
    model, threshold, history = train_mod.train(model, train_windows, val_windows, cfg)
    models.save_checkpoint(model, threshold, args.out)

    _say(args, f"pos_weight: {history.pos_weight:.4f}")
    _say(args, "epoch  train_loss  val_f1")
    for ep in history.epochs:
        _say(args, f"{ep.epoch:5d}  {ep.train_loss:10.4f}  {ep.val_f1:6.4f}")
    _say(args, f"threshold: {threshold:.6f}")
    _say(args, f"checkpoint: {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    model, threshold = models.load_checkpoint(args.checkpoint)
    kind = "raw" if model.config.input_kind == models.INPUT_KIND_RAW else "rr"
    windows, _ = load_window_cache(Path(args.windows) / f"{args.split}_{kind}.bin")
    if not windows:
        print(f"no {args.split} windows for a {kind} model", file=sys.stderr)
        return EXIT_EMPTY_PIPELINE

    x, y = train_mod.windows_to_arrays(windows)
    probs = train_mod.predict_probs(model, x)
    preds = probs >= threshold

    undefined_extra = []
    try:
        auroc_value = metrics.auroc(probs, y)
    except AfkitError:
        auroc_value = 0.0
        undefined_extra.append("auroc")
    win_report = metrics.confusion_metrics(preds, y, threshold=threshold,
                                           auroc_value=auroc_value)

    by_record: dict[str, list] = defaultdict(list)
    for w, p in zip(windows, preds):
        by_record[w.record_id].append((w, int(p)))
    patients = []
    for rid, pairs in sorted(by_record.items()):
        ws = [w for w, _ in pairs]
        patients.append(
            metrics.PatientWindows(
                record_id=rid,
                pred_labels=np.array([p for _, p in pairs], dtype=np.float64),
                ref_labels=np.array([w.label for w in ws], dtype=np.float64),
                lengths_s=np.array([w.end_s - w.start_s for w in ws]),
            )
        )
    summary = metrics.patient_report(patients)

    out_dir = Path(args.out)
    payload = win_report.to_dict()
    payload["undefined"] = sorted(set(payload["undefined"]) | set(undefined_extra))
    payload["n_windows"] = len(windows)
    payload["n_records"] = len(patients)
    payload["abs_e_af"] = {
        "median": summary.median_abs_e_af,
        "q1": summary.q1_abs_e_af,
        "q3": summary.q3_abs_e_af,
    }
    _write_json(out_dir / "metrics.json", payload)
    report.write_patients_csv(summary.reports, out_dir / "patients.csv")

    _say(args, f"windows: {len(windows)}  threshold: {threshold:.4f}")
    _say(args, f"se={win_report.se:.4f} sp={win_report.sp:.4f} ppv={win_report.ppv:.4f} "
               f"f1={win_report.f1:.4f} auroc={auroc_value:.4f}")
    _say(args, f"|E_AF| median {summary.median_abs_e_af:.3f}% "
               f"(Q1 {summary.q1_abs_e_af:.3f}% - Q3 {summary.q3_abs_e_af:.3f}%)")
    _say(args, str(out_dir / "metrics.json"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------

def _model_spans(model, threshold, record) -> list[PredictedSpan]:
    """Predicted spans of one model over one record."""
    if model.config.input_kind == models.INPUT_KIND_RAW:
        windows = segment_windows(record)
        if not windows:
            return []
        x, _ = train_mod.windows_to_arrays(windows)
        preds = train_mod.predict_probs(model, x) >= threshold
        return [
            PredictedSpan(w.start_s, w.end_s, int(p)) for w, p in zip(windows, preds)
        ]
    peaks = detect_r_peaks_energy(record.samples, record.sampling_rate_hz)
    if len(peaks) < 2:
        return []
    rr = rr_from_peaks(peaks, record.sampling_rate_hz)
    beat_windows = segment_beat_windows(rr, record.annotations, record_id=record.record_id)
    if not beat_windows:
        return []
    x, _ = train_mod.windows_to_arrays(beat_windows)
    preds = train_mod.predict_probs(model, x) >= threshold
    return [
        PredictedSpan(w.start_s, w.end_s, int(p)) for w, p in zip(beat_windows, preds)
    ]


def cmd_benchmark(args) -> int:
    model_a, thr_a = models.load_checkpoint(args.checkpoint_a)
    model_b, thr_b = models.load_checkpoint(args.checkpoint_b)
    manifest = load_manifest(args.manifest)

    grids = []
    for record in split_records(manifest, args.split):
        if validate_record(record):
            continue
        _, keep = quality_gate(record, threshold=args.bsqi_threshold,
                               match_window_s=args.match_window_s)
        if not keep:
            continue
        spans = {
            "model_a": _model_spans(model_a, thr_a, record),
            "model_b": _model_spans(model_b, thr_b, record),
        }
        grids.append(
            align_to_grid(record.duration_s, record.annotations, spans,
                          record_id=record.record_id)
        )
    if len(grids) < 2:
        print("fewer than 2 usable benchmark records", file=sys.stderr)
        return EXIT_EMPTY_PIPELINE

    seed = args.seed if args.seed is not None else 0
    result = benchstat.bootstrap_f1(
        grids, "model_a", "model_b", n_iter=args.n_iter, frac=args.frac, seed=seed
    )
    summary = benchstat.compare_models(result, alpha=args.alpha)

    def dist_stats(values: np.ndarray) -> dict:
        q1, med, q3 = np.quantile(values, [0.25, 0.5, 0.75])
        return {"median": float(med), "q1": float(q1), "q3": float(q3)}

    payload = {
        "model_a": {"checkpoint": str(args.checkpoint_a),
                    "input_kind": model_a.config.input_kind,
                    "f1": dist_stats(result.f1_a)},
        "model_b": {"checkpoint": str(args.checkpoint_b),
                    "input_kind": model_b.config.input_kind,
                    "f1": dist_stats(result.f1_b)},
        "u_statistic": summary.u_statistic,
        "p_value": summary.p_value,
        "winner": summary.winner,
        "alpha": args.alpha,
        "n_iter": args.n_iter,
        "frac": args.frac,
        "seed": seed,
        "n_records": len(grids),
    }
    out_dir = Path(args.out)
    _write_json(out_dir / "benchmark.json", payload)
    if args.dump_distributions:
        with (out_dir / "bootstrap_f1.csv").open("w", encoding="utf-8") as fh:
            fh.write("iteration,f1_a,f1_b\n")
            for k in range(result.n_iter):
                fh.write(f"{k},{result.f1_a[k]:.6f},{result.f1_b[k]:.6f}\n")

    _say(args, f"median F1: model_a {summary.median_f1_a:.4f}, "
               f"model_b {summary.median_f1_b:.4f}")
    _say(args, f"p={summary.p_value:.3g} winner={summary.winner}")
    _say(args, str(out_dir / "benchmark.json"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def cmd_report(args) -> int:
    reports = report.read_patients_csv(args.patients)
    out_dir = Path(args.out)
    report.write_histogram_csv(reports, out_dir / "histogram.csv")
    report.render_histogram_figure(
        reports, out_dir / "histogram.png",
        title="Absolute AF-burden estimation error by severity group",
    )
    _say(args, str(out_dir / "histogram.csv"))
    _say(args, str(out_dir / "histogram.png"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser & dispatch
# ---------------------------------------------------------------------------

def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="afkit",
        description="AF detection and AF-burden pipeline over single-lead ECG",
    )
    parser.add_argument("--config", type=str, default=None,
                        help="JSON file presetting any flag by destination name")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")

    # Global flags are accepted before or after the subcommand; SUPPRESS
    # keeps the subparser from overwriting values parsed at the top level.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=argparse.SUPPRESS)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    sub = parser.add_subparsers(dest="command", required=True)
    commands: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("synth", help="generate a synthetic dataset", parents=[common])
    p.add_argument("--scenario", type=str, default=None, help="scenario JSON file")
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)
    commands["synth"] = p

    p = sub.add_parser("preprocess", parents=[common], help="validate, quality-gate, and window records")
    p.add_argument("--manifest", type=str, required=True)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--bsqi-threshold", type=float, default=DEFAULT_BSQI_THRESHOLD)
    p.add_argument("--match-window-s", type=float, default=DEFAULT_MATCH_WINDOW_S)
    p.set_defaults(func=cmd_preprocess)
    commands["preprocess"] = p

    p = sub.add_parser("train", parents=[common], help="train a model on cached windows")
    p.add_argument("--windows", type=str, required=True,
                   help="directory holding the preprocess window caches")
    p.add_argument("--model", choices=["raw", "rr"], required=True)
    p.add_argument("--out", type=str, required=True, help="checkpoint output path")
    p.add_argument("--arch-config", type=str, default=None,
                   help="architecture config JSON overriding the defaults")
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--pos-weight", type=str, default="auto")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)
    commands["train"] = p

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on cached windows")
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--windows", type=str, required=True)
    p.add_argument("--split", type=str, default="test")
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(func=cmd_eval)
    commands["eval"] = p

    p = sub.add_parser("benchmark", parents=[common], help="paired 5-second-grid benchmark of two checkpoints")
    p.add_argument("--checkpoint-a", type=str, required=True)
    p.add_argument("--checkpoint-b", type=str, required=True)
    p.add_argument("--manifest", type=str, required=True)
    p.add_argument("--split", type=str, default="test")
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--n-iter", type=int, default=1000)
    p.add_argument("--frac", type=float, default=0.8)
    p.add_argument("--alpha", type=float, default=benchstat.DEFAULT_ALPHA)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--bsqi-threshold", type=float, default=DEFAULT_BSQI_THRESHOLD)
    p.add_argument("--match-window-s", type=float, default=DEFAULT_MATCH_WINDOW_S)
    p.add_argument("--dump-distributions", action="store_true")
    p.set_defaults(func=cmd_benchmark)
    commands["benchmark"] = p

    p = sub.add_parser("report", parents=[common], help="burden-error histogram CSV + figure")
    p.add_argument("--patients", type=str, required=True, help="patients.csv from eval")
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(func=cmd_report)
    commands["report"] = p

    return parser, commands


def _apply_config_file(parser, commands, argv) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=str, default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return
    path = Path(known.config)
    if not path.is_file():
        raise AfkitError(f"config file not found: {path}")
    try:
        overrides = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise AfkitError(f"config file is not valid JSON: {path}") from exc
    if not isinstance(overrides, dict):
        raise AfkitError("config file must hold a JSON object of flag values")

    command = next((a for a in argv if a in commands), None)
    valid_dests = {a.dest for a in parser._actions}
    if command is not None:
        valid_dests |= {a.dest for a in commands[command]._actions}
    unknown = set(overrides) - valid_dests
    if unknown:
        raise AfkitError(f"unknown config keys: {sorted(unknown)}")
    top = {k: v for k, v in overrides.items() if k in {a.dest for a in parser._actions}}
    parser.set_defaults(**top)
    if command is not None:
        sub_overrides = {k: v for k, v in overrides.items() if k not in top}
        commands[command].set_defaults(**sub_overrides)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser, commands = build_parser()
    try:
        _apply_config_file(parser, commands, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING_FAILURE
    except (ConfigMismatch, ShapeMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT_MISMATCH
    except EmptySplit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY_PIPELINE
    except (AfkitError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
