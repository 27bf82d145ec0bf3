"""Command-line entry point exposing the pipeline as subcommands.

Exit codes: 0 success, 1 domain error (bad data or config, one-line
diagnostic on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import audio_io, dataset as ds, experiments, models, synth
from .errors import PipelineError
from .features import MfccConfig
from .nn import TrainConfig, evaluate, write_metrics_csv

SAMPLING_CHOICES = ("none", "oversample", "undersample")


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=0, help="master PRNG seed")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")


def _add_mfcc_flags(parser):
    group = parser.add_argument_group("mfcc")
    group.add_argument("--frame-len", type=int, default=2048)
    group.add_argument("--hop", type=int, default=512)
    group.add_argument("--n-mels", type=int, default=40)
    group.add_argument("--n-mfcc", type=int, default=13)
    group.add_argument("--fmin", type=float, default=0.0)
    group.add_argument("--fmax", type=float, default=None)
    group.add_argument("--log-floor", type=float, default=1e-10)


def _mfcc_from_args(args) -> MfccConfig:
    return MfccConfig(
        frame_len=args.frame_len, hop=args.hop, n_mels=args.n_mels,
        n_mfcc=args.n_mfcc, fmin=args.fmin, fmax=args.fmax, log_floor=args.log_floor,
    )


def _add_train_flags(parser):
    group = parser.add_argument_group("training")
    group.add_argument("--batch-size", type=int, default=32)
    group.add_argument("--max-epochs", type=int, default=100)
    group.add_argument("--patience", type=int, default=10)
    group.add_argument("--lr", type=float, default=1e-3)


def _train_cfg_from_args(args) -> TrainConfig:
    return TrainConfig(
        batch_size=args.batch_size, max_epochs=args.max_epochs,
        patience=args.patience, lr=args.lr, seed=args.seed,
    )


def record_artifacts(out_dir, command: str, paths) -> None:
    """Append produced files to <out>/artifacts.json, keyed by subcommand."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index_path = out_dir / "artifacts.json"
    index = {}
    if index_path.exists():
        index = json.loads(index_path.read_text(encoding="utf-8"))
    rel = sorted(str(Path(p).resolve().relative_to(out_dir.resolve())) for p in paths)
    index.setdefault(command, [])
    index[command] = sorted(set(index[command]) | set(rel))
    index_path.write_text(json.dumps(index, indent=2), encoding="utf-8")


def cmd_synth(args) -> int:
    spec = synth.SynthSpec(
        n_speakers=args.speakers,
        minutes_per_speaker=args.minutes,
        sample_rate=args.rate,
        seed=args.seed,
        native_f0=tuple(args.native_f0),
        native_formant=tuple(args.native_formant),
        nonnative_f0=tuple(args.nonnative_f0),
        nonnative_formant=tuple(args.nonnative_formant),
        jitter=args.jitter,
        noise_level=args.noise_level,
    )
    paths = synth.generate(spec, args.out)
    record_artifacts(args.out, "synth", paths)
    print(f"wrote {len(paths)} files under {args.out}")
    return 0


def cmd_ingest(args) -> int:
    manifest = ds.build_manifest(
        {"native": args.native, "non_native": args.nonnative},
        args.duration,
        _mfcc_from_args(args),
        sample_rate=args.rate,
        pad_final=args.pad_final,
        jobs=args.jobs,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"manifest_{args.duration:g}s.json"
    ds.save_manifest(manifest, path)
    record_artifacts(args.out, "ingest", [path])
    counts = ds.class_counts(manifest.entries, len(manifest.mapping))
    print(json.dumps({
        "manifest": str(path),
        "entries": len(manifest.entries),
        "counts": dict(zip(manifest.mapping, counts)),
    }, indent=2))
    return 0


def cmd_split(args) -> int:
    manifest = ds.load_manifest(args.manifest)
    spec = ds.SplitSpec(
        holdout_fraction=args.holdout,
        inner_fractions=ds.scheme_for_model(args.model),
        seed=args.seed,
        speaker_disjoint=args.speaker_disjoint,
    )
    parts = ds.split(manifest, spec)
    args.out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, entries in parts.partitions().items():
        part = ds.Manifest(
            mapping=manifest.mapping, duration_s=manifest.duration_s,
            mfcc_config=manifest.mfcc_config, entries=entries,
        )
        path = args.out / f"{name}.json"
        ds.save_manifest(part, path)
        written.append(path)
    record_artifacts(args.out, "split", written)
    print(json.dumps({name: len(e) for name, e in parts.partitions().items()}, indent=2))
    return 0


def cmd_balance(args) -> int:
    manifest = ds.load_manifest(args.manifest)
    balanced = ds.balance(manifest.entries, args.method, args.seed)
    out_manifest = ds.Manifest(
        mapping=manifest.mapping, duration_s=manifest.duration_s,
        mfcc_config=manifest.mfcc_config, entries=balanced,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "balanced.json"
    ds.save_manifest(out_manifest, path)
    record_artifacts(args.out, "balance", [path])
    counts = ds.class_counts(balanced, len(manifest.mapping))
    print(json.dumps({
        "manifest": str(path),
        "counts": dict(zip(manifest.mapping, counts)),
    }, indent=2))
    return 0


def cmd_train(args) -> int:
    manifest = ds.load_manifest(args.manifest)
    result, trained = experiments.run_cell(
        manifest, args.model, args.sampling, args.seed,
        train_cfg=_train_cfg_from_args(args),
        holdout_fraction=args.holdout,
        speaker_disjoint=args.speaker_disjoint,
        balance_before_split=args.balance_before_split,
        sample_rate=args.rate,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    model_path = args.out / f"model_{result.cell_id}.npz"
    metrics_path = args.out / f"metrics_{result.cell_id}.csv"
    models.save_model(trained, model_path)
    write_metrics_csv(metrics_path, result.curves)
    record_artifacts(args.out, "train", [model_path, metrics_path])
    print(json.dumps({
        "model": str(model_path),
        "final_test_acc": result.final_test_acc,
        "best_val_loss": result.best_val_loss,
        "epochs": result.epochs,
        "stop_reason": result.stop_reason,
    }, indent=2))
    return 0


def cmd_eval(args) -> int:
    trained = models.load_model(args.model)
    manifest = ds.load_manifest(args.manifest)
    x, y = experiments.entries_to_arrays(manifest.entries, trained.stats)
    result = evaluate(trained.network, x, y, n_classes=len(trained.mapping))
    print(json.dumps({
        "accuracy": result.accuracy,
        "mean_loss": result.mean_loss,
        "confusion": result.confusion.tolist(),
    }, indent=2))
    return 0


def cmd_predict(args) -> int:
    trained = models.load_model(args.model)
    clip = audio_io.load_wav(args.wav)
    verdict = models.predict_track(trained, clip)
    print(json.dumps({
        "class": verdict.class_name,
        "per_segment": verdict.per_segment,
        "vote_counts": verdict.vote_counts,
        "mean_probs": verdict.mean_probs,
    }, indent=2))
    return 0


def cmd_grid(args) -> int:
    if args.config:
        cfg = experiments.GridConfig.from_dict(
            json.loads(Path(args.config).read_text(encoding="utf-8"))
        )
    else:
        cfg = experiments.GridConfig()
    if args.durations:
        cfg = replace(cfg, durations=tuple(float(d) for d in args.durations.split(",")))
    if args.samplings:
        cfg = replace(cfg, samplings=tuple(args.samplings.split(",")))
    if args.models:
        cfg = replace(cfg, model_kinds=tuple(args.models.split(",")))
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.no_cv:
        cfg = replace(cfg, cv_enabled=False)
    if args.balance_before_split:
        cfg = replace(cfg, balance_before_split=True)

    results = experiments.run_grid(cfg, args.data_root, args.out, jobs=args.jobs)
    counts = {}
    for duration in cfg.durations:
        path = Path(args.out) / "manifests" / f"{duration:g}s.json"
        if path.exists():
            counts[float(duration)] = len(ds.load_manifest(path).entries)
    cv_path = Path(args.out) / "cv_results.csv"
    produced = experiments.emit_report(
        results, Path(args.out) / "report", segment_counts=counts,
    )
    artifacts = [Path(args.out) / "results.csv", *produced.values()]
    if cv_path.exists():
        artifacts.append(cv_path)
    record_artifacts(args.out, "grid", artifacts)
    print(f"{len(results)} cells complete; report under {Path(args.out) / 'report'}")
    return 0


def cmd_cv(args) -> int:
    manifest = ds.load_manifest(args.manifest)
    result = experiments.run_cv(
        manifest, args.model, args.sampling,
        k=args.k, seed=args.seed,
        train_cfg=_train_cfg_from_args(args),
        holdout_fraction=args.holdout,
        holdout_accuracy=args.holdout_acc,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "cv_results.csv"
    experiments.write_cv_csv(path, [result])
    record_artifacts(args.out, "cv", [path])
    print(json.dumps({
        "fold_accuracies": result.fold_accuracies,
        "mean_accuracy": result.mean_accuracy,
        "std_accuracy": result.std_accuracy,
        "delta_vs_holdout": result.delta_vs_holdout,
    }, indent=2))
    return 0


def cmd_report(args) -> int:
    results = experiments.read_results_csv(args.results)
    cv_results = experiments.read_cv_csv(args.cv) if args.cv else None
    counts = None
    if args.manifests:
        counts = {}
        for path in sorted(Path(args.manifests).glob("*s.json")):
            manifest = ds.load_manifest(path)
            counts[manifest.duration_s] = len(manifest.entries)
    produced = experiments.emit_report(results, args.out, cv_results, counts)
    record_artifacts(args.out, "report", produced.values())
    print(f"report written under {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nli-speech",
        description="Native-language identification pipeline: synthesize, ingest, "
                    "train, and evaluate speech classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic two-class corpus")
    _add_common(p)
    p.add_argument("--speakers", type=int, default=20, help="speakers per class")
    p.add_argument("--minutes", type=float, default=1.0, help="minutes per speaker")
    p.add_argument("--rate", type=int, default=22050)
    p.add_argument("--native-f0", type=float, nargs=2, default=[100.0, 150.0])
    p.add_argument("--native-formant", type=float, nargs=2, default=[500.0, 900.0])
    p.add_argument("--nonnative-f0", type=float, nargs=2, default=[200.0, 300.0])
    p.add_argument("--nonnative-formant", type=float, nargs=2, default=[1200.0, 2000.0])
    p.add_argument("--jitter", type=float, default=0.01)
    p.add_argument("--noise-level", type=float, default=0.05)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="build a labeled MFCC manifest from WAV trees")
    _add_common(p)
    p.add_argument("--native", type=Path, required=True)
    p.add_argument("--nonnative", type=Path, required=True)
    p.add_argument("--duration", type=float, required=True, help="segment seconds")
    p.add_argument("--rate", type=int, default=audio_io.DEFAULT_PROCESSING_RATE)
    p.add_argument("--pad-final", action="store_true",
                   help="keep the trailing partial chunk, zero-padded")
    p.add_argument("--jobs", type=int, default=1)
    _add_mfcc_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="split a manifest into partitions")
    _add_common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--model", choices=models.MODEL_KINDS, default="ann",
                   help="scheme: ann=80:20, cnn/rnn=80:10:10")
    p.add_argument("--holdout", type=float, default=0.10)
    p.add_argument("--speaker-disjoint", action="store_true")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("balance", help="oversample or undersample a manifest")
    _add_common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--method", choices=("oversample", "undersample"), required=True)
    p.set_defaults(func=cmd_balance)

    p = sub.add_parser("train", help="train one model from a manifest")
    _add_common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--model", choices=models.MODEL_KINDS, required=True)
    p.add_argument("--sampling", choices=SAMPLING_CHOICES, default="none")
    p.add_argument("--holdout", type=float, default=0.10)
    p.add_argument("--speaker-disjoint", action="store_true")
    p.add_argument("--balance-before-split", action="store_true",
                   help="balance the whole dataset before splitting (leaky)")
    p.add_argument("--rate", type=int, default=audio_io.DEFAULT_PROCESSING_RATE)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a manifest")
    _add_common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one WAV track")
    _add_common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--wav", type=Path, required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("grid", help="run the duration x sampling x model grid")
    p.add_argument("--seed", type=int, default=None,
                   help="master PRNG seed (overrides the config file)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--data-root", type=Path, required=True,
                   help="directory with native/ and non_native/ WAV trees")
    p.add_argument("--config", type=Path, default=None, help="grid config JSON")
    p.add_argument("--durations", default=None, help="comma-separated seconds")
    p.add_argument("--samplings", default=None, help="comma-separated methods")
    p.add_argument("--models", default=None, help="comma-separated model kinds")
    p.add_argument("--no-cv", action="store_true")
    p.add_argument("--balance-before-split", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("cv", help="k-fold cross-validation for one configuration")
    _add_common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--model", choices=models.MODEL_KINDS, required=True)
    p.add_argument("--sampling", choices=SAMPLING_CHOICES, default="none")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--holdout", type=float, default=0.10)
    p.add_argument("--holdout-acc", type=float, default=None,
                   help="matching grid cell accuracy for the delta column")
    _add_train_flags(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("report", help="emit summary tables from results.csv")
    _add_common(p)
    p.add_argument("--results", type=Path, required=True)
    p.add_argument("--cv", type=Path, default=None, help="cv_results.csv to include")
    p.add_argument("--manifests", type=Path, default=None,
                   help="manifest cache dir for segment counts")
    p.set_defaults(func=cmd_report)

    return parser


def dispatch(argv) -> int:
    """Parse and run one invocation; returns the process exit code."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (PipelineError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
