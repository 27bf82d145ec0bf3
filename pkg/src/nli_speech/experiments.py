"""Duration x sampling x model experiment grid, k-fold CV, and report emission.

A grid cell is one (model, duration, sampling) combination trained and scored
on the 10% final-test holdout. Results append to results.csv as cells finish,
so an interrupted run resumes by skipping completed cell ids; a clean finish
rewrites the file in canonical grid order. With the default axes the grid has
7 x 3 x 3 = 63 cells, plus one cross-validation run per model kind at its
best cell: 66 runs total.
"""

from __future__ import annotations

import csv
import logging
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace, asdict
from pathlib import Path

import numpy as np

from . import dataset as ds
from .dataset import Manifest, SplitSpec, scheme_for_model
from .errors import ExperimentError, PipelineError
from .features import MfccConfig, NormStats, apply_normalizer, fit_normalizer
from .models import ModelSpec, TrainedModel, build
from .nn import TrainConfig, evaluate, train, write_metrics_csv

log = logging.getLogger(__name__)

RESULTS_HEADER = [
    "cell_id", "model", "duration_s", "sampling",
    "final_test_acc", "best_val_loss", "epochs", "wall_seconds", "seed",
]

CV_HEADER = [
    "model", "duration_s", "sampling", "k",
    "mean_accuracy", "std_accuracy", "delta_vs_holdout", "fold_accuracies", "seed",
]

DEFAULT_DURATIONS = (1, 3, 5, 10, 20, 30, 60)
DEFAULT_SAMPLINGS = ("none", "oversample", "undersample")
DEFAULT_MODEL_KINDS = ("ann", "cnn", "rnn")


@dataclass
class GridConfig:
    durations: tuple = DEFAULT_DURATIONS
    samplings: tuple = DEFAULT_SAMPLINGS
    model_kinds: tuple = DEFAULT_MODEL_KINDS
    cv_enabled: bool = True
    cv_k: int = 5
    master_seed: int = 0
    holdout_fraction: float = 0.10
    speaker_disjoint: bool = False
    balance_before_split: bool = False
    sample_rate: int = 22050
    mfcc: MfccConfig = field(default_factory=MfccConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    model_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.durations and self.samplings and self.model_kinds):
            raise ExperimentError("grid axes must all be non-empty")

    def cells(self) -> list:
        return [
            (kind, float(d), sampling)
            for kind in self.model_kinds
            for d in self.durations
            for sampling in self.samplings
        ]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mfcc"] = self.mfcc.to_dict()
        d["train"] = asdict(self.train)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GridConfig":
        d = dict(d)
        if "mfcc" in d:
            d["mfcc"] = MfccConfig.from_dict(d["mfcc"])
        if "train" in d:
            d["train"] = TrainConfig(**d["train"])
        for key in ("durations", "samplings", "model_kinds"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class ExperimentResult:
    cell_id: str
    model: str
    duration_s: float
    sampling: str
    final_test_acc: float
    best_val_loss: float
    epochs: int
    wall_seconds: float
    seed: int
    stop_reason: str = ""
    curves: list = field(default_factory=list)  # EpochMetrics, not serialized to the row


@dataclass
class CvResult:
    model: str
    duration_s: float
    sampling: str
    k: int
    fold_accuracies: list
    mean_accuracy: float
    std_accuracy: float
    delta_vs_holdout: float | None
    seed: int


def cell_id(model_kind: str, duration_s: float, sampling: str) -> str:
    return f"{model_kind}_{duration_s:g}s_{sampling}"


def cell_seed(master_seed: int, cid: str) -> int:
    ss = np.random.SeedSequence([int(master_seed), zlib.crc32(cid.encode("utf-8"))])
    return int(ss.generate_state(1, np.uint64)[0] & 0x7FFFFFFF)


def derived_seed(base: int, index: int) -> int:
    ss = np.random.SeedSequence([int(base), int(index)])
    return int(ss.generate_state(1, np.uint64)[0] & 0x7FFFFFFF)


def entries_to_arrays(entries, stats: NormStats):
    x = np.stack([apply_normalizer(e.mfcc, stats) for e in entries])
    y = np.array([e.label for e in entries], dtype=np.int64)
    return x, y


def prepare_cell_data(
    manifest: Manifest,
    model_kind: str,
    sampling: str,
    seed: int,
    holdout_fraction: float = 0.10,
    speaker_disjoint: bool = False,
    balance_before_split: bool = False,
):
    """Split, balance the training partition, and fit the normalizer.

    balance_before_split reproduces the leaky protocol of balancing the whole
    dataset first; the default balances only the training partition.
    """
    entries = manifest.entries
    if balance_before_split and sampling != "none":
        entries = ds.balance(entries, sampling, seed)
    work = Manifest(
        mapping=manifest.mapping,
        duration_s=manifest.duration_s,
        mfcc_config=manifest.mfcc_config,
        entries=entries,
    )
    spec = SplitSpec(
        holdout_fraction=holdout_fraction,
        inner_fractions=scheme_for_model(model_kind),
        seed=seed,
        speaker_disjoint=speaker_disjoint,
    )
    parts = ds.split(work, spec)
    if balance_before_split:
        train_entries = parts.train
    else:
        train_entries = ds.balance(parts.train, sampling, seed)
    stats = fit_normalizer([e.mfcc for e in train_entries])
    return parts, train_entries, stats


def run_cell(
    manifest: Manifest,
    model_kind: str,
    sampling: str,
    seed: int,
    train_cfg: TrainConfig | None = None,
    holdout_fraction: float = 0.10,
    speaker_disjoint: bool = False,
    balance_before_split: bool = False,
    sample_rate: int = 22050,
    model_overrides: dict | None = None,
):
    """Train one grid cell; returns (ExperimentResult, TrainedModel)."""
    t0 = time.perf_counter()
    parts, train_entries, stats = prepare_cell_data(
        manifest, model_kind, sampling, seed,
        holdout_fraction, speaker_disjoint, balance_before_split,
    )
    x_train, y_train = entries_to_arrays(train_entries, stats)
    x_val, y_val = entries_to_arrays(parts.val, stats)
    x_test, y_test = entries_to_arrays(parts.final_test, stats)

    spec = ModelSpec(
        kind=model_kind,
        input_shape=manifest.feature_shape,
        **(model_overrides or {}),
    )
    network = build(spec, seed)
    cfg = replace(train_cfg or TrainConfig(), seed=seed)
    network, metrics, stop_reason = train(network, (x_train, y_train), (x_val, y_val), cfg)
    final = evaluate(network, x_test, y_test)

    cid = cell_id(model_kind, manifest.duration_s, sampling)
    result = ExperimentResult(
        cell_id=cid,
        model=model_kind,
        duration_s=manifest.duration_s,
        sampling=sampling,
        final_test_acc=final.accuracy,
        best_val_loss=min(m.val_loss for m in metrics),
        epochs=len(metrics),
        wall_seconds=time.perf_counter() - t0,
        seed=seed,
        stop_reason=stop_reason,
        curves=metrics,
    )
    trained = TrainedModel(
        spec=spec,
        network=network,
        stats=stats,
        duration_s=manifest.duration_s,
        sample_rate=sample_rate,
        mapping=manifest.mapping,
        mfcc_config=manifest.mfcc_config,
    )
    return result, trained


def run_cv(
    manifest: Manifest,
    model_kind: str,
    sampling: str,
    k: int = 5,
    seed: int = 0,
    train_cfg: TrainConfig | None = None,
    holdout_fraction: float = 0.10,
    holdout_accuracy: float | None = None,
    model_overrides: dict | None = None,
) -> CvResult:
    """Stratified k-fold CV on the 90% that remains after the holdout.

    The holdout is removed with the same seeded draw as the matching grid
    cell, so delta_vs_holdout compares like for like.
    """
    _, rest = ds.split_holdout(manifest.entries, holdout_fraction, seed)
    pairs = ds.kfold_entries(rest, k, seed)
    accuracies = []
    for fold, (train_idx, val_idx) in enumerate(pairs):
        fold_seed = derived_seed(seed, fold)
        train_entries = ds.balance([rest[i] for i in train_idx], sampling, fold_seed)
        val_entries = [rest[i] for i in val_idx]
        stats = fit_normalizer([e.mfcc for e in train_entries])
        x_train, y_train = entries_to_arrays(train_entries, stats)
        x_val, y_val = entries_to_arrays(val_entries, stats)
        spec = ModelSpec(
            kind=model_kind,
            input_shape=manifest.feature_shape,
            **(model_overrides or {}),
        )
        network = build(spec, fold_seed)
        cfg = replace(train_cfg or TrainConfig(), seed=fold_seed)
        network, _, _ = train(network, (x_train, y_train), (x_val, y_val), cfg)
        accuracies.append(evaluate(network, x_val, y_val).accuracy)

    mean_acc = float(np.mean(accuracies))
    delta = None if holdout_accuracy is None else mean_acc - holdout_accuracy
    return CvResult(
        model=model_kind,
        duration_s=manifest.duration_s,
        sampling=sampling,
        k=k,
        fold_accuracies=accuracies,
        mean_accuracy=mean_acc,
        std_accuracy=float(np.std(accuracies)),
        delta_vs_holdout=delta,
        seed=seed,
    )


def _result_row(r: ExperimentResult) -> list:
    return [
        r.cell_id, r.model, f"{r.duration_s:g}", r.sampling,
        repr(r.final_test_acc), repr(r.best_val_loss),
        r.epochs, f"{r.wall_seconds:.3f}", r.seed,
    ]


def read_results_csv(path) -> list:
    results = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            results.append(
                ExperimentResult(
                    cell_id=row["cell_id"],
                    model=row["model"],
                    duration_s=float(row["duration_s"]),
                    sampling=row["sampling"],
                    final_test_acc=float(row["final_test_acc"]),
                    best_val_loss=float(row["best_val_loss"]),
                    epochs=int(row["epochs"]),
                    wall_seconds=float(row["wall_seconds"]),
                    seed=int(row["seed"]),
                )
            )
    return results


def write_results_csv(path, results) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for r in results:
            writer.writerow(_result_row(r))


def _grid_manifest(duration_s, data_root, cache_dir, cfg: GridConfig) -> Manifest:
    cache_path = Path(cache_dir) / f"{duration_s:g}s.json"
    if cache_path.exists():
        return ds.load_manifest(cache_path)
    root = Path(data_root)
    manifest = ds.build_manifest(
        {"native": root / "native", "non_native": root / "non_native"},
        duration_s,
        cfg.mfcc,
        sample_rate=cfg.sample_rate,
    )
    ds.save_manifest(manifest, cache_path)
    return manifest


def _run_cell_job(args):
    manifest_path, kind, sampling, seed, cfg_dict = args
    cfg = GridConfig.from_dict(cfg_dict)
    manifest = ds.load_manifest(manifest_path)
    result, _ = run_cell(
        manifest, kind, sampling, seed,
        train_cfg=cfg.train,
        holdout_fraction=cfg.holdout_fraction,
        speaker_disjoint=cfg.speaker_disjoint,
        balance_before_split=cfg.balance_before_split,
        sample_rate=cfg.sample_rate,
        model_overrides=cfg.model_overrides,
    )
    return result


def run_grid(cfg: GridConfig, data_root, out_dir, jobs: int = 1) -> list:
    """Run every pending grid cell, then the per-model CV runs if enabled.

    Results and per-cell epoch curves land under out_dir; cells already
    present in results.csv are skipped so interrupted runs resume.
    """
    out = Path(out_dir)
    curves_dir = out / "curves"
    manifest_dir = out / "manifests"
    for d in (out, curves_dir, manifest_dir):
        d.mkdir(parents=True, exist_ok=True)

    results_path = out / "results.csv"
    done = {}
    if results_path.exists():
        done = {r.cell_id: r for r in read_results_csv(results_path)}
        if done:
            log.info("resuming: %d cells already complete", len(done))

    cells = cfg.cells()
    manifests = {}
    for kind, duration, sampling in cells:
        if duration not in manifests:
            manifests[duration] = _grid_manifest(duration, data_root, manifest_dir, cfg)

    pending = [
        (kind, duration, sampling)
        for kind, duration, sampling in cells
        if cell_id(kind, duration, sampling) not in done
    ]
    new_results = {}
    failures = []

    def record(result: ExperimentResult) -> None:
        new_results[result.cell_id] = result
        is_new_file = not results_path.exists()
        with open(results_path, "a", newline="") as fh:
            writer = csv.writer(fh)
            if is_new_file:
                writer.writerow(RESULTS_HEADER)
            writer.writerow(_result_row(result))
        if result.curves:
            write_metrics_csv(curves_dir / f"{result.cell_id}.csv", result.curves)
        log.info(
            "cell %s: acc=%.4f epochs=%d (%s)",
            result.cell_id, result.final_test_acc, result.epochs, result.stop_reason,
        )

    if jobs > 1 and len(pending) > 1:
        cfg_dict = cfg.to_dict()
        job_args = [
            (
                str(manifest_dir / f"{duration:g}s.json"),
                kind,
                sampling,
                cell_seed(cfg.master_seed, cell_id(kind, duration, sampling)),
                cfg_dict,
            )
            for kind, duration, sampling in pending
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_cell_job, a) for a in job_args]
            for (kind, duration, sampling), future in zip(pending, futures):
                cid = cell_id(kind, duration, sampling)
                try:
                    record(future.result())
                except PipelineError as exc:
                    log.warning("cell %s failed: %s", cid, exc)
                    failures.append((cid, str(exc)))
    else:
        for kind, duration, sampling in pending:
            cid = cell_id(kind, duration, sampling)
            try:
                result, _ = run_cell(
                    manifests[duration], kind, sampling,
                    cell_seed(cfg.master_seed, cid),
                    train_cfg=cfg.train,
                    holdout_fraction=cfg.holdout_fraction,
                    speaker_disjoint=cfg.speaker_disjoint,
                    balance_before_split=cfg.balance_before_split,
                    sample_rate=cfg.sample_rate,
                    model_overrides=cfg.model_overrides,
                )
                record(result)
            except PipelineError as exc:
                log.warning("cell %s failed: %s", cid, exc)
                failures.append((cid, str(exc)))

    if failures:
        with open(out / "failures.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cell_id", "error"])
            writer.writerows(failures)

    all_results = []
    for kind, duration, sampling in cells:
        cid = cell_id(kind, duration, sampling)
        if cid in new_results:
            all_results.append(new_results[cid])
        elif cid in done:
            all_results.append(done[cid])
    if not all_results:
        raise ExperimentError(f"all {len(cells)} grid cells failed")

    # Canonical order on clean completion keeps resumed and straight runs identical.
    write_results_csv(results_path, all_results)

    if cfg.cv_enabled:
        cv_results = []
        for kind in cfg.model_kinds:
            candidates = [r for r in all_results if r.model == kind]
            if not candidates:
                continue
            best = max(candidates, key=lambda r: r.final_test_acc)
            cv = run_cv(
                manifests[best.duration_s], kind, best.sampling,
                k=cfg.cv_k, seed=best.seed,
                train_cfg=cfg.train,
                holdout_fraction=cfg.holdout_fraction,
                holdout_accuracy=best.final_test_acc,
                model_overrides=cfg.model_overrides,
            )
            cv_results.append(cv)
            log.info(
                "cv %s (%gs, %s): mean=%.4f delta=%.4f",
                kind, cv.duration_s, cv.sampling, cv.mean_accuracy, cv.delta_vs_holdout,
            )
        write_cv_csv(out / "cv_results.csv", cv_results)
    return all_results


def read_cv_csv(path) -> list:
    results = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            results.append(
                CvResult(
                    model=row["model"],
                    duration_s=float(row["duration_s"]),
                    sampling=row["sampling"],
                    k=int(row["k"]),
                    fold_accuracies=[float(a) for a in row["fold_accuracies"].split(";")],
                    mean_accuracy=float(row["mean_accuracy"]),
                    std_accuracy=float(row["std_accuracy"]),
                    delta_vs_holdout=(
                        None if row["delta_vs_holdout"] == ""
                        else float(row["delta_vs_holdout"])
                    ),
                    seed=int(row["seed"]),
                )
            )
    return results


def write_cv_csv(path, cv_results) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CV_HEADER)
        for r in cv_results:
            writer.writerow(
                [
                    r.model, f"{r.duration_s:g}", r.sampling, r.k,
                    repr(r.mean_accuracy), repr(r.std_accuracy),
                    "" if r.delta_vs_holdout is None else repr(r.delta_vs_holdout),
                    ";".join(repr(a) for a in r.fold_accuracies),
                    r.seed,
                ]
            )


def _write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def emit_report(results, out_dir, cv_results=None, segment_counts=None) -> dict:
    """Write the summary tables; returns {table_name: path}.

    segment_counts, when given, maps duration_s to the total segment count at
    that duration and feeds the duration table.
    """
    if not results:
        raise ExperimentError("cannot report on zero results")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    produced = {}

    ordered = sorted(results, key=lambda r: (r.model, r.duration_s, r.sampling))
    write_results_csv(out / "results.csv", ordered)
    produced["results"] = out / "results.csv"

    models = sorted({r.model for r in results})
    durations = sorted({r.duration_s for r in results})
    samplings = sorted({r.sampling for r in results})

    best_rows = []
    for model in models:
        best = max((r for r in results if r.model == model), key=lambda r: r.final_test_acc)
        best_rows.append([model, repr(best.final_test_acc), f"{best.duration_s:g}", best.sampling])
    _write_table(out / "best_by_model.csv",
                 ["model", "best_accuracy", "duration_s", "sampling"], best_rows)
    produced["best_by_model"] = out / "best_by_model.csv"

    by_key = {(r.model, r.duration_s, r.sampling): r for r in results}
    effect_rows = []
    for model in models:
        for duration in durations:
            over = by_key.get((model, duration, "oversample"))
            under = by_key.get((model, duration, "undersample"))
            if over and under:
                effect_rows.append(
                    [model, f"{duration:g}", repr(over.final_test_acc),
                     repr(under.final_test_acc),
                     repr(over.final_test_acc - under.final_test_acc)]
                )
    _write_table(
        out / "sampling_effect.csv",
        ["model", "duration_s", "oversample_acc", "undersample_acc", "difference"],
        effect_rows,
    )
    produced["sampling_effect"] = out / "sampling_effect.csv"

    duration_header = ["duration_s", "segments"] + [
        f"{m}_{s}" for m in models for s in samplings
    ]
    duration_rows = []
    for duration in durations:
        count = "" if not segment_counts else segment_counts.get(duration, "")
        row = [f"{duration:g}", count]
        for m in models:
            for s in samplings:
                r = by_key.get((m, duration, s))
                row.append("" if r is None else repr(r.final_test_acc))
        duration_rows.append(row)
    _write_table(out / "duration_table.csv", duration_header, duration_rows)
    produced["duration_table"] = out / "duration_table.csv"

    wall_rows = []
    for model in models:
        best = max((r for r in results if r.model == model), key=lambda r: r.final_test_acc)
        wall_rows.append([model, repr(best.final_test_acc), f"{best.wall_seconds:.3f}", "cpu"])
    _write_table(out / "walltime.csv",
                 ["model", "best_accuracy", "training_time_seconds", "hardware"], wall_rows)
    produced["walltime"] = out / "walltime.csv"

    if cv_results:
        write_cv_csv(out / "cv_results.csv", cv_results)
        produced["cv_results"] = out / "cv_results.csv"

    summary = [
        "# Experiment report",
        "",
        "Grid: one cell per (model, duration, sampling); accuracy is the",
        "final-test holdout score at the best early-stopping epoch. With the",
        "default axes this is 63 cells plus one CV run per model at its best",
        "cell (66 runs). Wall times are hardware-dependent and reported for",
        "context only.",
        "",
    ]
    for name in ("best_by_model", "duration_table", "sampling_effect", "walltime"):
        summary.append(f"## {name}")
        summary.append("")
        with open(produced[name], newline="") as fh:
            for line in fh:
                summary.append("    " + line.rstrip())
        summary.append("")
    (out / "report.md").write_text("\n".join(summary), encoding="utf-8")
    produced["report"] = out / "report.md"
    return produced
