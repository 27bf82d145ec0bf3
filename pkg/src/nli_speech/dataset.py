"""Labeled MFCC dataset: build from WAV trees, serialize, split, balance, fold.

The manifest JSON schema is:

    {"mapping": [...], "duration_s": f, "mfcc_config": {...},
     "entries": [{"mfcc": [[...]], "label": i, "speaker_id": s,
                  "source_path": s, "segment_index": i}]}

Matrices are row-major and time-major (one row per frame). Stored features
are single precision; computation upstream is double precision.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import audio_io, features
from .errors import DatasetError, PipelineError
from .features import MfccConfig

log = logging.getLogger(__name__)

DEFAULT_MAPPING = ("native", "non_native")

# Inner split fractions applied to the 90% that remains after the holdout.
ANN_SCHEME = (0.8, 0.2)  # train : val
DEEP_SCHEME = (0.8, 0.1, 0.1)  # train : val : inner_test


def scheme_for_model(kind: str) -> tuple:
    return ANN_SCHEME if kind.lower() == "ann" else DEEP_SCHEME


@dataclass
class ManifestEntry:
    mfcc: np.ndarray  # frames x n_mfcc, float32
    label: int
    speaker_id: str
    source_path: str
    segment_index: int


@dataclass
class Manifest:
    mapping: list
    duration_s: float
    mfcc_config: MfccConfig
    entries: list

    def __post_init__(self):
        n_classes = len(self.mapping)
        shapes = {e.mfcc.shape for e in self.entries}
        if len(shapes) > 1:
            raise DatasetError(f"entries have inconsistent matrix shapes: {sorted(shapes)}")
        for e in self.entries:
            if not 0 <= e.label < n_classes:
                raise DatasetError(f"label {e.label} outside mapping of {n_classes} classes")

    @property
    def feature_shape(self) -> tuple:
        return self.entries[0].mfcc.shape if self.entries else (0, 0)


@dataclass
class SplitSpec:
    holdout_fraction: float = 0.10
    inner_fractions: tuple = ANN_SCHEME
    seed: int = 0
    speaker_disjoint: bool = False

    def __post_init__(self):
        if not 0 < self.holdout_fraction < 1:
            raise DatasetError(f"holdout_fraction must be in (0, 1), got {self.holdout_fraction}")
        if abs(sum(self.inner_fractions) - 1.0) > 1e-9:
            raise DatasetError(f"inner fractions must sum to 1, got {self.inner_fractions}")


@dataclass
class SplitResult:
    final_test: list
    train: list
    val: list
    inner_test: list | None = None

    def partitions(self) -> dict:
        parts = {"final_test": self.final_test, "train": self.train, "val": self.val}
        if self.inner_test is not None:
            parts["inner_test"] = self.inner_test
        return parts


def class_counts(entries, n_classes: int = 2) -> list:
    counts = [0] * n_classes
    for e in entries:
        counts[e.label] += 1
    return counts


def _file_entries(args):
    path, label, duration_s, cfg, sample_rate, pad_final = args
    clip = audio_io.load_wav(path, label=label)
    if clip.sample_rate != sample_rate:
        clip = audio_io.resample(clip, sample_rate)
    out = []
    for seg in audio_io.segment(clip, duration_s, pad_final=pad_final):
        values = features.mfcc_from_samples(seg.samples, seg.sample_rate, cfg)
        out.append(
            ManifestEntry(
                mfcc=values.astype(np.float32),
                label=seg.label,
                speaker_id=seg.speaker_id,
                source_path=seg.parent,
                segment_index=seg.index,
            )
        )
    return out


def build_manifest(
    labeled_dirs: dict,
    duration_s: float,
    cfg: MfccConfig | None = None,
    sample_rate: int = audio_io.DEFAULT_PROCESSING_RATE,
    pad_final: bool = False,
    jobs: int = 1,
) -> Manifest:
    """Segment every WAV under each class directory and extract MFCC features.

    labeled_dirs maps class name to directory; key order fixes the label
    indices. speaker_id is the filename stem. Unreadable files are skipped
    with a warning.
    """
    cfg = cfg or MfccConfig()
    mapping = list(labeled_dirs.keys())
    tasks = []
    for label, (name, directory) in enumerate(labeled_dirs.items()):
        paths = sorted(Path(directory).glob("*.wav"))
        if not paths:
            log.warning("class %r: no .wav files under %s", name, directory)
        tasks.extend((p, label, duration_s, cfg, sample_rate, pad_final) for p in paths)

    entries = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_file_entries, task) for task in tasks]
            for task, future in zip(tasks, futures):
                try:
                    entries.extend(future.result())
                except PipelineError as exc:
                    log.warning("skipping %s: %s", task[0], exc)
    else:
        for task in tasks:
            try:
                entries.extend(_file_entries(task))
            except PipelineError as exc:
                log.warning("skipping %s: %s", task[0], exc)

    if not entries:
        raise DatasetError("no segments produced; check directories and duration")
    manifest = Manifest(
        mapping=mapping, duration_s=float(duration_s), mfcc_config=cfg, entries=entries
    )
    counts = class_counts(entries, len(mapping))
    log.info(
        "manifest: %s entries at %gs (%s)",
        len(entries),
        duration_s,
        ", ".join(f"{name}={c}" for name, c in zip(mapping, counts)),
    )
    return manifest


def save_manifest(manifest: Manifest, path) -> None:
    doc = {
        "mapping": list(manifest.mapping),
        "duration_s": manifest.duration_s,
        "mfcc_config": manifest.mfcc_config.to_dict(),
        "entries": [
            {
                "mfcc": [[float(v) for v in row] for row in e.mfcc],
                "label": int(e.label),
                "speaker_id": e.speaker_id,
                "source_path": e.source_path,
                "segment_index": int(e.segment_index),
            }
            for e in manifest.entries
        ],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_manifest(path) -> Manifest:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = [
        ManifestEntry(
            mfcc=np.asarray(e["mfcc"], dtype=np.float32),
            label=int(e["label"]),
            speaker_id=e["speaker_id"],
            source_path=e["source_path"],
            segment_index=int(e["segment_index"]),
        )
        for e in doc["entries"]
    ]
    return Manifest(
        mapping=list(doc["mapping"]),
        duration_s=float(doc["duration_s"]),
        mfcc_config=MfccConfig.from_dict(doc["mfcc_config"]),
        entries=entries,
    )


def _partition_counts(n: int, fractions) -> list:
    bounds = np.round(np.cumsum(fractions) * n).astype(int)
    return np.diff(np.concatenate(([0], bounds))).tolist()


def split_holdout(entries, fraction: float, seed: int):
    """Seeded uniform removal of the final-test holdout; returns (holdout, rest)."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(entries))
    c = int(round(fraction * len(entries)))
    holdout = [entries[i] for i in order[:c]]
    rest = [entries[i] for i in order[c:]]
    return holdout, rest


def _split_random(entries, spec: SplitSpec) -> list:
    holdout, rest = split_holdout(entries, spec.holdout_fraction, spec.seed)
    counts = _partition_counts(len(rest), spec.inner_fractions)
    parts, start = [holdout], 0
    for c in counts:
        parts.append(rest[start : start + c])
        start += c
    return parts


def _split_speaker_disjoint(entries, spec: SplitSpec) -> list:
    n_parts = 1 + len(spec.inner_fractions)
    rng = np.random.default_rng(spec.seed)
    by_class = {}
    for e in entries:
        by_class.setdefault(e.label, {}).setdefault(e.speaker_id, []).append(e)

    for label, speakers in by_class.items():
        if len(speakers) < n_parts:
            raise DatasetError(
                f"speaker-disjoint split needs at least {n_parts} speakers per class, "
                f"class {label} has {len(speakers)}"
            )

    fractions = [spec.holdout_fraction] + [
        f * (1 - spec.holdout_fraction) for f in spec.inner_fractions
    ]
    targets = np.cumsum(fractions)
    parts = [[] for _ in range(n_parts)]
    # Assign whole speakers per class, walking cumulative entry-count targets.
    for label in sorted(by_class):
        speakers = by_class[label]
        names = list(speakers)
        rng.shuffle(names)
        total = sum(len(speakers[s]) for s in names)
        taken = 0
        part_idx = 0
        remaining = len(names)
        for name in names:
            # Leave enough speakers so every later partition gets at least one.
            must_advance = remaining <= (n_parts - 1 - part_idx)
            if part_idx < n_parts - 1 and (taken >= targets[part_idx] * total or must_advance):
                part_idx += 1
            parts[part_idx].extend(speakers[name])
            taken += len(speakers[name])
            remaining -= 1
    return parts


def split(manifest: Manifest, spec: SplitSpec) -> SplitResult:
    """Remove the seeded holdout first, then split the remainder per scheme."""
    entries = manifest.entries
    parts = (
        _split_speaker_disjoint(entries, spec)
        if spec.speaker_disjoint
        else _split_random(entries, spec)
    )
    names = ["final_test", "train", "val"] + (["inner_test"] if len(parts) == 4 else [])
    for name, part in zip(names, parts):
        if not part:
            raise DatasetError(f"partition {name!r} is empty ({len(entries)} entries total)")
    if len(parts) == 3:
        final_test, train, val = parts
        return SplitResult(final_test=final_test, train=train, val=val)
    final_test, train, val, inner_test = parts
    return SplitResult(final_test=final_test, train=train, val=val, inner_test=inner_test)


def _two_class_groups(entries):
    groups = {}
    for e in entries:
        groups.setdefault(e.label, []).append(e)
    if len(groups) != 2:
        raise DatasetError(f"balancing needs exactly two classes, got labels {sorted(groups)}")
    return groups


def oversample(entries, seed: int = 0) -> list:
    """Duplicate minority entries (uniform with replacement) up to the majority count."""
    groups = _two_class_groups(entries)
    (minority, majority) = sorted(groups.values(), key=len)
    deficit = len(majority) - len(minority)
    out = list(entries)
    if deficit:
        rng = np.random.default_rng(seed)
        picks = rng.integers(0, len(minority), size=deficit)
        out.extend(minority[i] for i in picks)
    return out


def undersample(entries, seed: int = 0) -> list:
    """Drop majority entries (uniform without replacement) down to the minority count."""
    groups = _two_class_groups(entries)
    (minority, majority) = sorted(groups.values(), key=len)
    if len(majority) == len(minority):
        return list(entries)
    rng = np.random.default_rng(seed)
    majority_label = majority[0].label
    keep = set(rng.choice(len(majority), size=len(minority), replace=False).tolist())
    out, seen = [], 0
    for e in entries:
        if e.label != majority_label:
            out.append(e)
        else:
            if seen in keep:
                out.append(e)
            seen += 1
    return out


def balance(entries, method: str, seed: int = 0) -> list:
    if method in (None, "none"):
        return list(entries)
    if method == "oversample":
        return oversample(entries, seed)
    if method == "undersample":
        return undersample(entries, seed)
    raise DatasetError(f"unknown balancing method {method!r}")


def kfold_entries(entries, k: int = 5, seed: int = 0) -> list:
    """Stratified k-fold over an entry list: k (train_indices, val_indices) pairs."""
    if k < 2:
        raise DatasetError(f"k must be at least 2, got {k}")
    by_class = {}
    for i, e in enumerate(entries):
        by_class.setdefault(e.label, []).append(i)
    for label, idx in by_class.items():
        if len(idx) < k:
            raise DatasetError(f"k={k} exceeds the {len(idx)} entries of class {label}")

    rng = np.random.default_rng(seed)
    fold_val = [[] for _ in range(k)]
    for label in sorted(by_class):
        idx = np.array(by_class[label])
        rng.shuffle(idx)
        for fold, chunk in enumerate(np.array_split(idx, k)):
            fold_val[fold].extend(chunk.tolist())

    pairs = []
    for fold in range(k):
        val = sorted(fold_val[fold])
        val_set = set(val)
        train = [i for i in range(len(entries)) if i not in val_set]
        pairs.append((train, val))
    return pairs


def kfold(manifest: Manifest, k: int = 5, seed: int = 0) -> list:
    """Stratified k-fold over manifest entries; see kfold_entries."""
    return kfold_entries(manifest.entries, k, seed)
