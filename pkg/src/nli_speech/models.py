"""The three classifier architectures over MFCC input, plus track-level prediction.

All models consume (batch, frames, n_mfcc) tensors of normalized MFCCs and
produce 2-class logits; softmax is applied at prediction time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from . import audio_io, features
from .audio_io import AudioClip
from .errors import ModelConfigError, ShapeMismatchError
from .features import MfccConfig, MfccMatrix, NormStats, apply_normalizer
from .nn import (
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    LSTM,
    MaxPool2D,
    Network,
    ReLU,
    Reshape,
    softmax,
)

MODEL_KINDS = ("ann", "cnn", "rnn")

MODEL_FILE_VERSION = 1


@dataclass
class ModelSpec:
    kind: str
    input_shape: tuple  # (frames, n_mfcc)
    n_classes: int = 2
    ann_hidden: tuple = (512, 256, 64)
    dropout: float = 0.3
    cnn_filters: tuple = (32, 32)
    cnn_kernel: int = 3
    cnn_hidden: int = 64
    rnn_hidden: tuple = (64, 64)
    rnn_dense: int = 64

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in MODEL_KINDS:
            raise ModelConfigError(f"unknown model kind {self.kind!r}, expected {MODEL_KINDS}")
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.ann_hidden = tuple(self.ann_hidden)
        self.cnn_filters = tuple(self.cnn_filters)
        self.rnn_hidden = tuple(self.rnn_hidden)
        if len(self.input_shape) != 2 or min(self.input_shape) < 1:
            raise ModelConfigError(f"input_shape must be (frames, n_mfcc), got {self.input_shape}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        for key in ("input_shape", "ann_hidden", "cnn_filters", "rnn_hidden"):
            d[key] = tuple(d[key])
        return cls(**d)


def build(spec: ModelSpec, seed: int = 0) -> Network:
    """Construct an initialized network for the given architecture spec."""
    rng = np.random.default_rng(seed)
    frames, n_mfcc = spec.input_shape
    if spec.kind == "ann":
        layers = [Flatten()]
        n_in = frames * n_mfcc
        for i, width in enumerate(spec.ann_hidden):
            layers += [Dense(n_in, width, rng), ReLU()]
            if i < len(spec.ann_hidden) - 1:
                layers.append(Dropout(spec.dropout))
            n_in = width
        layers.append(Dense(n_in, spec.n_classes, rng))
        return Network(layers)

    if spec.kind == "cnn":
        h, w = frames, n_mfcc
        for _ in spec.cnn_filters:
            h, w = h // 2, w // 2
            if h < 1 or w < 1:
                raise ModelConfigError(
                    f"input {spec.input_shape} too small for "
                    f"{len(spec.cnn_filters)} pooling stages"
                )
        layers = [Reshape((frames, n_mfcc, 1))]
        in_ch = 1
        for n_k in spec.cnn_filters:
            layers += [Conv2D(in_ch, n_k, spec.cnn_kernel, rng), ReLU(), MaxPool2D(2)]
            in_ch = n_k
        layers += [
            Flatten(),
            Dense(h * w * in_ch, spec.cnn_hidden, rng),
            ReLU(),
            Dropout(spec.dropout),
            Dense(spec.cnn_hidden, spec.n_classes, rng),
        ]
        return Network(layers)

    # rnn: stacked LSTMs, all but the last returning the full sequence
    layers = []
    n_in = n_mfcc
    for i, width in enumerate(spec.rnn_hidden):
        last = i == len(spec.rnn_hidden) - 1
        layers.append(LSTM(n_in, width, rng, return_sequences=not last))
        n_in = width
    layers += [
        Dense(n_in, spec.rnn_dense, rng),
        ReLU(),
        Dense(spec.rnn_dense, spec.n_classes, rng),
    ]
    return Network(layers)


@dataclass
class TrainedModel:
    """Network plus everything needed to classify raw audio with it."""

    spec: ModelSpec
    network: Network
    stats: NormStats
    duration_s: float
    sample_rate: int
    mapping: list
    mfcc_config: MfccConfig

    @property
    def kind(self) -> str:
        return self.spec.kind


@dataclass
class TrackPrediction:
    class_index: int
    class_name: str
    vote_counts: list
    mean_probs: list
    per_segment: list  # one probability distribution per segment


def predict_segment(model: TrainedModel, matrix) -> np.ndarray:
    """Class distribution for one MFCC matrix (normalization applied here)."""
    values = matrix.values if isinstance(matrix, MfccMatrix) else np.asarray(matrix)
    if tuple(values.shape) != model.spec.input_shape:
        raise ShapeMismatchError(
            f"mfcc shape {tuple(values.shape)} does not match model input "
            f"{model.spec.input_shape}"
        )
    x = apply_normalizer(values, model.stats)[None, :, :]
    logits = model.network.forward(x, training=False)
    return softmax(logits)[0]


def predict_track(model: TrainedModel, clip: AudioClip) -> TrackPrediction:
    """Majority vote over the clip's segments at the model's training duration.

    Ties break toward the class with the higher mean probability.
    """
    if clip.sample_rate != model.sample_rate:
        clip = audio_io.resample(clip, model.sample_rate)
    segments = audio_io.segment(clip, model.duration_s)
    if not segments:
        raise ShapeMismatchError(
            f"clip shorter than one segment "
            f"({clip.duration_seconds:.2f}s < {model.duration_s}s)"
        )
    n_classes = len(model.mapping)
    votes = [0] * n_classes
    dists = []
    for seg in segments:
        matrix = features.mfcc(seg, model.mfcc_config)
        probs = predict_segment(model, matrix)
        dists.append(probs)
        votes[int(probs.argmax())] += 1
    mean_probs = np.mean(dists, axis=0)
    top = max(votes)
    tied = [i for i, v in enumerate(votes) if v == top]
    winner = max(tied, key=lambda i: mean_probs[i])
    return TrackPrediction(
        class_index=winner,
        class_name=model.mapping[winner],
        vote_counts=votes,
        mean_probs=mean_probs.tolist(),
        per_segment=[d.tolist() for d in dists],
    )


def save_model(model: TrainedModel, path) -> None:
    """Serialize a trained model to .npz with a JSON metadata header."""
    meta = {
        "format_version": MODEL_FILE_VERSION,
        "spec": model.spec.to_dict(),
        "duration_s": model.duration_s,
        "sample_rate": model.sample_rate,
        "mapping": list(model.mapping),
        "mfcc_config": model.mfcc_config.to_dict(),
    }
    arrays = {f"weight_{i}": w for i, w in enumerate(model.network.get_weights())}
    arrays["norm_mean"] = model.stats.mean
    arrays["norm_std"] = model.stats.std
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
             **arrays)


def load_model(path) -> TrainedModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        version = meta.get("format_version")
        if version != MODEL_FILE_VERSION:
            raise ModelConfigError(f"unsupported model file version {version!r}")
        spec = ModelSpec.from_dict(meta["spec"])
        network = build(spec, seed=0)
        n_weights = len(network.parameters())
        weights = [data[f"weight_{i}"] for i in range(n_weights)]
        network.set_weights(weights)
        stats = NormStats(mean=data["norm_mean"], std=data["norm_std"])
    return TrainedModel(
        spec=spec,
        network=network,
        stats=stats,
        duration_s=float(meta["duration_s"]),
        sample_rate=int(meta["sample_rate"]),
        mapping=list(meta["mapping"]),
        mfcc_config=MfccConfig.from_dict(meta["mfcc_config"]),
    )
