"""Mini-batch training loop with patience-based early stopping.

Training monitors validation loss every epoch, keeps a snapshot of the best
parameters, stops after `patience` consecutive epochs without improvement,
and always restores the best-epoch weights before returning.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
import numpy as np

from ..errors import TrainingDivergedError
from .losses import softmax_cross_entropy
from .optim import Adam

METRICS_HEADER = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "seconds"]


@dataclass
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class EpochMetrics:
    epoch: int  # 1-based
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    wall_seconds: float


@dataclass
class EvalResult:
    accuracy: float
    mean_loss: float
    confusion: np.ndarray  # rows = actual, cols = predicted


def evaluate(model, x: np.ndarray, y: np.ndarray, batch_size: int = 256,
             n_classes: int = 2) -> EvalResult:
    """Accuracy, mean cross-entropy loss, and confusion matrix on a dataset."""
    if len(x) == 0:
        raise ValueError("cannot evaluate on an empty set")
    y = np.asarray(y)
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    total_loss = 0.0
    for start in range(0, len(x), batch_size):
        xb = x[start : start + batch_size]
        yb = y[start : start + batch_size]
        logits = model.forward(xb, training=False)
        loss, _, probs = softmax_cross_entropy(logits, yb)
        total_loss += loss * len(xb)
        preds = probs.argmax(axis=1)
        for actual, pred in zip(yb, preds):
            confusion[actual, pred] += 1
    accuracy = float(np.trace(confusion)) / len(x)
    return EvalResult(accuracy=accuracy, mean_loss=float(total_loss) / len(x),
                      confusion=confusion)


def train(model, train_set, val_set, cfg: TrainConfig | None = None):
    """Fit `model` on (x, y) arrays; returns (model, metrics, stop_reason).

    stop_reason is "early_stopping" or "max_epochs". The returned model holds
    the parameters of the best-validation-loss epoch.
    """
    cfg = cfg or TrainConfig()
    x_train, y_train = train_set
    x_val, y_val = val_set
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("train and validation sets must be non-empty")
    if x_train.shape[1:] != x_val.shape[1:]:
        raise ValueError(
            f"feature shapes differ: train {x_train.shape[1:]} vs val {x_val.shape[1:]}"
        )
    y_train = np.asarray(y_train)
    y_val = np.asarray(y_val)

    rng = np.random.default_rng(cfg.seed)
    model.set_rng(rng)
    adam = Adam(model.parameters(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)

    metrics: list[EpochMetrics] = []
    best_loss = np.inf
    best_weights = model.get_weights()
    epochs_since_best = 0
    stop_reason = "max_epochs"
    n = len(x_train)

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        loss_sum = 0.0
        correct = 0
        for batch_idx, start in enumerate(range(0, n, cfg.batch_size)):
            pick = order[start : start + cfg.batch_size]
            xb, yb = x_train[pick], y_train[pick]
            logits = model.forward(xb, training=True)
            loss, dlogits, probs = softmax_cross_entropy(logits, yb)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {batch_idx}"
                )
            loss_sum += float(loss) * len(xb)
            correct += int((probs.argmax(axis=1) == yb).sum())
            model.zero_grads()
            model.backward(dlogits)
            adam.step(model.gradients())

        val = evaluate(model, x_val, y_val)
        metrics.append(
            EpochMetrics(
                epoch=epoch,
                train_loss=loss_sum / n,
                train_acc=correct / n,
                val_loss=val.mean_loss,
                val_acc=val.accuracy,
                wall_seconds=time.perf_counter() - t0,
            )
        )
        if val.mean_loss < best_loss:
            best_loss = val.mean_loss
            best_weights = model.get_weights()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                stop_reason = "early_stopping"
                break

    model.set_weights(best_weights)
    return model, metrics, stop_reason


def best_epoch(metrics) -> EpochMetrics:
    return min(metrics, key=lambda m: m.val_loss)


def write_metrics_csv(path, metrics) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for m in metrics:
            writer.writerow(
                [m.epoch, repr(m.train_loss), repr(m.train_acc),
                 repr(m.val_loss), repr(m.val_acc), f"{m.wall_seconds:.6f}"]
            )


def read_metrics_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                EpochMetrics(
                    epoch=int(row["epoch"]),
                    train_loss=float(row["train_loss"]),
                    train_acc=float(row["train_acc"]),
                    val_loss=float(row["val_loss"]),
                    val_acc=float(row["val_acc"]),
                    wall_seconds=float(row["seconds"]),
                )
            )
    return out
