"""Classification losses. Training always goes through log-softmax on logits."""

from __future__ import annotations

import numpy as np


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(probs: np.ndarray, label) -> float | np.ndarray:
    """-log probs[label] with a clamped log; probs must sum to 1 within 1e-6.

    Accepts one distribution with a scalar label or a (batch, classes) matrix
    with a label vector.
    """
    probs = np.asarray(probs, dtype=np.float64)
    sums = probs.sum(axis=-1)
    if not np.all(np.abs(sums - 1.0) <= 1e-6):
        raise ValueError(f"probabilities must sum to 1 within 1e-6, got {sums}")
    labels = np.asarray(label)
    n_classes = probs.shape[-1]
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise ValueError(f"label {label} outside [0, {n_classes})")
    if probs.ndim == 1:
        return -np.log(max(float(probs[int(label)]), 1e-300))
    picked = probs[np.arange(len(labels)), labels]
    return -np.log(np.maximum(picked, 1e-300))


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy of softmax(logits) and its gradient at the logits.

    Returns (loss, dlogits, probs); dlogits = (probs - onehot) / batch.
    """
    labels = np.asarray(labels)
    ls = log_softmax(logits)
    n = logits.shape[0]
    loss = -ls[np.arange(n), labels].mean()
    probs = np.exp(ls)
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, dlogits, probs
