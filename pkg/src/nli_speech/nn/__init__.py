from .layers import (
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    LSTM,
    Layer,
    MaxPool2D,
    Network,
    ReLU,
    Reshape,
    Softmax,
    glorot_uniform,
)
from .losses import cross_entropy, log_softmax, softmax, softmax_cross_entropy
from .optim import Adam
from .train import (
    EpochMetrics,
    EvalResult,
    TrainConfig,
    best_epoch,
    evaluate,
    read_metrics_csv,
    train,
    write_metrics_csv,
)

__all__ = [
    "Adam",
    "Conv2D",
    "Dense",
    "Dropout",
    "EpochMetrics",
    "EvalResult",
    "Flatten",
    "LSTM",
    "Layer",
    "MaxPool2D",
    "Network",
    "ReLU",
    "Reshape",
    "Softmax",
    "TrainConfig",
    "best_epoch",
    "cross_entropy",
    "evaluate",
    "glorot_uniform",
    "log_softmax",
    "read_metrics_csv",
    "softmax",
    "softmax_cross_entropy",
    "train",
    "write_metrics_csv",
]
