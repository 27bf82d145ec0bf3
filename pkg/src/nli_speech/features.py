"""MFCC extraction: framing, Hann window, power spectrum, mel filterbank, DCT.

Frames start at sample 0 with no center padding, so a buffer of N samples
yields 1 + floor((N - frame_len) / hop) frames. All internal computation is
double precision.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .audio_io import Segment
from .errors import FeatureConfigError, SegmentTooShortError


@dataclass
class MfccConfig:
    frame_len: int = 2048
    hop: int = 512
    n_mels: int = 40
    n_mfcc: int = 13
    fmin: float = 0.0
    fmax: float | None = None  # None = sample_rate / 2
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.frame_len <= 0 or self.frame_len & (self.frame_len - 1) != 0:
            raise FeatureConfigError(f"frame_len must be a power of two, got {self.frame_len}")
        if self.hop <= 0:
            raise FeatureConfigError(f"hop must be positive, got {self.hop}")
        if self.n_mfcc > self.n_mels:
            raise FeatureConfigError(
                f"n_mfcc ({self.n_mfcc}) must not exceed n_mels ({self.n_mels})"
            )
        if self.log_floor <= 0:
            raise FeatureConfigError("log_floor must be positive")

    @property
    def n_fft_bins(self) -> int:
        return self.frame_len // 2 + 1

    def effective_fmax(self, sample_rate: int) -> float:
        fmax = sample_rate / 2 if self.fmax is None else self.fmax
        if not self.fmin < fmax <= sample_rate / 2:
            raise FeatureConfigError(
                f"need fmin < fmax <= sample_rate/2, got fmin={self.fmin}, "
                f"fmax={fmax}, sample_rate={sample_rate}"
            )
        return fmax

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MfccConfig":
        return cls(**d)


@dataclass
class MfccMatrix:
    """frames x n_mfcc coefficient matrix plus segment metadata."""

    values: np.ndarray
    label: int = 0
    speaker_id: str = ""
    source_path: str = ""
    segment_index: int = 0

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


@dataclass
class NormStats:
    """Per-coefficient mean/std fit on the training split only."""

    mean: np.ndarray
    std: np.ndarray


def mel_scale(f):
    """Hz to mel, 2595 * log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def hann_window(n: int) -> np.ndarray:
    # Periodic Hann, the STFT convention.
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def mel_filterbank(cfg: MfccConfig, sample_rate: int) -> np.ndarray:
    """Triangular filters, centers equally spaced in mel; shape (n_mels, n_fft_bins)."""
    fmax = cfg.effective_fmax(sample_rate)
    mel_pts = np.linspace(mel_scale(cfg.fmin), mel_scale(fmax), cfg.n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    bin_freqs = np.arange(cfg.n_fft_bins) * sample_rate / cfg.frame_len

    fb = np.zeros((cfg.n_mels, cfg.n_fft_bins))
    for m in range(cfg.n_mels):
        lo, center, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        rising = (bin_freqs - lo) / (center - lo)
        falling = (hi - bin_freqs) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))

    empty = np.flatnonzero(fb.sum(axis=1) == 0)
    if empty.size:
        raise FeatureConfigError(
            f"filters {empty.tolist()} have no FFT-bin support; "
            f"reduce n_mels ({cfg.n_mels}) or increase frame_len ({cfg.frame_len})"
        )
    return fb


def filter_centers_hz(cfg: MfccConfig, sample_rate: int) -> np.ndarray:
    fmax = cfg.effective_fmax(sample_rate)
    mel_pts = np.linspace(mel_scale(cfg.fmin), mel_scale(fmax), cfg.n_mels + 2)
    return mel_to_hz(mel_pts[1:-1])


def dct_basis(n_mfcc: int, n_mels: int) -> np.ndarray:
    """Orthonormal DCT-II basis, shape (n_mfcc, n_mels)."""
    n = np.arange(n_mels)
    k = np.arange(n_mfcc)[:, None]
    basis = np.cos(np.pi * k * (2 * n + 1) / (2 * n_mels)) * np.sqrt(2.0 / n_mels)
    basis[0] *= np.sqrt(0.5)
    return basis


def frame_signal(samples: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Stack analysis frames as rows: shape (1 + (N - frame_len)//hop, frame_len)."""
    if len(samples) < frame_len:
        raise SegmentTooShortError(
            f"segment of {len(samples)} samples is shorter than one frame ({frame_len})"
        )
    windows = np.lib.stride_tricks.sliding_window_view(samples, frame_len)
    return windows[::hop].copy()


def mfcc_from_samples(
    samples: np.ndarray, sample_rate: int, cfg: MfccConfig | None = None
) -> np.ndarray:
    """Compute the frames x n_mfcc coefficient matrix for a raw sample buffer."""
    cfg = cfg or MfccConfig()
    frames = frame_signal(np.asarray(samples, dtype=np.float64), cfg.frame_len, cfg.hop)
    windowed = frames * hann_window(cfg.frame_len)
    power = np.abs(np.fft.rfft(windowed, axis=1)) ** 2
    energies = power @ mel_filterbank(cfg, sample_rate).T
    log_e = np.log(np.maximum(energies, cfg.log_floor))
    return log_e @ dct_basis(cfg.n_mfcc, cfg.n_mels).T


def mfcc(seg: Segment, cfg: MfccConfig | None = None) -> MfccMatrix:
    """MFCC matrix for one segment, carrying the segment's metadata."""
    values = mfcc_from_samples(seg.samples, seg.sample_rate, cfg)
    return MfccMatrix(
        values=values,
        label=seg.label,
        speaker_id=seg.speaker_id,
        source_path=seg.parent,
        segment_index=seg.index,
    )


def _stack_frames(matrices) -> np.ndarray:
    rows = [np.asarray(m.values if isinstance(m, MfccMatrix) else m, dtype=np.float64)
            for m in matrices]
    if not rows:
        raise ValueError("cannot fit a normalizer on an empty training set")
    return np.concatenate(rows, axis=0)


def fit_normalizer(train, std_floor: float = 1e-8) -> NormStats:
    """Per-coefficient mean/std over all frames of all training matrices."""
    frames = _stack_frames(train)
    mean = frames.mean(axis=0)
    std = np.maximum(frames.std(axis=0), std_floor)
    return NormStats(mean=mean, std=std)


def apply_normalizer(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return (np.asarray(values, dtype=np.float64) - stats.mean) / stats.std


def denormalize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * stats.std + stats.mean
