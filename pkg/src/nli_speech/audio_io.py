"""WAV parsing, resampling, and fixed-duration segmentation.

Input format is RIFF/WAVE with signed 16-bit PCM, mono or stereo. Stereo is
downmixed by per-frame channel average. Samples are scaled by 1/32768 so the
decoded range is [-1, 32767/32768].
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AudioFormatError, EmptyClipError

PCM_SCALE = 32768.0

# Recordings are 44,100 Hz; the corpus is processed at 22,050 Hz.
DEFAULT_PROCESSING_RATE = 22050


@dataclass
class AudioClip:
    """Mono amplitude buffer with provenance metadata."""

    samples: np.ndarray
    sample_rate: int
    speaker_id: str = ""
    label: int = 0  # 0 = native, 1 = non_native
    source_path: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {self.samples.shape}")

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class Segment:
    """Fixed-duration slice of a clip; one training sample."""

    samples: np.ndarray
    sample_rate: int
    duration_s: float
    parent: str
    index: int
    speaker_id: str = ""
    label: int = 0


def load_wav(path, speaker_id: str = "", label: int = 0) -> AudioClip:
    """Decode a PCM16 WAV file into a mono AudioClip.

    Raises AudioFormatError for malformed containers or any encoding other
    than 1- or 2-channel signed 16-bit PCM, and EmptyClipError for files with
    no audio frames.
    """
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            samp_width = wf.getsampwidth()
            rate = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: {exc}") from exc

    if samp_width != 2:
        raise AudioFormatError(
            f"{path}: unsupported sample width {samp_width * 8} bit, expected 16-bit PCM"
        )
    if n_channels not in (1, 2):
        raise AudioFormatError(f"{path}: unsupported channel count {n_channels}")
    if n_frames == 0 or len(raw) == 0:
        raise EmptyClipError(f"{path}: zero-length data chunk")

    pcm = np.frombuffer(raw, dtype="<i2")
    if n_channels == 2:
        pcm = pcm.reshape(-1, 2).mean(axis=1)
    samples = np.asarray(pcm, dtype=np.float64) / PCM_SCALE
    return AudioClip(
        samples=samples,
        sample_rate=rate,
        speaker_id=speaker_id or path.stem,
        label=label,
        source_path=str(path),
    )


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono float samples in [-1, 1] as PCM16 (round-trip inverse of load_wav)."""
    samples = np.asarray(samples, dtype=np.float64)
    pcm = np.clip(np.round(samples * PCM_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(sample_rate))
        wf.writeframes(pcm.tobytes())


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Linearly interpolate a clip onto a uniform grid at target_rate."""
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate or len(clip.samples) == 0:
        new = clip.samples.copy()
    else:
        n_out = int(round(len(clip.samples) * target_rate / clip.sample_rate))
        positions = np.arange(n_out) * (clip.sample_rate / target_rate)
        new = np.interp(positions, np.arange(len(clip.samples)), clip.samples)
    return AudioClip(
        samples=new,
        sample_rate=int(target_rate),
        speaker_id=clip.speaker_id,
        label=clip.label,
        source_path=clip.source_path,
    )


def segment_length(duration_s: float, sample_rate: int) -> int:
    return int(round(duration_s * sample_rate))


def segment(clip: AudioClip, duration_s: float, pad_final: bool = False) -> list[Segment]:
    """Cut a clip into consecutive non-overlapping fixed-duration segments.

    The trailing partial chunk is dropped by default so every segment has
    exactly duration_s * sample_rate samples; pad_final=True keeps it,
    zero-padded to full length.
    """
    if duration_s <= 0:
        raise ValueError(f"duration_s must be positive, got {duration_s}")
    seg_len = segment_length(duration_s, clip.sample_rate)
    n_full = len(clip.samples) // seg_len
    out = []
    for i in range(n_full):
        out.append(
            Segment(
                samples=clip.samples[i * seg_len : (i + 1) * seg_len].copy(),
                sample_rate=clip.sample_rate,
                duration_s=duration_s,
                parent=clip.source_path,
                index=i,
                speaker_id=clip.speaker_id,
                label=clip.label,
            )
        )
    tail = len(clip.samples) - n_full * seg_len
    if pad_final and tail > 0:
        padded = np.zeros(seg_len, dtype=np.float64)
        padded[:tail] = clip.samples[n_full * seg_len :]
        out.append(
            Segment(
                samples=padded,
                sample_rate=clip.sample_rate,
                duration_s=duration_s,
                parent=clip.source_path,
                index=n_full,
                speaker_id=clip.speaker_id,
                label=clip.label,
            )
        )
    return out
