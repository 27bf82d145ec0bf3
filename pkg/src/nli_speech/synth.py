"""Synthetic two-class speech-like corpus generator.

Each speaker gets a fixed fundamental and formant-band emphasis drawn from
their class profile; the classes use disjoint pitch and formant ranges so the
corpus is learnable by design. Signals are harmonic stacks with a syllable-like
amplitude envelope plus band-limited noise. Generation is deterministic per
seed down to the written bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import write_wav


@dataclass
class SynthSpec:
    n_speakers: int = 20  # per class
    minutes_per_speaker: float = 1.0
    sample_rate: int = 22050
    seed: int = 0
    native_f0: tuple = (100.0, 150.0)
    native_formant: tuple = (500.0, 900.0)
    nonnative_f0: tuple = (200.0, 300.0)
    nonnative_formant: tuple = (1200.0, 2000.0)
    jitter: float = 0.01  # relative pitch wobble depth
    noise_level: float = 0.05  # noise RMS relative to voiced RMS

    def __post_init__(self):
        if self.n_speakers < 1 or self.minutes_per_speaker <= 0:
            raise ValueError("need at least one speaker and positive minutes per speaker")

    def class_profiles(self) -> list:
        return [
            ("native", self.native_f0, self.native_formant),
            ("non_native", self.nonnative_f0, self.nonnative_formant),
        ]


def _speaker_signal(rng: np.random.Generator, n: int, rate: int,
                    f0_range, formant_range, jitter: float, noise_level: float) -> np.ndarray:
    t = np.arange(n) / rate
    f0 = rng.uniform(*f0_range)
    formant = rng.uniform(*formant_range)
    formant_width = (formant_range[1] - formant_range[0]) / 3.0

    # Slow vibrato makes the pitch wobble without leaving the class band.
    vib_rate = rng.uniform(4.0, 6.5)
    vib_phase = rng.uniform(0, 2 * np.pi)
    f0_inst = f0 * (1.0 + jitter * np.sin(2 * np.pi * vib_rate * t + vib_phase))
    base_phase = 2 * np.pi * np.cumsum(f0_inst) / rate

    max_harmonic_hz = min(0.45 * rate, formant_range[1] + 2 * formant_width)
    n_harmonics = max(1, int(max_harmonic_hz / f0))
    voiced = np.zeros(n)
    for k in range(1, n_harmonics + 1):
        rolloff = 1.0 / np.sqrt(k)
        emphasis = 0.15 + np.exp(-((k * f0 - formant) ** 2) / (2 * formant_width**2))
        voiced += rolloff * emphasis * np.sin(k * base_phase + rng.uniform(0, 2 * np.pi))

    # Syllable-like amplitude modulation with a floor so no stretch is silent.
    syl_rate = rng.uniform(2.0, 4.0)
    syl_phase = rng.uniform(0, 2 * np.pi)
    envelope = 0.25 + 0.75 * (0.5 + 0.5 * np.sin(2 * np.pi * syl_rate * t + syl_phase)) ** 2
    voiced *= envelope

    # Band-limited noise confined to the class formant band.
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / rate)
    band = (freqs >= formant_range[0]) & (freqs <= formant_range[1])
    spectrum[~band] = 0.0
    noise = np.fft.irfft(spectrum, n=n)
    noise_rms = np.sqrt(np.mean(noise**2))
    if noise_rms > 0:
        voiced_rms = np.sqrt(np.mean(voiced**2))
        noise *= noise_level * voiced_rms / noise_rms

    signal = voiced + noise
    return 0.5 * signal / np.max(np.abs(signal))


def generate(spec: SynthSpec, out_dir) -> list:
    """Write the corpus as <class>/<speaker_id>.wav trees; returns written paths."""
    out_dir = Path(out_dir)
    n = int(round(spec.minutes_per_speaker * 60 * spec.sample_rate))
    paths = []
    for class_idx, (class_name, f0_range, formant_range) in enumerate(spec.class_profiles()):
        class_dir = out_dir / class_name
        class_dir.mkdir(parents=True, exist_ok=True)
        for speaker_idx in range(spec.n_speakers):
            rng = np.random.default_rng(
                np.random.SeedSequence([spec.seed, class_idx, speaker_idx])
            )
            samples = _speaker_signal(
                rng, n, spec.sample_rate, f0_range, formant_range,
                spec.jitter, spec.noise_level,
            )
            path = class_dir / f"{class_name}_spk{speaker_idx:03d}.wav"
            write_wav(path, samples, spec.sample_rate)
            paths.append(path)
    return paths
