import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nli_speech import dataset as ds, synth


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """2x3 speakers x 30 s at 22,050 Hz; shared by synth/experiment tests."""
    root = tmp_path_factory.mktemp("corpus")
    spec = synth.SynthSpec(n_speakers=3, minutes_per_speaker=0.5, seed=11)
    synth.generate(spec, root)
    return root


def make_entries(counts, frames=2, coeffs=3, seed=0):
    """Fabricated manifest entries: counts[label] entries per class."""
    rng = np.random.default_rng(seed)
    entries = []
    for label, count in enumerate(counts):
        for i in range(count):
            entries.append(
                ds.ManifestEntry(
                    mfcc=rng.standard_normal((frames, coeffs)).astype(np.float32),
                    label=label,
                    speaker_id=f"spk{label}_{i % 5}",
                    source_path=f"file{label}_{i}.wav",
                    segment_index=i,
                )
            )
    return entries


@pytest.fixture
def entry_factory():
    return make_entries
