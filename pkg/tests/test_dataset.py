import numpy as np
import pytest

from nli_speech import dataset as ds
from nli_speech.audio_io import write_wav
from nli_speech.dataset import (
    ANN_SCHEME,
    DEEP_SCHEME,
    Manifest,
    SplitSpec,
    balance,
    build_manifest,
    class_counts,
    kfold,
    kfold_entries,
    load_manifest,
    oversample,
    save_manifest,
    scheme_for_model,
    split,
    undersample,
)
from nli_speech.errors import DatasetError
from nli_speech.features import MfccConfig

from conftest import make_entries


def entry_key(e):
    return (e.label, e.speaker_id, e.source_path, e.segment_index)


def make_manifest(counts, seed=0):
    return Manifest(
        mapping=["native", "non_native"],
        duration_s=5.0,
        mfcc_config=MfccConfig(),
        entries=make_entries(counts, seed=seed),
    )


class TestBuildManifest:
    def test_two_files_at_5s(self, tmp_path):
        rate = 22050
        rng = np.random.default_rng(0)
        for name in ("native", "non_native"):
            (tmp_path / name).mkdir()
        write_wav(tmp_path / "native" / "alice.wav", rng.uniform(-0.5, 0.5, 10 * rate), rate)
        write_wav(tmp_path / "non_native" / "bob.wav", rng.uniform(-0.5, 0.5, 10 * rate), rate)
        m = build_manifest(
            {"native": tmp_path / "native", "non_native": tmp_path / "non_native"}, 5.0
        )
        assert len(m.entries) == 4
        assert class_counts(m.entries) == [2, 2]
        assert m.mapping == ["native", "non_native"]
        assert {e.speaker_id for e in m.entries} == {"alice", "bob"}
        assert m.feature_shape == (212, 13)

    def test_unreadable_file_skipped(self, tmp_path, caplog):
        rate = 22050
        rng = np.random.default_rng(1)
        for name in ("native", "non_native"):
            (tmp_path / name).mkdir()
        write_wav(tmp_path / "native" / "good.wav", rng.uniform(-0.5, 0.5, 5 * rate), rate)
        write_wav(tmp_path / "non_native" / "ok.wav", rng.uniform(-0.5, 0.5, 5 * rate), rate)
        (tmp_path / "native" / "broken.wav").write_bytes(b"RIFF???!")
        with caplog.at_level("WARNING"):
            m = build_manifest(
                {"native": tmp_path / "native", "non_native": tmp_path / "non_native"}, 5.0
            )
        assert len(m.entries) == 2
        assert "broken.wav" in caplog.text

    def test_empty_corpus_rejected(self, tmp_path):
        for name in ("native", "non_native"):
            (tmp_path / name).mkdir()
        with pytest.raises(DatasetError):
            build_manifest(
                {"native": tmp_path / "native", "non_native": tmp_path / "non_native"}, 5.0
            )

    def test_parallel_build_matches_serial(self, tmp_path):
        rate = 22050
        rng = np.random.default_rng(8)
        for name in ("native", "non_native"):
            (tmp_path / name).mkdir()
            for i in range(2):
                write_wav(tmp_path / name / f"s{i}.wav",
                          rng.uniform(-0.5, 0.5, 6 * rate), rate)
        dirs = {"native": tmp_path / "native", "non_native": tmp_path / "non_native"}
        serial = build_manifest(dirs, 3.0)
        parallel = build_manifest(dirs, 3.0, jobs=2)
        assert len(serial.entries) == len(parallel.entries)
        for a, b in zip(serial.entries, parallel.entries):
            assert entry_key(a) == entry_key(b)
            np.testing.assert_array_equal(a.mfcc, b.mfcc)

    def test_resamples_to_processing_rate(self, tmp_path):
        rng = np.random.default_rng(2)
        for name in ("native", "non_native"):
            (tmp_path / name).mkdir()
        write_wav(tmp_path / "native" / "hi.wav", rng.uniform(-0.5, 0.5, 6 * 44100), 44100)
        write_wav(tmp_path / "non_native" / "lo.wav", rng.uniform(-0.5, 0.5, 6 * 22050), 22050)
        m = build_manifest(
            {"native": tmp_path / "native", "non_native": tmp_path / "non_native"}, 5.0
        )
        # both files come out as one 5 s segment at 22,050 Hz: 212 frames
        assert len(m.entries) == 2
        assert m.feature_shape == (212, 13)


class TestManifestSerialization:
    def test_round_trip_structurally_equal(self, tmp_path):
        m = make_manifest([3, 4])
        path = tmp_path / "m.json"
        save_manifest(m, path)
        loaded = load_manifest(path)
        assert loaded.mapping == m.mapping
        assert loaded.duration_s == m.duration_s
        assert loaded.mfcc_config == m.mfcc_config
        assert len(loaded.entries) == len(m.entries)
        for a, b in zip(m.entries, loaded.entries):
            assert entry_key(a) == entry_key(b)
            np.testing.assert_array_equal(a.mfcc, b.mfcc)

    def test_schema_keys(self, tmp_path):
        import json

        m = make_manifest([1, 1])
        path = tmp_path / "m.json"
        save_manifest(m, path)
        doc = json.loads(path.read_text())
        assert set(doc) == {"mapping", "duration_s", "mfcc_config", "entries"}
        assert set(doc["entries"][0]) == {
            "mfcc", "label", "speaker_id", "source_path", "segment_index"
        }

    def test_inconsistent_shapes_rejected(self):
        entries = make_entries([2, 2])
        entries[0].mfcc = np.zeros((9, 9), dtype=np.float32)
        with pytest.raises(DatasetError):
            Manifest(["native", "non_native"], 5.0, MfccConfig(), entries)

    def test_label_outside_mapping_rejected(self):
        entries = make_entries([2, 2])
        entries[0].label = 7
        with pytest.raises(DatasetError):
            Manifest(["native", "non_native"], 5.0, MfccConfig(), entries)


class TestSplit:
    def test_ann_scheme_counts(self):
        m = make_manifest([500, 500])
        parts = split(m, SplitSpec(inner_fractions=ANN_SCHEME, seed=3))
        assert len(parts.final_test) == 100
        assert len(parts.train) == 720
        assert len(parts.val) == 180
        assert parts.inner_test is None

    def test_deep_scheme_counts(self):
        m = make_manifest([500, 500])
        parts = split(m, SplitSpec(inner_fractions=DEEP_SCHEME, seed=3))
        assert (len(parts.final_test), len(parts.train), len(parts.val),
                len(parts.inner_test)) == (100, 720, 90, 90)

    def test_partitions_disjoint_and_exhaustive(self):
        m = make_manifest([60, 40])
        parts = split(m, SplitSpec(inner_fractions=DEEP_SCHEME, seed=1))
        all_ids = [id(e) for p in parts.partitions().values() for e in p]
        assert len(all_ids) == len(set(all_ids)) == len(m.entries)
        assert set(all_ids) == {id(e) for e in m.entries}

    def test_same_seed_reproducible(self):
        m = make_manifest([60, 40])
        a = split(m, SplitSpec(seed=7))
        b = split(m, SplitSpec(seed=7))
        for name in ("final_test", "train", "val"):
            assert [entry_key(e) for e in getattr(a, name)] == [
                entry_key(e) for e in getattr(b, name)
            ]

    def test_different_seeds_differ(self):
        m = make_manifest([60, 40])
        a = split(m, SplitSpec(seed=7))
        b = split(m, SplitSpec(seed=8))
        assert [entry_key(e) for e in a.final_test] != [entry_key(e) for e in b.final_test]

    def test_empty_partition_rejected(self):
        m = make_manifest([3, 2])
        with pytest.raises(DatasetError, match="empty"):
            split(m, SplitSpec(seed=0))

    def test_scheme_for_model(self):
        assert scheme_for_model("ann") == ANN_SCHEME
        assert scheme_for_model("cnn") == scheme_for_model("rnn") == DEEP_SCHEME


class TestSpeakerDisjointSplit:
    def _manifest(self, speakers_per_class=8, entries_per_speaker=10):
        rng = np.random.default_rng(0)
        entries = []
        for label in (0, 1):
            for s in range(speakers_per_class):
                for i in range(entries_per_speaker):
                    entries.append(
                        ds.ManifestEntry(
                            mfcc=rng.standard_normal((2, 3)).astype(np.float32),
                            label=label,
                            speaker_id=f"c{label}s{s}",
                            source_path=f"c{label}s{s}.wav",
                            segment_index=i,
                        )
                    )
        return Manifest(["native", "non_native"], 5.0, MfccConfig(), entries)

    def test_no_speaker_crosses_partitions(self):
        parts = split(self._manifest(), SplitSpec(seed=2, speaker_disjoint=True,
                                                  inner_fractions=DEEP_SCHEME))
        speaker_sets = [
            {e.speaker_id for e in p} for p in parts.partitions().values()
        ]
        for i in range(len(speaker_sets)):
            for j in range(i + 1, len(speaker_sets)):
                assert not (speaker_sets[i] & speaker_sets[j])

    def test_exhaustive(self):
        m = self._manifest()
        parts = split(m, SplitSpec(seed=2, speaker_disjoint=True))
        total = sum(len(p) for p in parts.partitions().values())
        assert total == len(m.entries)

    def test_single_speaker_per_class_infeasible(self):
        m = self._manifest(speakers_per_class=1)
        with pytest.raises(DatasetError, match="speaker"):
            split(m, SplitSpec(seed=0, speaker_disjoint=True))


class TestOversample:
    def test_paper_scale_counts(self):
        shared = np.zeros((1, 1), dtype=np.float32)
        entries = [
            ds.ManifestEntry(shared, 0, "n", "n.wav", i) for i in range(39083)
        ] + [
            ds.ManifestEntry(shared, 1, "x", "x.wav", i) for i in range(45340)
        ]
        out = oversample(entries, seed=0)
        assert class_counts(out) == [45340, 45340]

    def test_already_balanced_unchanged(self):
        entries = make_entries([5, 5])
        assert oversample(entries, seed=1) == entries

    def test_seeded_reference_draw(self):
        entries = make_entries([3, 7], seed=2)
        minority = [e for e in entries if e.label == 0]
        out = oversample(entries, seed=123)
        assert class_counts(out) == [7, 7]
        # duplicates must equal an independent draw from the same generator
        picks = np.random.default_rng(123).integers(0, 3, size=4)
        expected = entries + [minority[i] for i in picks]
        assert [entry_key(e) for e in out] == [entry_key(e) for e in expected]

    def test_single_class_rejected(self):
        with pytest.raises(DatasetError):
            oversample(make_entries([4, 0]), seed=0)


class TestUndersample:
    def test_paper_scale_counts(self):
        shared = np.zeros((1, 1), dtype=np.float32)
        entries = [
            ds.ManifestEntry(shared, 0, "n", "n.wav", i) for i in range(39083)
        ] + [
            ds.ManifestEntry(shared, 1, "x", "x.wav", i) for i in range(45340)
        ]
        out = undersample(entries, seed=0)
        assert class_counts(out) == [39083, 39083]

    def test_balanced_unchanged(self):
        entries = make_entries([4, 4])
        assert undersample(entries, seed=1) == entries

    def test_majority_subset_distinct_and_original(self):
        entries = make_entries([10, 4], seed=3)
        out = undersample(entries, seed=9)
        assert class_counts(out) == [4, 4]
        kept_major = [e for e in out if e.label == 0]
        keys = [entry_key(e) for e in kept_major]
        assert len(set(keys)) == 4
        original = {entry_key(e) for e in entries if e.label == 0}
        assert set(keys) <= original
        # minority untouched, input order preserved
        assert [e for e in out if e.label == 1] == [e for e in entries if e.label == 1]

    def test_single_class_rejected(self):
        with pytest.raises(DatasetError):
            undersample(make_entries([0, 4]), seed=0)


class TestBalanceDispatch:
    def test_none_returns_copy(self):
        entries = make_entries([2, 3])
        out = balance(entries, "none")
        assert out == entries and out is not entries

    def test_unknown_method(self):
        with pytest.raises(DatasetError):
            balance(make_entries([2, 3]), "smote")


class TestKfold:
    def test_five_folds_of_two(self):
        m = make_manifest([5, 5])
        pairs = kfold(m, k=5, seed=0)
        assert len(pairs) == 5
        assert all(len(val) == 2 for _, val in pairs)

    def test_union_and_disjointness(self):
        m = make_manifest([13, 17])
        pairs = kfold(m, k=5, seed=1)
        all_val = [i for _, val in pairs for i in val]
        assert sorted(all_val) == list(range(30))
        for train, val in pairs:
            assert not (set(train) & set(val))
            assert sorted(train + val) == list(range(30))

    def test_stratification_within_one(self):
        m = make_manifest([40, 60])
        labels = np.array([e.label for e in m.entries])
        for _, val in kfold(m, k=5, seed=2):
            fold_labels = labels[val]
            assert abs((fold_labels == 0).sum() - 8) <= 1
            assert abs((fold_labels == 1).sum() - 12) <= 1

    def test_k_too_large_rejected(self):
        m = make_manifest([3, 50])
        with pytest.raises(DatasetError):
            kfold(m, k=4, seed=0)

    def test_k_below_two_rejected(self):
        with pytest.raises(DatasetError):
            kfold_entries(make_entries([5, 5]), k=1)

    def test_reproducible(self):
        m = make_manifest([10, 10])
        assert kfold(m, 5, seed=3) == kfold(m, 5, seed=3)
