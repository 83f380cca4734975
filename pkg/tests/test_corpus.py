import hashlib
import logging

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from dvector.audio_io import Waveform, write_wav
from dvector.corpus import (
    MIN_VOICE_DISTANCE,
    CorpusError,
    CorpusManifest,
    ManifestEntry,
    SegmentIndex,
    SyntheticVoiceSpec,
    TrainBatchSpec,
    draw_voices,
    encoder_features,
    generate_synthetic_corpus,
    index_segments,
    sample_batch,
    split_by_speaker,
)


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return generate_synthetic_corpus(8, 10, seed=5, out_dir=root, min_seconds=1.0, max_seconds=2.0)


class TestVoices:
    def test_two_speakers_gap(self):
        a, b = draw_voices(2, np.random.default_rng(0))
        assert abs(a.f0_hz - b.f0_hz) >= 15.0

    @pytest.mark.parametrize("seed", range(5))
    def test_all_gaps(self, seed):
        voices = draw_voices(23, np.random.default_rng(seed))
        f0 = np.sort([v.f0_hz for v in voices])
        assert np.all(np.diff(f0) >= 15.0)
        assert all(60 <= v <= 400 for v in f0)
        pts = np.log([[v.f0_hz, *v.formant_hz] for v in voices])
        d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
        assert d[np.triu_indices(23, 1)].min() >= MIN_VOICE_DISTANCE

    def test_too_many(self):
        with pytest.raises(ValueError):
            draw_voices(24, np.random.default_rng(0))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SyntheticVoiceSpec("x", 50.0, (500.0, 1500.0), 1.0, 0)
        with pytest.raises(ValueError):
            SyntheticVoiceSpec("x", 100.0, (1500.0, 500.0), 1.0, 0)
        with pytest.raises(ValueError):
            SyntheticVoiceSpec("x", 100.0, (500.0, 9000.0), 1.0, 0)


class TestGeneration:
    def test_layout(self, small_corpus):
        root = small_corpus.root
        assert (root / "manifest.csv").exists()
        assert len(small_corpus.entries) == 80
        for e in small_corpus.entries:
            assert e.path == f"{e.speaker_id}/{e.utterance_id}.wav"
            w = small_corpus.load(e)
            assert 0.9 <= w.duration_s <= 2.1 and w.sample_rate_hz == 16000
            assert len(e.tokens) > 0
        again = CorpusManifest.read(root)
        assert again.entries == small_corpus.entries

    def test_deterministic(self, tmp_path):
        a = generate_synthetic_corpus(2, 2, seed=9, out_dir=tmp_path / "a", min_seconds=0.5, max_seconds=0.8)
        b = generate_synthetic_corpus(2, 2, seed=9, out_dir=tmp_path / "b", min_seconds=0.5, max_seconds=0.8)
        assert tree_digest(a.root) == tree_digest(b.root)

    def test_linear_separability(self, small_corpus):
        X, y = [], []
        for e in small_corpus.entries:
            X.append(encoder_features(small_corpus.load(e)).frames.mean(axis=0))
            y.append(e.speaker_id)
        X, y = np.array(X), np.array(y)
        test = np.arange(len(y)) % 5 == 0
        clf = LogisticRegression(max_iter=5000).fit(X[~test], y[~test])
        assert clf.score(X[test], y[test]) > 0.9


class TestSplit:
    def make(self, n):
        return CorpusManifest("/tmp", [ManifestEntry(f"u{k}_{j}", f"s{k}", f"s{k}/u{k}_{j}.wav")
                                       for k in range(n) for j in range(2)])

    def test_counts(self):
        m = split_by_speaker(self.make(10), (0.6, 0.2, 0.2), seed=0)
        groups = m.split_speakers()
        assert [len(groups[s]) for s in ("train", "val", "test")] == [6, 2, 2]

    def test_disjoint_and_seeded(self):
        a = split_by_speaker(self.make(10), (0.6, 0.2, 0.2), seed=4)
        b = split_by_speaker(self.make(10), (0.6, 0.2, 0.2), seed=4)
        assert a.entries == b.entries
        g = a.split_speakers()
        assert not (g["train"] & g["val"]) and not (g["train"] & g["test"]) and not (g["val"] & g["test"])
        for spk, entries in a.by_speaker().items():
            assert len({e.split for e in entries}) == 1

    def test_too_few(self):
        with pytest.raises(CorpusError):
            split_by_speaker(self.make(2), (0.6, 0.2, 0.2))

    def test_bad_fractions(self):
        with pytest.raises(CorpusError):
            split_by_speaker(self.make(4), (0.5, 0.2, 0.2))

    def test_overlap_rejected(self):
        entries = [ManifestEntry("a", "s", "s/a.wav", "train"), ManifestEntry("b", "s", "s/b.wav", "test")]
        with pytest.raises(CorpusError):
            CorpusManifest("/tmp", entries)

    def test_duplicate_ids(self):
        with pytest.raises(CorpusError):
            CorpusManifest("/tmp", [ManifestEntry("a", "s", "x.wav"), ManifestEntry("a", "t", "y.wav")])


class TestSegments:
    def corpus(self, tmp_path, seconds):
        entries = []
        for k, sec in enumerate(seconds):
            rel = f"s/u{k}.wav"
            (tmp_path / "s").mkdir(exist_ok=True)
            write_wav(Waveform(0.1 * np.random.default_rng(k).normal(size=int(sec * 16000))), tmp_path / rel)
            entries.append(ManifestEntry(f"u{k}", "s", rel))
        return CorpusManifest(tmp_path, entries)

    def test_counts(self, tmp_path, caplog):
        with caplog.at_level(logging.WARNING):
            idx = index_segments(self.corpus(tmp_path, [3.3, 1.6, 1.0]))
        assert [len(idx.segments[u]) for u in ("u0", "u1", "u2")] == [2, 1, 0]
        assert "shorter" in caplog.text
        for utt, segs in idx.segments.items():
            for s, e in segs:
                assert e - s == 160 and 0 <= s and e <= len(idx.features[utt])
                assert idx.segment(utt, s).shape == (160, 40)


def synthetic_index(n_spk, n_seg):
    segments = {f"s{k}/u": [(j * 160, (j + 1) * 160) for j in range(n_seg)] for k in range(n_spk)}
    return SegmentIndex(160, {u: u.split("/")[0] for u in segments}, segments)


class TestSampleBatch:
    def test_full_corpus(self):
        idx = synthetic_index(4, 3)
        batch = sample_batch(idx, TrainBatchSpec(4, 3), np.random.default_rng(0))
        got = sorted(seg for spk in batch for seg in spk)
        assert got == sorted(seg for segs in idx.by_speaker().values() for seg in segs)

    def test_same_state(self):
        idx = synthetic_index(10, 6)
        spec = TrainBatchSpec(4, 3)
        assert sample_batch(idx, spec, np.random.default_rng(3)) == sample_batch(idx, spec, np.random.default_rng(3))

    def test_distinct(self):
        batch = sample_batch(synthetic_index(10, 6), TrainBatchSpec(5, 4), np.random.default_rng(1))
        assert len({spk[0][0] for spk in batch}) == 5
        for spk in batch:
            assert len(set(spk)) == 4

    def test_insufficient(self):
        with pytest.raises(CorpusError):
            sample_batch(synthetic_index(3, 6), TrainBatchSpec(4, 2), np.random.default_rng(0))

    def test_uniform_selection(self):
        n_spk, N, draws = 12, 4, 10000
        idx = synthetic_index(n_spk, 5)
        rng = np.random.default_rng(11)
        counts = dict.fromkeys(idx.by_speaker(), 0)
        for _ in range(draws):
            for spk in sample_batch(idx, TrainBatchSpec(N, 2), rng):
                counts[spk[0][0].split("/")[0]] += 1
        p = N / n_spk
        sigma = np.sqrt(draws * p * (1 - p))
        for c in counts.values():
            assert abs(c - draws * p) <= 3 * sigma
