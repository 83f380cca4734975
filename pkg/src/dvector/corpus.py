"""Corpus layout, speaker-disjoint splits, 1.6 s segmentation and batch sampling.

Also holds the deterministic synthetic multispeaker voice generator used by
all desk-scale experiments. A synthetic utterance is an additive harmonic
signal whose harmonic amplitudes follow a speaker-specific formant envelope;
tokens shift the formants and pitch like vowels do.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .audio_io import CANONICAL_RATE, Waveform, read_wav, write_wav
from .dsp import ENCODER_PROFILE, FeatureProfile, MelSpectrogram, compute_features

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
MANIFEST_NAME = "manifest.csv"
MANIFEST_FIELDS = ["utterance_id", "speaker_id", "path", "split", "transcript_tokens"]

# synthetic voice ranges
F0_GRID_START = 65.0
F0_GRID_STEP = 15.0
F0_MAX = 400.0
N_TOKENS = 12
TOKEN_SECONDS = 0.15


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    speaker_id: str
    path: str
    split: str = ""
    tokens: Tuple[int, ...] = ()


@dataclass
class CorpusManifest:
    root: Path
    entries: List[ManifestEntry]

    def __post_init__(self):
        self.root = Path(self.root)
        ids = [e.utterance_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise CorpusError("duplicate utterance ids in manifest")
        self.check_disjoint()

    def speakers(self, split: Optional[str] = None) -> List[str]:
        seen: Dict[str, None] = {}
        for e in self.entries:
            if split is None or e.split == split:
                seen.setdefault(e.speaker_id)
        return list(seen)

    def split_speakers(self) -> Dict[str, set]:
        out: Dict[str, set] = {}
        for e in self.entries:
            if e.split:
                out.setdefault(e.split, set()).add(e.speaker_id)
        return out

    def check_disjoint(self) -> None:
        groups = self.split_speakers()
        names = sorted(groups)
        for a_i, a in enumerate(names):
            for b in names[a_i + 1 :]:
                both = groups[a] & groups[b]
                if both:
                    raise CorpusError(f"speakers {sorted(both)} appear in both {a!r} and {b!r}")

    def subset(self, split: Optional[str] = None, speakers: Optional[Sequence[str]] = None) -> "CorpusManifest":
        keep = [
            e
            for e in self.entries
            if (split is None or e.split == split) and (speakers is None or e.speaker_id in speakers)
        ]
        return CorpusManifest(self.root, keep)

    def by_speaker(self) -> Dict[str, List[ManifestEntry]]:
        out: Dict[str, List[ManifestEntry]] = {}
        for e in self.entries:
            out.setdefault(e.speaker_id, []).append(e)
        return out

    def wav_path(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def load(self, entry: ManifestEntry) -> Waveform:
        return read_wav(self.wav_path(entry))

    def write(self, path: Optional[Path] = None) -> Path:
        path = Path(path) if path is not None else self.root / MANIFEST_NAME
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(MANIFEST_FIELDS)
            for e in self.entries:
                w.writerow([e.utterance_id, e.speaker_id, e.path, e.split, " ".join(map(str, e.tokens))])
        return path

    @classmethod
    def read(cls, path) -> "CorpusManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != MANIFEST_FIELDS:
                raise CorpusError(f"{path}: expected columns {MANIFEST_FIELDS}, got {reader.fieldnames}")
            entries = [
                ManifestEntry(
                    row["utterance_id"],
                    row["speaker_id"],
                    row["path"],
                    row["split"],
                    tuple(int(t) for t in row["transcript_tokens"].split()),
                )
                for row in reader
            ]
        return cls(path.parent, entries)


@dataclass(frozen=True)
class SyntheticVoiceSpec:
    speaker_id: str
    f0_hz: float
    formant_hz: Tuple[float, ...]
    speaking_rate: float
    jitter_seed: int

    def __post_init__(self):
        if not 60.0 <= self.f0_hz <= F0_MAX:
            raise ValueError(f"f0 {self.f0_hz} Hz outside [60, 400]")
        f = self.formant_hz
        if not 2 <= len(f) <= 3 or any(b <= a for a, b in zip(f, f[1:])):
            raise ValueError("formants must be 2-3 ascending frequencies")
        if f[-1] >= CANONICAL_RATE / 2:
            raise ValueError("formants must lie below Nyquist")


def _token_table(seed: int = 1234) -> np.ndarray:
    # per-token multipliers (F1, F2, F3, f0, loudness), fixed for every corpus
    rng = np.random.default_rng(seed)
    return np.column_stack(
        [
            rng.uniform(0.75, 1.3, N_TOKENS),
            rng.uniform(0.8, 1.25, N_TOKENS),
            rng.uniform(0.92, 1.08, N_TOKENS),
            rng.uniform(0.9, 1.12, N_TOKENS),
            rng.uniform(0.6, 1.0, N_TOKENS),
        ]
    )


TOKEN_TABLE = _token_table()


MIN_VOICE_DISTANCE = 0.25  # in log-frequency units over (f0, F1, F2, F3)


def _voice_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(np.log(a) - np.log(b)))


def _draw_formants(rng: np.random.Generator) -> Tuple[float, float, float]:
    f1 = rng.uniform(320.0, 850.0)
    f2 = rng.uniform(max(f1 + 300.0, 950.0), 2300.0)
    f3 = rng.uniform(max(f2 + 300.0, 2400.0), 3400.0)
    return float(f1), float(f2), float(f3)


def draw_voices(
    n_speakers: int, rng: np.random.Generator, prefix: str = "spk", max_tries: int = 2000
) -> List[SyntheticVoiceSpec]:
    """Distinct f0 grid slots; formants are redrawn until every pair of voices is
    at least ``MIN_VOICE_DISTANCE`` apart, so no two speakers are near-duplicates."""
    n_slots = int((F0_MAX - F0_GRID_START) // F0_GRID_STEP) + 1
    if not 2 <= n_speakers <= n_slots:
        raise ValueError(f"synthetic corpus supports 2..{n_slots} speakers, got {n_speakers}")
    slots = rng.choice(n_slots, size=n_speakers, replace=False)
    voices: List[SyntheticVoiceSpec] = []
    points: List[np.ndarray] = []
    for k, slot in enumerate(slots):
        f0 = float(F0_GRID_START + F0_GRID_STEP * slot)
        for _ in range(max_tries):
            formants = _draw_formants(rng)
            point = np.array((f0,) + formants)
            if all(_voice_distance(point, q) >= MIN_VOICE_DISTANCE for q in points):
                break
        else:
            raise ValueError(f"could not place {n_speakers} voices {MIN_VOICE_DISTANCE} apart")
        points.append(point)
        voices.append(
            SyntheticVoiceSpec(
                speaker_id=f"{prefix}{k:02d}",
                f0_hz=f0,
                formant_hz=formants,
                speaking_rate=float(rng.uniform(0.8, 1.25)),
                jitter_seed=int(rng.integers(0, 2**31 - 1)),
            )
        )
    return voices


def _formant_gain(freqs: np.ndarray, formants: np.ndarray) -> np.ndarray:
    # sum of Lorentzian resonances, bandwidth growing with frequency
    out = np.full(freqs.shape, 0.02)
    for k in range(formants.shape[-1]):
        F = formants[..., k]
        bw = 60.0 + 0.06 * F
        out += (0.9**k) / (1.0 + ((freqs - F) / (0.5 * bw)) ** 2)
    return out


def synthesize_voice(
    voice: SyntheticVoiceSpec,
    tokens: Sequence[int],
    rng: np.random.Generator,
    sample_rate: int = CANONICAL_RATE,
    gain: float = 0.5,
) -> Waveform:
    """Render ``tokens`` in ``voice``; each token lasts ``0.15 s / speaking_rate``."""
    tokens = np.asarray(tokens, dtype=int)
    tok_len = int(round(TOKEN_SECONDS / voice.speaking_rate * sample_rate))
    n = tok_len * len(tokens)
    ctrl_hop = 80
    n_ctrl = n // ctrl_hop + 2
    t_ctrl = np.arange(n_ctrl) * ctrl_hop
    tok_idx = np.minimum(t_ctrl // tok_len, len(tokens) - 1)
    table = TOKEN_TABLE[tokens[tok_idx]]

    # smooth token-to-token transitions over ~20 ms
    k = max(1, int(0.02 * sample_rate / ctrl_hop))
    kernel = np.hanning(2 * k + 1)
    kernel /= kernel.sum()
    table = np.column_stack(
        [np.convolve(np.pad(col, k, mode="edge"), kernel, mode="valid") for col in table.T]
    )

    vib = 1.0 + 0.01 * np.sin(2 * np.pi * rng.uniform(4.0, 6.0) * t_ctrl / sample_rate)
    drift = 1.0 + 0.015 * np.cumsum(rng.normal(0, 0.15, n_ctrl)) / np.sqrt(n_ctrl)
    f0_ctrl = voice.f0_hz * table[:, 3] * vib * drift
    formants_ctrl = np.asarray(voice.formant_hz)[None, :] * table[:, : len(voice.formant_hz)]

    # per-token loudness with a raised-cosine envelope inside each token
    pos = (t_ctrl % tok_len) / tok_len
    env_ctrl = table[:, 4] * np.clip(np.sin(np.pi * pos) * 1.6, 0.0, 1.0)

    t = np.arange(n)
    f0 = np.interp(t, t_ctrl, f0_ctrl)
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    n_harm = int((0.45 * sample_rate) // f0_ctrl.min())
    h = np.arange(1, n_harm + 1)
    harm_f = h[None, :] * f0_ctrl[:, None]  # (n_ctrl, H)
    amp = _formant_gain(harm_f, formants_ctrl[:, None, :]) / np.sqrt(h)[None, :]
    amp *= (harm_f < 0.45 * sample_rate) * env_ctrl[:, None]

    y = np.zeros(n)
    for j in range(n_harm):
        y += np.interp(t, t_ctrl, amp[:, j]) * np.sin(h[j] * phase)
    y += rng.normal(0.0, 0.003 * np.abs(y).max() + 1e-6, n)
    peak = np.abs(y).max()
    return Waveform(y * (gain / peak) if peak > 0 else y, sample_rate)


def generate_synthetic_corpus(
    n_speakers: int,
    utts_per_speaker: int,
    seed: int,
    out_dir,
    min_seconds: float = 2.0,
    max_seconds: float = 4.0,
    prefix: str = "spk",
) -> CorpusManifest:
    """Write a seeded synthetic corpus as ``out_dir/<speaker>/<utt>.wav`` plus manifest."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    voices = draw_voices(n_speakers, rng, prefix=prefix)
    entries = []
    for voice in voices:
        spk_dir = out_dir / voice.speaker_id
        spk_dir.mkdir(parents=True, exist_ok=True)
        vrng = np.random.default_rng(voice.jitter_seed)
        for u in range(utts_per_speaker):
            seconds = vrng.uniform(min_seconds, max_seconds)
            n_tok = max(1, int(round(seconds * voice.speaking_rate / TOKEN_SECONDS)))
            tokens = vrng.integers(0, N_TOKENS, size=n_tok)
            wav = synthesize_voice(voice, tokens, vrng, gain=float(vrng.uniform(0.3, 0.7)))
            utt_id = f"{voice.speaker_id}_{u:03d}"
            rel = f"{voice.speaker_id}/{utt_id}.wav"
            write_wav(wav, out_dir / rel)
            entries.append(ManifestEntry(utt_id, voice.speaker_id, rel, "", tuple(int(x) for x in tokens)))
    manifest = CorpusManifest(out_dir, entries)
    manifest.write()
    write_voice_table(out_dir / "voices.csv", voices)
    return manifest


def write_voice_table(path: Path, voices: Sequence[SyntheticVoiceSpec]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["speaker_id", "f0_hz", "formant_hz", "speaking_rate", "jitter_seed"])
        for v in voices:
            w.writerow(
                [v.speaker_id, f"{v.f0_hz:.3f}", " ".join(f"{f:.3f}" for f in v.formant_hz),
                 f"{v.speaking_rate:.6f}", v.jitter_seed]
            )


def split_by_speaker(
    manifest: CorpusManifest, fractions: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0
) -> CorpusManifest:
    """Assign each speaker (and so all its utterances) to train/val/test."""
    fractions = np.asarray(fractions, dtype=float)
    if len(fractions) != len(SPLITS) or np.any(fractions < 0) or abs(fractions.sum() - 1.0) > 1e-9:
        raise CorpusError("fractions must be three non-negative weights summing to 1")
    speakers = sorted(manifest.speakers())
    n = len(speakers)
    counts = np.floor(fractions * n + 1e-9).astype(int)
    # hand out the remainder by largest fractional part, earliest split first
    rem = n - counts.sum()
    order = np.argsort(-(fractions * n - counts), kind="stable")
    for k in order[:rem]:
        counts[k] += 1
    if np.any((fractions > 0) & (counts == 0)):
        raise CorpusError(f"{n} speakers cannot fill every non-empty split {fractions.tolist()}")
    order = np.random.default_rng(seed).permutation(n)
    assign = {}
    start = 0
    for split, c in zip(SPLITS, counts):
        for k in order[start : start + c]:
            assign[speakers[k]] = split
        start += c
    return CorpusManifest(manifest.root, [replace(e, split=assign[e.speaker_id]) for e in manifest.entries])


def encoder_features(w: Waveform, profile: FeatureProfile = ENCODER_PROFILE, warp=None) -> MelSpectrogram:
    """Encoder log-mels with one frame per hop: ``T = floor(len / hop)``.

    The signal is zero-padded at the end by ``win - hop`` samples, so a 1.6 s
    utterance gives exactly 160 frames at a 10 ms hop.
    """
    win = profile.stft.win_length(w.sample_rate_hz)
    hop = profile.stft.hop_length(w.sample_rate_hz)
    padded = Waveform(np.concatenate([w.samples, np.zeros(win - hop)]), w.sample_rate_hz)
    return compute_features(padded, profile, warp=warp)


@dataclass
class SegmentIndex:
    segment_frames: int
    speaker_of: Dict[str, str]
    segments: Dict[str, List[Tuple[int, int]]]
    features: Dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    def by_speaker(self) -> Dict[str, List[Tuple[str, int, int]]]:
        out: Dict[str, List[Tuple[str, int, int]]] = {}
        for utt, segs in self.segments.items():
            spk = self.speaker_of[utt]
            out.setdefault(spk, []).extend((utt, s, e) for s, e in segs)
        return out

    def segment(self, utt: str, start: int) -> np.ndarray:
        return self.features[utt][start : start + self.segment_frames]


def segment_bounds(n_frames: int, segment_frames: int) -> List[Tuple[int, int]]:
    return [(k * segment_frames, (k + 1) * segment_frames) for k in range(n_frames // segment_frames)]


def index_segments(
    manifest: CorpusManifest,
    profile: FeatureProfile = ENCODER_PROFILE,
    segment_seconds: float = 1.6,
    features: Optional[Dict[str, np.ndarray]] = None,
) -> SegmentIndex:
    """Non-overlapping consecutive 1.6 s segments per utterance; remainder dropped."""
    seg_frames = int(round(segment_seconds * 1000.0 / profile.stft.hop_ms))
    feats = {} if features is None else dict(features)
    segments, speaker_of = {}, {}
    for e in manifest.entries:
        if e.utterance_id not in feats:
            feats[e.utterance_id] = encoder_features(manifest.load(e), profile).frames
        segs = segment_bounds(len(feats[e.utterance_id]), seg_frames)
        if not segs:
            log.warning("utterance %s is shorter than one %.1f s segment", e.utterance_id, segment_seconds)
        segments[e.utterance_id] = segs
        speaker_of[e.utterance_id] = e.speaker_id
    return SegmentIndex(seg_frames, speaker_of, segments, feats)


@dataclass(frozen=True)
class TrainBatchSpec:
    n_speakers: int = 8
    m_utts: int = 4
    seed: int = 0


def sample_batch(
    index: SegmentIndex, spec: TrainBatchSpec, rng: np.random.Generator
) -> List[List[Tuple[str, int, int]]]:
    """Pick N distinct speakers, then M distinct segments from each."""
    pool = index.by_speaker()
    eligible = sorted(s for s, segs in pool.items() if len(segs) >= spec.m_utts)
    if len(eligible) < spec.n_speakers:
        raise CorpusError(
            f"only {len(eligible)} speakers have >= {spec.m_utts} segments; batch needs {spec.n_speakers}"
        )
    chosen = rng.choice(len(eligible), size=spec.n_speakers, replace=False)
    batch = []
    for k in chosen:
        segs = pool[eligible[k]]
        pick = rng.choice(len(segs), size=spec.m_utts, replace=False)
        batch.append([segs[p] for p in pick])
    return batch
