"""Speaker-conditioned toy spectrogram decoder and transfer measurement.

The decoder is attention free: every token is expanded to ``frames_per_token``
frames, and each frame's input is the token embedding, a within-token phase
feature and the speaker embedding, concatenated. A projected LSTM and a
linear layer produce 80-channel log-mel frames. Transfer is measured by
re-encoding decoder output with the frozen speaker encoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .dsp import (
    ENCODER_PROFILE,
    TARGET_PROFILE,
    FeatureProfile,
    MelSpectrogram,
    cached_filterbank,
    analysis_window,
    mel_to_linear,
)
from .encoder import EncoderModel, embed_utterance, l2_normalize
from .nn_core import (
    AdamState,
    LstmLayerParams,
    adam_step,
    clip_by_global_norm,
    lstm_backward,
    lstm_forward,
    xavier_uniform,
)
from .persistence import load_checkpoint, save_checkpoint

OUTPUT_DIM = TARGET_PROFILE.mel.n_mels


@dataclass(frozen=True)
class ConditionedDecoderConfig:
    token_vocab_size: int = 12
    token_embed_dim: int = 16
    cell_dim: int = 128
    proj_dim: int = 64
    speaker_dim: int = 64
    output_dim: int = OUTPUT_DIM
    frames_per_token: int = 12
    lr: float = 2e-3
    clip_norm: float = 3.0

    def __post_init__(self):
        if self.output_dim != OUTPUT_DIM:
            raise ValueError(f"decoder output must match the {OUTPUT_DIM}-channel target profile")
        for name in ("token_vocab_size", "token_embed_dim", "cell_dim", "proj_dim", "speaker_dim",
                     "frames_per_token"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def input_dim(self) -> int:
        return self.token_embed_dim + 2 + self.speaker_dim


CONFIG_KEYS = ("token_vocab_size", "token_embed_dim", "cell_dim", "proj_dim", "speaker_dim",
               "output_dim", "frames_per_token")


def combined_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """``mean((p - t)^2) + mean(|p - t|)`` and its (sub)gradient, 0 where ``p == t``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction {pred.shape} and target {target.shape} differ in shape")
    diff = pred - target
    n = diff.size
    loss = float(np.mean(diff * diff) + np.mean(np.abs(diff)))
    grad = (2.0 * diff + np.sign(diff)) / n
    return loss, grad


@dataclass
class SynthesisResult:
    mel: np.ndarray  # (T, 80)
    embedding: np.ndarray
    tokens: Tuple[int, ...]


@dataclass
class DecoderModel:
    config: ConditionedDecoderConfig
    token_table: np.ndarray  # (V, E)
    lstm: LstmLayerParams
    W_out: np.ndarray  # (80, R)
    b_out: np.ndarray  # (80,)

    @classmethod
    def init(cls, config: ConditionedDecoderConfig, seed: int, output_mean: Optional[np.ndarray] = None):
        rng = np.random.default_rng(seed)
        table = rng.normal(0.0, 1.0, size=(config.token_vocab_size, config.token_embed_dim))
        lstm = LstmLayerParams.init(config.input_dim, config.cell_dim, config.proj_dim, rng)
        W_out = xavier_uniform(rng, config.output_dim, config.proj_dim)
        b_out = np.zeros(config.output_dim) if output_mean is None else np.array(output_mean, dtype=float)
        return cls(config, table, lstm, W_out, b_out)

    def tensors(self) -> Dict[str, np.ndarray]:
        out = {"token_table": self.token_table, "W_out": self.W_out, "b_out": self.b_out}
        out.update({f"lstm.{k}": v for k, v in self.lstm.tensors().items()})
        return out

    def save(self, path) -> None:
        state = {f"config.{k}": np.array([getattr(self.config, k)], dtype=float) for k in CONFIG_KEYS}
        state.update(self.tensors())
        save_checkpoint(path, state)

    @classmethod
    def load(cls, path) -> "DecoderModel":
        t = load_checkpoint(path)
        cfg = ConditionedDecoderConfig(**{k: int(t[f"config.{k}"][0, 0]) for k in CONFIG_KEYS})
        C, R = cfg.cell_dim, cfg.proj_dim
        lstm = LstmLayerParams(
            W=t["lstm.W"].reshape(4 * C, cfg.input_dim + R),
            b=t["lstm.b"].reshape(4 * C),
            P=t["lstm.P"].reshape(R, C),
            p=t["lstm.p"].reshape(R),
        )
        return cls(cfg, t["token_table"].reshape(cfg.token_vocab_size, cfg.token_embed_dim), lstm,
                   t["W_out"].reshape(cfg.output_dim, R), t["b_out"].reshape(cfg.output_dim))

    def _inputs(self, tokens: np.ndarray, embeddings: np.ndarray) -> np.ndarray:
        # tokens (B, K), embeddings (B, D) -> (K*F, B, input_dim)
        cfg = self.config
        B, K = tokens.shape
        F = cfg.frames_per_token
        tok = np.repeat(self.token_table[tokens], F, axis=1)  # (B, K*F, E)
        phase = 2.0 * np.pi * (np.arange(K * F) % F + 0.5) / F
        ph = np.broadcast_to(np.stack([np.sin(phase), np.cos(phase)], axis=1), (B, K * F, 2))
        spk = np.broadcast_to(embeddings[:, None, :], (B, K * F, embeddings.shape[1]))
        return np.concatenate([tok, ph, spk], axis=2).transpose(1, 0, 2)

    def forward(self, tokens: np.ndarray, embeddings: np.ndarray):
        x = self._inputs(tokens, embeddings)
        r, cache = lstm_forward(self.lstm, x)
        return r @ self.W_out.T + self.b_out, (cache, r)

    def check_inputs(self, tokens, embedding: np.ndarray) -> np.ndarray:
        tokens = np.asarray(tokens, dtype=int).reshape(-1)
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.config.token_vocab_size):
            raise ValueError(f"token ids must lie in [0, {self.config.token_vocab_size})")
        emb = np.asarray(embedding, dtype=np.float64)
        if emb.shape != (self.config.speaker_dim,):
            raise ValueError(f"expected a {self.config.speaker_dim}-dim speaker embedding")
        if abs(np.linalg.norm(emb) - 1.0) > 1e-6:
            raise ValueError("speaker embedding must be unit norm")
        return tokens

    def synthesize(self, tokens: Sequence[int], embedding: np.ndarray) -> SynthesisResult:
        tokens = self.check_inputs(tokens, embedding)
        emb = np.asarray(embedding, dtype=np.float64)
        if tokens.size == 0:
            return SynthesisResult(np.zeros((0, self.config.output_dim)), emb, ())
        y, _ = self.forward(tokens[None, :], emb[None, :])
        return SynthesisResult(y[:, 0, :], emb, tuple(int(t) for t in tokens))


def synthesize(model: DecoderModel, tokens: Sequence[int], embedding: np.ndarray) -> SynthesisResult:
    return model.synthesize(tokens, embedding)


def time_normalize(frames: np.ndarray, n_out: int) -> np.ndarray:
    """Linearly resample ``(T, C)`` frames to ``n_out`` frames spanning the same duration."""
    frames = np.asarray(frames, dtype=np.float64)
    T = len(frames)
    src = (np.arange(n_out) + 0.5) * T / n_out - 0.5
    src = np.clip(src, 0.0, T - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, T - 1)
    a = (src - lo)[:, None]
    return frames[lo] * (1.0 - a) + frames[hi] * a


def _window_gain_log(src: FeatureProfile, dst: FeatureProfile) -> float:
    # log power ratio of the two analysis windows for a stationary tone
    ws = analysis_window(src.stft, src.sample_rate).sum()
    wd = analysis_window(dst.stft, dst.sample_rate).sum()
    return 2.0 * float(np.log(ws / wd))


def bridge_to_encoder(
    mel80: np.ndarray,
    method: str = "spectral",
    src: FeatureProfile = TARGET_PROFILE,
    dst: FeatureProfile = ENCODER_PROFILE,
) -> np.ndarray:
    """Map target-profile log-mels onto the encoder profile without a vocoder.

    ``pairs`` averages adjacent channel pairs (in energy); ``spectral`` inverts
    the 80-band filterbank to linear energy, folds it onto the encoder's FFT
    grid and applies the 40-band filterbank. Both then correct the window gain
    and resample frames from the source to the destination hop, aligning
    window centres, by linear interpolation.
    """
    mel80 = np.asarray(mel80, dtype=np.float64)
    if mel80.ndim != 2 or mel80.shape[1] != src.mel.n_mels:
        raise ValueError(f"expected (T, {src.mel.n_mels}) mel frames")
    if method == "pairs":
        if src.mel.n_mels != 2 * dst.mel.n_mels:
            raise ValueError("pair averaging needs exactly twice the destination channels")
        bands = np.logaddexp(mel80[:, 0::2], mel80[:, 1::2]) - np.log(2.0)
    elif method == "spectral":
        spec = MelSpectrogram(mel80, src.stft, src.mel, src.sample_rate)
        lin = mel_to_linear(spec, iterations=100) ** 2
        ratio = src.stft.fft_size // dst.stft.fft_size
        if ratio * dst.stft.fft_size != src.stft.fft_size:
            raise ValueError("spectral bridge needs an integer FFT-size ratio")
        # triangular fold of fine bins onto the coarse grid keeps total energy
        n_dst = dst.stft.n_bins
        folded = np.zeros((len(lin), n_dst))
        for off in range(-ratio + 1, ratio):
            w = 1.0 - abs(off) / ratio
            src_idx = np.arange(n_dst) * ratio + off
            ok = (src_idx >= 0) & (src_idx < lin.shape[1])
            folded[:, ok] += w * lin[:, src_idx[ok]]
        fb = cached_filterbank(dst.mel, dst.stft.fft_size, dst.sample_rate)
        bands = np.log(np.maximum(folded @ fb.T, dst.mel.log_floor))
    else:
        raise ValueError(f"unknown bridge method {method!r}")
    bands = bands - _window_gain_log(src, dst)
    T = len(bands)
    if T == 0:
        return np.zeros((0, dst.mel.n_mels))
    sr = src.sample_rate
    hop_s, win_s = src.stft.hop_length(sr), src.stft.win_length(sr)
    hop_d, win_d = dst.stft.hop_length(dst.sample_rate), dst.stft.win_length(dst.sample_rate)
    n_samples = (T - 1) * hop_s + win_s
    n_out = n_samples // hop_d
    pos = (np.arange(n_out) * hop_d + 0.5 * win_d - 0.5 * win_s) / hop_s
    pos = np.clip(pos, 0.0, T - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, T - 1)
    a = (pos - lo)[:, None]
    return bands[lo] * (1.0 - a) + bands[hi] * a


@dataclass(frozen=True)
class FormantWarp:
    """Smooth frequency warp that rescales the formant regions independently.

    The scale factor is interpolated in log space between anchor frequencies
    and is exactly 1 at the last anchor and above, so the top of the band is
    left alone.
    """

    log_factors: Tuple[float, ...]
    anchors_hz: Tuple[float, ...] = (500.0, 1500.0, 2800.0, 5000.0)

    def __post_init__(self):
        if len(self.log_factors) != len(self.anchors_hz) - 1:
            raise ValueError("need one log factor per anchor except the last")
        if np.any(np.diff(self.anchors_hz) <= 0):
            raise ValueError("anchor frequencies must increase")

    def __call__(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=np.float64)
        logs = np.append(np.asarray(self.log_factors, dtype=np.float64), 0.0)
        return np.maximum.accumulate(f * np.exp(np.interp(f, self.anchors_hz, logs)))

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        low: float = 0.75,
        high: float = 1.3,
        anchors_hz: Tuple[float, ...] = (500.0, 1500.0, 2800.0, 5000.0),
    ) -> "FormantWarp":
        if not 0 < low <= high:
            raise ValueError("warp range must satisfy 0 < low <= high")
        logs = rng.uniform(np.log(low), np.log(high), len(anchors_hz) - 1)
        return cls(tuple(float(x) for x in logs), tuple(float(a) for a in anchors_hz))


@dataclass
class DecoderExample:
    utterance_id: str
    speaker_id: str
    tokens: Tuple[int, ...]
    target: np.ndarray  # (T, 80) target-profile log-mels
    reference: np.ndarray  # (T', 40) encoder features of the same utterance


def _prepare(example: DecoderExample, cfg: ConditionedDecoderConfig, encoder: EncoderModel):
    if example.target.ndim != 2 or example.target.shape[1] != cfg.output_dim:
        raise ValueError(f"{example.utterance_id}: target must have {cfg.output_dim} channels")
    if example.reference.shape[1] != encoder.config.input_dim:
        raise ValueError(f"{example.utterance_id}: reference features do not fit the encoder")
    tokens = np.asarray(example.tokens, dtype=int)
    target = time_normalize(example.target, len(tokens) * cfg.frames_per_token)
    return tokens, target, embed_utterance(encoder, example.reference)


def train_decoder(
    examples: Sequence[DecoderExample],
    encoder: EncoderModel,
    config: ConditionedDecoderConfig = ConditionedDecoderConfig(),
    steps: int = 2000,
    seed: int = 0,
    batch_size: int = 8,
    crop_tokens: int = 8,
    curve: Optional[List[float]] = None,
) -> DecoderModel:
    """Train on (tokens, target mel) pairs conditioned on the frozen encoder's
    embedding of each target utterance itself. ``encoder`` is never modified.
    """
    if not examples:
        raise ValueError("decoder training needs at least one example")
    prepared = [_prepare(e, config, encoder) for e in examples]
    usable = [p for p in prepared if len(p[0]) >= crop_tokens]
    if not usable:
        raise ValueError(f"no example has at least {crop_tokens} tokens")
    out_mean = np.concatenate([p[1] for p in prepared]).mean(axis=0)
    model = DecoderModel.init(config, seed, output_mean=out_mean)
    rng = np.random.default_rng([seed, 1])
    opt = AdamState()
    F = config.frames_per_token
    for _ in range(steps):
        pick = rng.integers(0, len(usable), size=batch_size)
        toks, tgts, embs = [], [], []
        for k in pick:
            tokens, target, emb = usable[k]
            s = int(rng.integers(0, len(tokens) - crop_tokens + 1))
            toks.append(tokens[s : s + crop_tokens])
            tgts.append(target[s * F : (s + crop_tokens) * F])
            embs.append(emb)
        toks = np.stack(toks)
        tgt = np.stack(tgts, axis=1)  # (T, B, 80)
        y, (cache, r) = model.forward(toks, np.stack(embs))
        loss, dy = combined_loss(y, tgt)
        if curve is not None:
            curve.append(loss)
        grads = {
            "W_out": np.einsum("tbo,tbr->or", dy, r),
            "b_out": dy.sum(axis=(0, 1)),
        }
        g_lstm, dx = lstm_backward(cache, dy @ model.W_out)
        grads.update({f"lstm.{k}": v for k, v in g_lstm.items()})
        # token-embedding slice of the input gradient, summed per token id
        E = config.token_embed_dim
        d_tok = dx[:, :, :E].transpose(1, 0, 2).reshape(batch_size, crop_tokens, F, E).sum(axis=2)
        g_table = np.zeros_like(model.token_table)
        np.add.at(g_table, toks.reshape(-1), d_tok.reshape(-1, E))
        grads["token_table"] = g_table
        clip_by_global_norm(grads, config.clip_norm)
        adam_step(model.tensors(), grads, opt, lr=config.lr)
    return model


def decoder_loss(model: DecoderModel, examples: Sequence[DecoderExample], encoder: EncoderModel) -> float:
    """Mean combined loss over whole utterances."""
    losses = []
    for e in examples:
        tokens, target, emb = _prepare(e, model.config, encoder)
        losses.append(combined_loss(model.synthesize(tokens, emb).mel, target)[0])
    return float(np.mean(losses))


Synthesizer = Union[DecoderModel, Callable[[Sequence[int], np.ndarray], np.ndarray]]


def _run(decoder: Synthesizer, tokens, embedding) -> np.ndarray:
    if isinstance(decoder, DecoderModel):
        return decoder.synthesize(tokens, embedding).mel
    return np.asarray(decoder(tokens, embedding))


@dataclass
class HeldOutSpeaker:
    embedding: np.ndarray  # conditioning embedding from real reference speech
    phrases: List[Tuple[int, ...]] = field(default_factory=list)


def reencode(decoder: Synthesizer, encoder: EncoderModel, tokens, embedding, bridge: str = "spectral") -> np.ndarray:
    mel = _run(decoder, tokens, embedding)
    return embed_utterance(encoder, bridge_to_encoder(mel, method=bridge))


def transfer_consistency(
    decoder: Synthesizer,
    encoder: EncoderModel,
    held_out: Mapping[str, HeldOutSpeaker],
    bridge: str = "spectral",
) -> Dict[str, dict]:
    """Synthesize every phrase for every held-out speaker and re-encode it.

    Per speaker: ``cosine`` between the mean re-encoded embedding and the
    conditioning embedding, ``nearest`` held-out speaker by that cosine,
    ``match`` whether it is the speaker itself, and the per-phrase
    ``synthetic`` embeddings.
    """
    ids = list(held_out)
    cond = np.stack([l2_normalize(np.asarray(held_out[s].embedding, dtype=float)) for s in ids])
    out = {}
    for spk in ids:
        spec = held_out[spk]
        syn = np.stack([reencode(decoder, encoder, ph, cond[ids.index(spk)], bridge) for ph in spec.phrases])
        mean = l2_normalize(syn.mean(axis=0))
        cos = cond @ mean
        nearest = ids[int(np.argmax(cos))]
        out[spk] = {
            "cosine": float(cos[ids.index(spk)]),
            "nearest": nearest,
            "match": nearest == spk,
            "conditioning": cond[ids.index(spk)],
            "synthetic": syn,
        }
    return out


def match_rate(report: Mapping[str, dict]) -> float:
    return float(np.mean([r["match"] for r in report.values()]))


N_WARPS = 8
WARP_RANGE = (0.75, 1.3)


@dataclass
class TransferDemoResult:
    decoder: DecoderModel
    curve: List[float]
    train_speakers: List[str]
    held_out_speakers: List[str]
    report: Dict[str, dict]
    match_rate: float
    similarity: Dict[str, Dict[str, float]]
    real: Dict[str, List[Tuple[str, np.ndarray]]]
    synthetic: Dict[str, List[Tuple[str, np.ndarray]]]
    phrases: List[Tuple[int, ...]]


def run_transfer_demo(
    manifest,
    encoder: EncoderModel,
    n_train_speakers: int = 8,
    steps: int = 2000,
    seed: int = 0,
    n_phrases: int = 4,
    phrase_tokens: int = 16,
    n_reference: int = 5,
    config: ConditionedDecoderConfig = ConditionedDecoderConfig(),
    bridge: str = "spectral",
    n_warps: int = N_WARPS,
    warp_range: Tuple[float, float] = WARP_RANGE,
) -> TransferDemoResult:
    """Train the decoder on some speakers and measure transfer to the rest.

    Each held-out speaker is conditioned on the mean embedding of its first
    ``n_reference`` utterances; its remaining utterances form the real set
    that synthetic output is compared against.

    Every training utterance is also used under ``n_warps`` random formant
    warps, each paired with the frozen encoder's embedding of the warped
    audio. Eight voices are too few points for the decoder to interpolate
    between; the warps fill in the space around them.
    """
    from .corpus import encoder_features
    from .dsp import compute_features
    from .verification import similarity_report

    speakers = sorted(manifest.speakers())
    if not 1 <= n_train_speakers < len(speakers):
        raise ValueError(f"need 1..{len(speakers) - 1} decoder speakers, got {n_train_speakers}")
    rng = np.random.default_rng([seed, 7])
    order = rng.permutation(len(speakers))
    train_spk = sorted(speakers[k] for k in order[:n_train_speakers])
    held_spk = sorted(speakers[k] for k in order[n_train_speakers:])
    groups = manifest.by_speaker()

    warp_rng = np.random.default_rng([seed, 11])
    examples = []
    for s in train_spk:
        for entry in groups[s]:
            w = manifest.load(entry)
            warps = [None] + [FormantWarp.random(warp_rng, *warp_range) for _ in range(n_warps)]
            for k, warp in enumerate(warps):
                examples.append(DecoderExample(
                    entry.utterance_id if warp is None else f"{entry.utterance_id}~w{k}", entry.speaker_id,
                    entry.tokens, compute_features(w, TARGET_PROFILE, warp=warp).frames,
                    encoder_features(w, warp=warp).frames))
    curve: List[float] = []
    decoder = train_decoder(examples, encoder, config, steps=steps, seed=seed, curve=curve)

    phrases = [tuple(int(t) for t in rng.integers(0, config.token_vocab_size, phrase_tokens))
               for _ in range(n_phrases)]
    held, real = {}, {}
    for s in held_spk:
        entries = groups[s]
        if len(entries) < n_reference + 2:
            raise ValueError(f"held-out speaker {s!r} needs at least {n_reference + 2} utterances")
        embs = [(e.utterance_id, embed_utterance(encoder, encoder_features(manifest.load(e)))) for e in entries]
        ref = np.mean([v for _, v in embs[:n_reference]], axis=0)
        held[s] = HeldOutSpeaker(l2_normalize(ref), list(phrases))
        real[s] = embs[n_reference:]
    report = transfer_consistency(decoder, encoder, held, bridge=bridge)
    synthetic = {s: [(f"{s}/syn{k:02d}", v) for k, v in enumerate(report[s]["synthetic"])] for s in held_spk}
    similarity = similarity_report(
        {s: [v for _, v in real[s]] for s in held_spk}, {s: [v for _, v in synthetic[s]] for s in held_spk}
    )
    return TransferDemoResult(decoder, curve, train_spk, held_spk, report, match_rate(report), similarity,
                              real, synthetic, phrases)
