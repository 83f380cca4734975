"""d-vector speaker encoder: stacked projected LSTMs over 40-channel log-mels.

The embedding of a frame sequence is the L2-normalized top-layer output at
the final frame. Utterances are embedded by averaging over 800 ms windows
with 50 % overlap.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import ge2e
from .corpus import SegmentIndex, TrainBatchSpec, sample_batch
from .dsp import ENCODER_PROFILE
from .nn_core import AdamState, LstmLayerParams, adam_step, clip_by_global_norm, lstm_backward, lstm_forward
from .persistence import load_checkpoint, save_checkpoint, tensors_digest

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncoderConfig:
    n_layers: int = 3
    input_dim: int = 40
    cell_dim: int = 256
    proj_dim: int = 64
    segment_frames: int = 160
    window_frames: int = 80
    window_hop_frames: int = 40
    lr: float = 1e-3
    clip_norm: float = 3.0

    def __post_init__(self):
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if self.window_hop_frames * 2 != self.window_frames:
            raise ValueError("inference windows overlap by 50%: hop must be window / 2")

    @property
    def embedding_dim(self) -> int:
        return self.proj_dim


# 256 cells / 64-dim projection for small training sets
SMALL_PROFILE = EncoderConfig()
PAPER_PROFILE = EncoderConfig(cell_dim=768, proj_dim=256)

CONFIG_KEYS = ("n_layers", "input_dim", "cell_dim", "proj_dim", "segment_frames",
               "window_frames", "window_hop_frames")


@dataclass
class EncoderModel:
    config: EncoderConfig
    layers: List[LstmLayerParams]
    scale: ge2e.SimilarityScale = field(default_factory=ge2e.SimilarityScale)
    input_mean: Optional[np.ndarray] = None
    input_std: Optional[np.ndarray] = None

    @classmethod
    def init(cls, config: EncoderConfig, seed: int) -> "EncoderModel":
        rng = np.random.default_rng(seed)
        layers = []
        for k in range(config.n_layers):
            in_dim = config.input_dim if k == 0 else config.proj_dim
            layers.append(LstmLayerParams.init(in_dim, config.cell_dim, config.proj_dim, rng))
        return cls(config, layers)

    def tensors(self) -> Dict[str, np.ndarray]:
        out = {}
        for k, layer in enumerate(self.layers):
            for name, arr in layer.tensors().items():
                out[f"lstm{k}.{name}"] = arr
        return out

    def state(self) -> Dict[str, np.ndarray]:
        """Everything a checkpoint needs, including config and normalization."""
        out = {f"config.{k}": np.array([getattr(self.config, k)], dtype=np.float64) for k in CONFIG_KEYS}
        out.update(self.tensors())
        out["ge2e.w"] = np.array([self.scale.w])
        out["ge2e.b"] = np.array([self.scale.b])
        if self.input_mean is not None:
            out["input.mean"] = self.input_mean
            out["input.std"] = self.input_std
        return out

    def digest(self) -> str:
        return tensors_digest(self.state())

    def save(self, path) -> None:
        save_checkpoint(path, self.state())

    @classmethod
    def load(cls, path) -> "EncoderModel":
        t = load_checkpoint(path)
        cfg = EncoderConfig(**{k: int(t[f"config.{k}"][0, 0]) for k in CONFIG_KEYS})
        layers = []
        for k in range(cfg.n_layers):
            in_dim = cfg.input_dim if k == 0 else cfg.proj_dim
            C, R = cfg.cell_dim, cfg.proj_dim
            layers.append(
                LstmLayerParams(
                    W=t[f"lstm{k}.W"].reshape(4 * C, in_dim + R),
                    b=t[f"lstm{k}.b"].reshape(4 * C),
                    P=t[f"lstm{k}.P"].reshape(R, C),
                    p=t[f"lstm{k}.p"].reshape(R),
                )
            )
        model = cls(cfg, layers, ge2e.SimilarityScale(float(t["ge2e.w"][0, 0]), float(t["ge2e.b"][0, 0])))
        if "input.mean" in t:
            model.input_mean = t["input.mean"].reshape(-1)
            model.input_std = t["input.std"].reshape(-1)
        return model

    def normalize(self, frames: np.ndarray) -> np.ndarray:
        if self.input_mean is None:
            return frames
        return (frames - self.input_mean) / self.input_std

    def forward(self, frames: np.ndarray, keep_cache: bool = False):
        """Top-layer output at the last frame for a ``(T, B, 40)`` batch."""
        h = self.normalize(frames)
        caches = []
        for layer in self.layers:
            h, cache = lstm_forward(layer, h)
            if keep_cache:
                caches.append(cache)
        return h[-1], caches

    def backward(self, caches, d_final: np.ndarray) -> Dict[str, np.ndarray]:
        T = caches[-1].x.shape[0]
        d = np.zeros((T,) + d_final.shape)
        d[-1] = d_final
        grads = {}
        for k in range(len(self.layers) - 1, -1, -1):
            g, d = lstm_backward(caches[k], d)
            for name, arr in g.items():
                grads[f"lstm{k}.{name}"] = arr
        return grads


def l2_normalize(x: np.ndarray, axis: int = -1) -> np.ndarray:
    norm = np.linalg.norm(x, axis=axis, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("cannot normalize a zero vector")
    return x / norm


def _check_frames(model: EncoderModel, frames: np.ndarray, allowed: Sequence[int]) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != model.config.input_dim:
        raise ValueError(f"expected (T, {model.config.input_dim}) log-mel frames, got {frames.shape}")
    if allowed and frames.shape[0] not in allowed:
        raise ValueError(f"expected {' or '.join(map(str, allowed))} frames, got {frames.shape[0]}")
    return frames


def _frames_of(mel) -> np.ndarray:
    return mel.frames if hasattr(mel, "frames") else mel


def embed_segment(model: EncoderModel, mel) -> np.ndarray:
    """Unit-norm embedding of one training segment or one inference window."""
    cfg = model.config
    frames = _check_frames(model, _frames_of(mel), (cfg.segment_frames, cfg.window_frames))
    final, _ = model.forward(frames[:, None, :])
    return l2_normalize(final[0])


def window_starts(n_frames: int, window: int, hop: int) -> List[int]:
    if n_frames < window:
        return []
    return list(range(0, n_frames - window + 1, hop))


def window_embeddings(model: EncoderModel, mel) -> np.ndarray:
    cfg = model.config
    frames = _check_frames(model, _frames_of(mel), ())
    starts = window_starts(len(frames), cfg.window_frames, cfg.window_hop_frames)
    if not starts:
        raise ValueError(
            f"utterance of {len(frames)} frames is shorter than one {cfg.window_frames}-frame window"
        )
    batch = np.stack([frames[s : s + cfg.window_frames] for s in starts], axis=1)
    final, _ = model.forward(batch)
    return l2_normalize(final)


def embed_utterance(model: EncoderModel, mel) -> np.ndarray:
    """Average of 800 ms window embeddings (50 % overlap), renormalized.

    Windows start at multiples of the hop; a trailing partial window is dropped.
    """
    frames = _frames_of(mel)
    if len(frames) == model.config.window_frames:
        return embed_segment(model, frames)
    return l2_normalize(window_embeddings(model, frames).mean(axis=0))


def embed_many(model: EncoderModel, mels: Sequence) -> np.ndarray:
    return np.stack([embed_utterance(model, m) for m in mels])


def fit_input_normalization(model: EncoderModel, index: SegmentIndex) -> None:
    stacked = np.concatenate([f for f in index.features.values() if len(f)], axis=0)
    model.input_mean = stacked.mean(axis=0)
    model.input_std = np.maximum(stacked.std(axis=0), 1e-3)


def _batch_frames(index: SegmentIndex, batch) -> np.ndarray:
    seqs = [index.segment(utt, start) for group in batch for utt, start, _ in group]
    return np.stack(seqs, axis=1)


def encoder_loss_and_grads(
    model: EncoderModel, frames: np.ndarray, n_speakers: int
) -> Tuple[float, Dict[str, np.ndarray]]:
    """GE2E loss of a ``(T, N*M, 40)`` batch and gradients for every parameter."""
    final, caches = model.forward(frames, keep_cache=True)
    norm = np.linalg.norm(final, axis=1, keepdims=True)
    emb = final / norm
    loss, de, dw, db = ge2e.ge2e_loss_and_grads(emb, n_speakers, model.scale)
    # through the L2 normalization
    d_final = (de - np.sum(de * emb, axis=1, keepdims=True) * emb) / norm
    grads = model.backward(caches, d_final)
    grads["ge2e.w"] = np.array([dw])
    grads["ge2e.b"] = np.array([db])
    return loss, grads


def train_step(model: EncoderModel, frames: np.ndarray, n_speakers: int, opt: AdamState) -> float:
    loss, grads = encoder_loss_and_grads(model, frames, n_speakers)
    clip_by_global_norm(grads, model.config.clip_norm)
    params = model.tensors()
    params["ge2e.w"] = np.array([model.scale.w])
    params["ge2e.b"] = np.array([model.scale.b])
    adam_step(params, grads, opt, lr=model.config.lr)
    model.scale.w = float(params["ge2e.w"][0])
    model.scale.b = float(params["ge2e.b"][0])
    model.scale.clamp()
    return loss


def train_encoder(
    index: SegmentIndex,
    config: EncoderConfig = SMALL_PROFILE,
    batch_spec: TrainBatchSpec = TrainBatchSpec(),
    steps: int = 1000,
    seed: int = 0,
    progress_every: int = 0,
) -> Tuple[EncoderModel, List[float]]:
    """GE2E training on 1.6 s segments. Deterministic for a given seed."""
    if index.segment_frames != config.segment_frames:
        raise ValueError(
            f"index has {index.segment_frames}-frame segments, config expects {config.segment_frames}"
        )
    model = EncoderModel.init(config, seed)
    fit_input_normalization(model, index)
    rng = np.random.default_rng([seed, batch_spec.seed])
    # validates corpus size before any work
    if steps > 0:
        sample_batch(index, batch_spec, np.random.default_rng(0))
    opt = AdamState()
    curve: List[float] = []
    for step in range(steps):
        batch = sample_batch(index, batch_spec, rng)
        loss = train_step(model, _batch_frames(index, batch), batch_spec.n_speakers, opt)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite GE2E loss at step {step}")
        curve.append(loss)
        if progress_every and (step + 1) % progress_every == 0:
            log.info("step %d loss %.4f w %.3f b %.3f", step + 1, loss, model.scale.w, model.scale.b)
    return model, curve


def crop_starts(n_frames: int, crop: int, n_crops: int, rng: np.random.Generator) -> List[int]:
    return [int(s) for s in rng.integers(0, n_frames - crop + 1, size=n_crops)]


def embedding_stability_sweep(
    model: EncoderModel,
    utterances: Sequence[Tuple[str, np.ndarray]],
    durations_s: Sequence[float],
    crops_per_utt: int = 2,
    seed: int = 0,
    frame_hop_ms: float = ENCODER_PROFILE.stft.hop_ms,
) -> List[Dict[str, float]]:
    """Mean cosine between random crops of the same speaker, per crop duration.

    ``utterances`` holds ``(speaker_id, frames)`` pairs. Each row of the result
    has ``duration_s``, ``mean_cos``, ``std_err`` and ``n_pairs``.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for dur in durations_s:
        crop = int(round(dur * 1000.0 / frame_hop_ms))
        by_spk: Dict[str, List[np.ndarray]] = {}
        for spk, frames in utterances:
            if len(frames) < crop:
                raise ValueError(f"utterance of {len(frames)} frames is shorter than a {dur}s crop")
            for s in crop_starts(len(frames), crop, crops_per_utt, rng):
                by_spk.setdefault(spk, []).append(embed_utterance(model, frames[s : s + crop]))
        cos = []
        for embs in by_spk.values():
            E = np.stack(embs)
            G = E @ E.T
            iu = np.triu_indices(len(E), k=1)
            cos.extend(G[iu].tolist())
        cos = np.asarray(cos)
        se = float(cos.std(ddof=1) / np.sqrt(len(cos))) if len(cos) > 1 else 0.0
        rows.append({"duration_s": float(dur), "mean_cos": float(cos.mean()), "std_err": se,
                     "n_pairs": int(len(cos))})
    return rows


def config_dict(config: EncoderConfig) -> dict:
    return asdict(config)
