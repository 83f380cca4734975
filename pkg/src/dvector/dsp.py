"""Spectral front end: STFT, mel filterbank, log compression, denoising, inversion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.signal import get_window

from .audio_io import CANONICAL_RATE, Waveform


@dataclass(frozen=True)
class StftConfig:
    window_ms: float
    hop_ms: float
    fft_size: int
    window_fn: str = "hann"

    def win_length(self, sample_rate: int) -> int:
        return int(round(self.window_ms * sample_rate / 1000.0))

    def hop_length(self, sample_rate: int) -> int:
        return int(round(self.hop_ms * sample_rate / 1000.0))

    def validate(self, sample_rate: int) -> None:
        if self.hop_ms <= 0 or self.hop_ms > self.window_ms:
            raise ValueError("need 0 < hop_ms <= window_ms")
        if self.fft_size <= 0 or self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a positive power of two")
        if self.fft_size < self.win_length(sample_rate):
            raise ValueError("fft_size shorter than the analysis window")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass(frozen=True)
class MelConfig:
    n_mels: int
    fmin_hz: float
    fmax_hz: float
    log_floor: float = 1e-10


@dataclass(frozen=True)
class FeatureProfile:
    stft: StftConfig
    mel: MelConfig
    sample_rate: int = CANONICAL_RATE


# 25 ms / 10 ms, 40 channels: the d-vector front end
ENCODER_PROFILE = FeatureProfile(StftConfig(25.0, 10.0, 512), MelConfig(40, 20.0, 7600.0))
# 50 ms / 12.5 ms, 80 channels: synthesis targets
TARGET_PROFILE = FeatureProfile(StftConfig(50.0, 12.5, 1024), MelConfig(80, 20.0, 7600.0))


@dataclass
class LinearSpectrogram:
    frames: np.ndarray  # (T, n_bins) magnitudes
    stft: StftConfig
    sample_rate: int = CANONICAL_RATE

    @property
    def energy(self) -> np.ndarray:
        return self.frames**2


@dataclass
class MelSpectrogram:
    frames: np.ndarray  # (T, n_mels) natural-log mel energies
    stft: StftConfig
    mel: MelConfig
    sample_rate: int = CANONICAL_RATE

    @property
    def frame_hop_ms(self) -> float:
        return self.stft.hop_ms

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def __len__(self) -> int:
        return self.frames.shape[0]


def num_frames(length: int, win: int, hop: int) -> int:
    if length < win:
        return 0
    return (length - win) // hop + 1


def _frame(samples: np.ndarray, win: int, hop: int) -> np.ndarray:
    n = num_frames(len(samples), win, hop)
    idx = np.arange(win)[None, :] + hop * np.arange(n)[:, None]
    return samples[idx]


def analysis_window(cfg: StftConfig, sample_rate: int) -> np.ndarray:
    return get_window(cfg.window_fn, cfg.win_length(sample_rate), fftbins=True)


def stft_complex(samples: np.ndarray, cfg: StftConfig, sample_rate: int) -> np.ndarray:
    win = cfg.win_length(sample_rate)
    frames = _frame(np.asarray(samples, dtype=np.float64), win, cfg.hop_length(sample_rate))
    return np.fft.rfft(frames * analysis_window(cfg, sample_rate), n=cfg.fft_size, axis=1)


def stft_magnitude(w: Waveform, cfg: StftConfig) -> LinearSpectrogram:
    """Magnitude STFT; frame ``t`` covers samples ``[t*hop, t*hop + win)``."""
    cfg.validate(w.sample_rate_hz)
    win = cfg.win_length(w.sample_rate_hz)
    if len(w) < win:
        raise ValueError(f"waveform of {len(w)} samples is shorter than one {win}-sample window")
    spec = stft_complex(w.samples, cfg, w.sample_rate_hz)
    return LinearSpectrogram(np.abs(spec), cfg, w.sample_rate_hz)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(mcfg: MelConfig) -> np.ndarray:
    pts = mel_to_hz(np.linspace(hz_to_mel(mcfg.fmin_hz), hz_to_mel(mcfg.fmax_hz), mcfg.n_mels + 2))
    return pts[1:-1]


def mel_filterbank(mcfg: MelConfig, fft_size: int, sample_rate: int) -> np.ndarray:
    """Triangular HTK-mel filters, shape ``(n_mels, fft_size // 2 + 1)``."""
    if mcfg.n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    if not 0 <= mcfg.fmin_hz < mcfg.fmax_hz <= sample_rate / 2:
        raise ValueError("need 0 <= fmin < fmax <= sample_rate / 2")
    edges = mel_to_hz(
        np.linspace(hz_to_mel(mcfg.fmin_hz), hz_to_mel(mcfg.fmax_hz), mcfg.n_mels + 2)
    )
    if np.any(np.diff(edges) <= 0):
        raise ValueError("degenerate mel band: repeated filter edge")
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(fb.sum(axis=1) <= 0)
    if len(empty):
        raise ValueError(
            f"degenerate mel band: filters {empty.tolist()} cover no FFT bin at fft_size={fft_size}"
        )
    return fb


_FB_CACHE: dict = {}


def cached_filterbank(mcfg: MelConfig, fft_size: int, sample_rate: int) -> np.ndarray:
    key = (mcfg, fft_size, sample_rate)
    fb = _FB_CACHE.get(key)
    if fb is None:
        fb = _FB_CACHE[key] = mel_filterbank(mcfg, fft_size, sample_rate)
        fb.setflags(write=False)
    return fb


def log_mel(lin: LinearSpectrogram, mcfg: MelConfig) -> MelSpectrogram:
    """``ln(max(filterbank @ |X|^2, log_floor))`` per frame."""
    fb = cached_filterbank(mcfg, lin.stft.fft_size, lin.sample_rate)
    if lin.frames.shape[1] != fb.shape[1]:
        raise ValueError(f"spectrogram has {lin.frames.shape[1]} bins, filterbank expects {fb.shape[1]}")
    mel_energy = lin.energy @ fb.T
    return MelSpectrogram(
        np.log(np.maximum(mel_energy, mcfg.log_floor)), lin.stft, mcfg, lin.sample_rate
    )


def warp_spectrum(lin: LinearSpectrogram, warp: Callable[[np.ndarray], np.ndarray]) -> LinearSpectrogram:
    """Move spectral content at frequency ``f`` to ``warp(f)``.

    ``warp`` maps Hz to Hz and must be non-decreasing. Output bin energies are
    read from the source spectrum at the inverse-warped frequency by linear
    interpolation between bins.
    """
    n = lin.frames.shape[1]
    freqs = np.arange(n) * lin.sample_rate / lin.stft.fft_size
    moved = np.asarray(warp(freqs), dtype=np.float64)
    if np.any(np.diff(moved) < 0):
        raise ValueError("frequency warp must be non-decreasing")
    src_bin = np.interp(freqs, moved, freqs) * lin.stft.fft_size / lin.sample_rate
    lo = np.clip(np.floor(src_bin).astype(int), 0, n - 1)
    hi = np.minimum(lo + 1, n - 1)
    a = src_bin - lo
    E = lin.energy
    return LinearSpectrogram(np.sqrt(E[:, lo] * (1.0 - a) + E[:, hi] * a), lin.stft, lin.sample_rate)


def compute_features(
    w: Waveform,
    profile: FeatureProfile,
    denoise: bool = False,
    warp: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> MelSpectrogram:
    if w.sample_rate_hz != profile.sample_rate:
        raise ValueError(
            f"sample rate {w.sample_rate_hz} Hz does not match profile rate {profile.sample_rate} Hz"
        )
    lin = stft_magnitude(w, profile.stft)
    if denoise:
        lin = spectral_subtract(lin)
    if warp is not None:
        lin = warp_spectrum(lin, warp)
    return log_mel(lin, profile.mel)


NOISE_PERCENTILE = 10.0
# A periodogram bin of stationary noise is exponentially distributed, so its
# q-th percentile sits at -ln(1 - q) times the mean noise energy.
PERCENTILE_TO_MEAN = 1.0 / -math.log(1.0 - NOISE_PERCENTILE / 100.0)
OVER_SUBTRACTION = 2.0
SPECTRAL_FLOOR = 0.01


def nearest_rank_percentile(values: np.ndarray, q: float, axis: int = 0) -> np.ndarray:
    n = values.shape[axis]
    rank = max(1, math.ceil(q / 100.0 * n))
    return np.sort(values, axis=axis).take(rank - 1, axis=axis)


def noise_floor(lin: LinearSpectrogram) -> np.ndarray:
    """Per-bin 10th-percentile energy across all frames (nearest rank)."""
    return nearest_rank_percentile(lin.energy, NOISE_PERCENTILE, axis=0)


def spectral_subtract(
    lin: LinearSpectrogram,
    over_subtraction: float = OVER_SUBTRACTION,
    floor_frac: float = SPECTRAL_FLOOR,
) -> LinearSpectrogram:
    """Subtract a stationary per-bin noise estimate from the frame energies.

    The noise energy of each bin is its 10th-percentile energy over the
    utterance, rescaled to the implied mean and multiplied by
    ``over_subtraction``. Output energy never drops below ``floor_frac``
    times the input energy.
    """
    if lin.frames.shape[0] < 10:
        raise ValueError("spectral subtraction needs at least 10 frames for a stable percentile")
    energy = lin.energy
    noise = noise_floor(lin) * (PERCENTILE_TO_MEAN * over_subtraction)
    out = np.maximum(energy - noise[None, :], floor_frac * energy)
    return LinearSpectrogram(np.sqrt(out), lin.stft, lin.sample_rate)


def istft(spec: np.ndarray, cfg: StftConfig, sample_rate: int) -> np.ndarray:
    """Least-squares overlap-add inverse of :func:`stft_complex`."""
    win = cfg.win_length(sample_rate)
    hop = cfg.hop_length(sample_rate)
    window = analysis_window(cfg, sample_rate)
    T = spec.shape[0]
    length = (T - 1) * hop + win if T else 0
    frames = np.fft.irfft(spec, n=cfg.fft_size, axis=1)[:, :win] * window
    out = np.zeros(length)
    norm = np.zeros(length)
    for t in range(T):
        out[t * hop : t * hop + win] += frames[t]
        norm[t * hop : t * hop + win] += window**2
    nz = norm > 1e-8
    out[nz] /= norm[nz]
    return out


def mel_to_linear(mel: MelSpectrogram, iterations: int = 300) -> np.ndarray:
    """Non-negative least-squares inverse of the filterbank, returning magnitudes.

    Multiplicative updates keep every bin non-negative; they start from the
    filterbank-transpose estimate, which already lies in the right cone.
    """
    fb = cached_filterbank(mel.mel, mel.stft.fft_size, mel.sample_rate)
    floor_log = math.log(mel.mel.log_floor)
    energy = np.where(mel.frames <= floor_log + 1e-9, 0.0, np.exp(mel.frames))
    target = energy @ fb
    lin = target / np.maximum(fb.sum(axis=0), 1e-12)
    gram = fb.T @ fb
    for _ in range(iterations):
        lin *= target / np.maximum(lin @ gram, 1e-300)
    return np.sqrt(lin)


def griffin_lim(
    mel: MelSpectrogram, iterations: int = 60, normalize: bool = True, peak: float = 0.95
) -> Waveform:
    """Deterministic Griffin-Lim reconstruction from a log-mel spectrogram.

    Phases start at zero, so identical inputs always give identical audio.
    """
    mag = mel_to_linear(mel)
    cfg, sr = mel.stft, mel.sample_rate
    spec = mag.astype(np.complex128)
    y = istft(spec, cfg, sr)
    for _ in range(iterations):
        rebuilt = stft_complex(y, cfg, sr)
        phase = np.exp(1j * np.angle(rebuilt))
        y = istft(mag * phase, cfg, sr)
    top = np.max(np.abs(y)) if len(y) else 0.0
    if normalize and top > 0:
        y = y * (peak / top)
    return Waveform(y, sr)
