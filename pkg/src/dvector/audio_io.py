"""Mono waveform container and RIFF/WAVE reading and writing."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

CANONICAL_RATE = 16000

PathLike = Union[str, Path]


class WavFormatError(ValueError):
    """Malformed or unsupported WAV file."""


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int = CANONICAL_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("waveform must be mono (1-D samples)")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform samples must be finite")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


_PCM = 1
_IEEE_FLOAT = 3
_EXTENSIBLE = 0xFFFE


def read_wav(path: PathLike) -> Waveform:
    """Decode a mono PCM16 or float32 WAV file to samples in [-1, 1]."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise WavFormatError(f"{path}: truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            if size < 16:
                raise WavFormatError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body)
            if fmt[0] == _EXTENSIBLE and size >= 26:
                (sub,) = struct.unpack_from("<H", body, 24)
                fmt = (sub,) + fmt[1:]
        elif chunk_id == b"data":
            payload = body
        pos += 8 + size + (size & 1)

    if fmt is None or payload is None:
        raise WavFormatError(f"{path}: missing fmt or data chunk")
    codec, channels, rate, _, _, bits = fmt
    if channels != 1:
        raise WavFormatError(f"{path}: {channels} channels, only mono is supported")
    if rate <= 0:
        raise WavFormatError(f"{path}: invalid sample rate {rate}")

    if codec == _PCM and bits == 16:
        n = len(payload) // 2
        samples = np.frombuffer(payload[: 2 * n], dtype="<i2").astype(np.float64) / 32768.0
    elif codec == _IEEE_FLOAT and bits == 32:
        n = len(payload) // 4
        samples = np.frombuffer(payload[: 4 * n], dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(samples)):
            raise WavFormatError(f"{path}: non-finite float samples")
    else:
        raise WavFormatError(f"{path}: unsupported codec {codec} with {bits} bits")
    return Waveform(samples, rate)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    # clamp, never wrap
    scaled = np.round(np.clip(samples, -1.0, 1.0) * 32768.0)
    return np.clip(scaled, -32768, 32767).astype("<i2")


def write_wav(w: Waveform, path: PathLike) -> None:
    """Write ``w`` as little-endian mono PCM16."""
    pcm = to_pcm16(w.samples).tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(pcm),
        b"WAVE",
        b"fmt ",
        16,
        _PCM,
        1,
        w.sample_rate_hz,
        w.sample_rate_hz * 2,
        2,
        16,
        b"data",
        len(pcm),
    )
    Path(path).write_bytes(header + pcm)
