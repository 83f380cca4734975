"""
Log-mel features and spectral subtraction
=========================================

Two feature profiles are used: 40 mel bands at a 10 ms hop feed the speaker
encoder, 80 bands at a 12.5 ms hop are what the decoder predicts.
"""

import numpy as np

from dvector.audio_io import Waveform
from dvector.corpus import draw_voices, synthesize_voice
from dvector.dsp import ENCODER_PROFILE, TARGET_PROFILE, compute_features, spectral_subtract, stft_magnitude

rng = np.random.default_rng(0)
voice = draw_voices(2, rng)[0]
wav = synthesize_voice(voice, rng.integers(0, 12, 20), rng)
print(f"voice f0={voice.f0_hz:.0f} Hz, {len(wav.samples) / wav.sample_rate_hz:.2f} s")

enc = compute_features(wav, ENCODER_PROFILE)
tgt = compute_features(wav, TARGET_PROFILE)
print("encoder features", enc.frames.shape, "target features", tgt.frames.shape)

# a tone burst in stationary white noise
sr = 16000
t = np.arange(2 * sr) / sr
gate = (t > 0.5) & (t < 1.5)
x = rng.normal(0, 0.05, len(t)) + 0.5 * np.sin(2 * np.pi * 1000.0 * t) * gate
lin = stft_magnitude(Waveform(x, sr), TARGET_PROFILE.stft)
clean = spectral_subtract(lin)

k = int(round(1000.0 * TARGET_PROFILE.stft.fft_size / sr))
frames = np.arange(20, 100)
off = np.setdiff1d(np.arange(lin.energy.shape[1]), np.arange(k - 4, k + 5))


def db(a, b):
    return 10 * np.log10(a.mean() / b.mean())


print(f"tone bin change   {db(clean.energy[frames, k], lin.energy[frames, k]):+.2f} dB")
print(f"noise bins change {db(clean.energy[:, off], lin.energy[:, off]):+.2f} dB")
