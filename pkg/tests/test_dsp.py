import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dvector.audio_io import Waveform
from dvector.dsp import (
    ENCODER_PROFILE,
    TARGET_PROFILE,
    compute_features,
    warp_spectrum,
    LinearSpectrogram,
    MelConfig,
    MelSpectrogram,
    StftConfig,
    griffin_lim,
    log_mel,
    mel_center_frequencies,
    mel_filterbank,
    num_frames,
    spectral_subtract,
    stft_magnitude,
)

SR = 16000
TARGET = TARGET_PROFILE.stft


def tone(freq, seconds=1.0, amp=0.5):
    t = np.arange(int(SR * seconds)) / SR
    return amp * np.sin(2 * np.pi * freq * t)


class TestStft:
    def test_silence_frame_count(self):
        lin = stft_magnitude(Waveform(np.zeros(SR)), TARGET)
        assert lin.frames.shape == (77, 513)
        assert np.all(lin.frames == 0)

    def test_sine_peak_bin(self):
        lin = stft_magnitude(Waveform(tone(1000.0)), TARGET)
        assert np.all(np.argmax(lin.frames, axis=1) == round(1000 * 1024 / SR))

    def test_dc(self):
        cfg = TARGET
        lin = stft_magnitude(Waveform(np.ones(4000)), cfg)
        window_sum = np.hanning(801)[:-1].sum()
        np.testing.assert_allclose(lin.frames[:, 0], window_sum, rtol=1e-12)

    def test_short_waveform(self):
        with pytest.raises(ValueError, match="shorter"):
            stft_magnitude(Waveform(np.zeros(799)), TARGET)

    @given(length=st.integers(400, 5000), win_ms=st.sampled_from([25.0, 50.0]),
           hop_ms=st.sampled_from([5.0, 10.0, 12.5, 25.0]))
    @settings(max_examples=40, deadline=None)
    def test_frame_count_formula(self, length, win_ms, hop_ms):
        cfg = StftConfig(win_ms, min(hop_ms, win_ms), 1024)
        win, hop = cfg.win_length(SR), cfg.hop_length(SR)
        if length < win:
            return
        lin = stft_magnitude(Waveform(np.zeros(length)), cfg)
        assert lin.frames.shape[0] == (length - win) // hop + 1 == num_frames(length, win, hop)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            StftConfig(25.0, 30.0, 512).validate(SR)
        with pytest.raises(ValueError):
            StftConfig(50.0, 12.5, 512).validate(SR)
        with pytest.raises(ValueError):
            StftConfig(25.0, 10.0, 500).validate(SR)


class TestMelFilterbank:
    def test_single_filter(self):
        fb = mel_filterbank(MelConfig(1, 0.0, 8000.0), 512, SR)
        assert fb.shape == (1, 257)
        assert fb.sum() > 0
        peak_hz = np.argmax(fb[0]) * SR / 512
        mid_hz = 700 * (10 ** ((2595 * np.log10(1 + 8000 / 700) / 2) / 2595) - 1)
        assert abs(peak_hz - mid_hz) <= SR / 512

    def test_centers_increasing(self):
        centers = mel_center_frequencies(ENCODER_PROFILE.mel)
        assert len(centers) == 40
        assert np.all(np.diff(centers) > 0)

    @pytest.mark.parametrize("profile", [ENCODER_PROFILE, TARGET_PROFILE])
    def test_rows_valid(self, profile):
        fb = mel_filterbank(profile.mel, profile.stft.fft_size, SR)
        assert np.all(fb >= 0)
        assert np.all(fb.sum(axis=1) > 0)

    def test_linearity_on_ones(self):
        fb = mel_filterbank(TARGET_PROFILE.mel, 1024, SR)
        lin = LinearSpectrogram(np.ones((3, 513)), TARGET)
        mel = log_mel(lin, TARGET_PROFILE.mel)
        np.testing.assert_allclose(np.exp(mel.frames), np.tile(fb.sum(axis=1), (3, 1)), rtol=1e-12)

    def test_degenerate(self):
        with pytest.raises(ValueError, match="degenerate"):
            mel_filterbank(MelConfig(200, 0.0, 8000.0), 256, SR)
        with pytest.raises(ValueError):
            mel_filterbank(MelConfig(10, 100.0, 9000.0), 512, SR)


class TestLogMel:
    def test_zero_input_floor(self):
        mel = log_mel(LinearSpectrogram(np.zeros((4, 257)), ENCODER_PROFILE.stft), ENCODER_PROFILE.mel)
        np.testing.assert_array_equal(mel.frames, np.log(1e-10))

    def test_gain_shift(self):
        rng = np.random.default_rng(0)
        x = rng.normal(0, 0.1, SR)
        a = log_mel(stft_magnitude(Waveform(x), ENCODER_PROFILE.stft), ENCODER_PROFILE.mel).frames
        b = log_mel(stft_magnitude(Waveform(2 * x), ENCODER_PROFILE.stft), ENCODER_PROFILE.mel).frames
        np.testing.assert_allclose(b - a, 2 * np.log(2), atol=1e-9)

    def test_encoder_width(self):
        mel = log_mel(stft_magnitude(Waveform(tone(300)), ENCODER_PROFILE.stft), ENCODER_PROFILE.mel)
        assert mel.frames.shape[1] == 40
        assert mel.frame_hop_ms == 10.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            log_mel(LinearSpectrogram(np.zeros((2, 100)), ENCODER_PROFILE.stft), ENCODER_PROFILE.mel)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_monotone(self, seed):
        rng = np.random.default_rng(seed)
        base = rng.uniform(0, 2, (3, 257))
        bumped = base.copy()
        bumped[rng.integers(0, 3), rng.integers(0, 257)] += rng.uniform(0, 5)
        mcfg = ENCODER_PROFILE.mel
        a = log_mel(LinearSpectrogram(base, ENCODER_PROFILE.stft), mcfg).frames
        b = log_mel(LinearSpectrogram(bumped, ENCODER_PROFILE.stft), mcfg).frames
        assert np.all(b >= a)


def tone_in_noise(seed, bin_k=64, seconds=2.0, noise=0.05, amp=0.5):
    """Stationary white noise plus a tone burst over the middle half of the signal."""
    rng = np.random.default_rng(seed)
    n = int(SR * seconds)
    t = np.arange(n) / SR
    gate = (t >= 0.25 * seconds) & (t < 0.75 * seconds)
    x = rng.normal(0, noise, n) + amp * np.sin(2 * np.pi * bin_k * SR / TARGET.fft_size * t + rng.uniform(0, 6.28)) * gate
    hop, win = TARGET.hop_length(SR), TARGET.win_length(SR)
    active = np.array([gate[i * hop : i * hop + win].all() for i in range(num_frames(n, win, hop))])
    return Waveform(x), active


def band_change_db(out, lin, rows, cols):
    return 10 * np.log10(out.energy[np.ix_(rows, cols)].mean() / lin.energy[np.ix_(rows, cols)].mean())


class TestSpectralSubtract:
    def test_white_noise(self):
        rng = np.random.default_rng(5)
        lin = stft_magnitude(Waveform(rng.normal(0, 0.05, 2 * SR)), TARGET)
        out = spectral_subtract(lin)
        assert out.energy.mean() <= 0.25 * lin.energy.mean()

    def test_tone_and_noise(self):
        w, active = tone_in_noise(0)
        lin = stft_magnitude(w, TARGET)
        out = spectral_subtract(lin)
        rows = np.flatnonzero(active)
        off = np.setdiff1d(np.arange(513), np.arange(60, 69))
        assert abs(band_change_db(out, lin, rows, [64])) <= 1.0
        assert band_change_db(out, lin, np.arange(len(active)), off) <= -6.0

    def test_zero(self):
        lin = LinearSpectrogram(np.zeros((12, 513)), TARGET)
        np.testing.assert_array_equal(spectral_subtract(lin).frames, 0.0)

    def test_too_few_frames(self):
        with pytest.raises(ValueError, match="10 frames"):
            spectral_subtract(LinearSpectrogram(np.ones((9, 513)), TARGET))

    def test_second_pass_small(self):
        rng = np.random.default_rng(9)
        once = spectral_subtract(stft_magnitude(Waveform(rng.normal(0, 0.05, 2 * SR)), TARGET))
        twice = spectral_subtract(once)
        assert 1 - twice.energy.mean() / once.energy.mean() < 0.10

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_non_negative_finite(self, seed):
        rng = np.random.default_rng(seed)
        lin = LinearSpectrogram(np.abs(rng.standard_cauchy((15, 33))), StftConfig(4.0, 2.0, 64))
        out = spectral_subtract(lin).frames
        assert np.all(np.isfinite(out)) and np.all(out >= 0)
        assert np.all(out <= lin.frames + 1e-12)


class TestGriffinLim:
    def test_zero_mel_is_silent(self):
        mel = MelSpectrogram(np.full((20, 80), np.log(1e-10)), TARGET, TARGET_PROFILE.mel)
        w = griffin_lim(mel, iterations=5, normalize=False)
        assert np.max(np.abs(w.samples)) < 1e-3

    def test_output_length(self):
        mel = MelSpectrogram(np.zeros((31, 80)), TARGET, TARGET_PROFILE.mel)
        w = griffin_lim(mel, iterations=2)
        assert len(w) == 30 * 200 + 800
        assert np.isclose(np.max(np.abs(w.samples)), 0.95)

    def test_reanalysis_correlation(self, voice_waveform):
        from dvector.dsp import compute_features

        mel = compute_features(voice_waveform, TARGET_PROFILE)
        w = griffin_lim(mel, iterations=60)
        again = compute_features(w, TARGET_PROFILE).frames
        # peak normalization only shifts log-mels by a constant
        a = mel.frames - mel.frames.mean()
        b = again - again.mean()
        assert np.corrcoef(a.ravel(), b.ravel())[0, 1] > 0.9


class TestWarpSpectrum:
    def test_identity(self):
        lin = stft_magnitude(Waveform(tone(1000.0)), TARGET)
        out = warp_spectrum(lin, lambda f: f)
        np.testing.assert_allclose(out.frames, lin.frames, rtol=1e-12)

    def test_scale_moves_peak(self):
        lin = stft_magnitude(Waveform(tone(1000.0)), TARGET)
        out = warp_spectrum(lin, lambda f: 1.2 * f)
        bin_hz = SR / TARGET.fft_size
        assert abs(np.argmax(out.energy[5]) * bin_hz - 1200.0) <= bin_hz

    def test_non_monotone_rejected(self):
        lin = stft_magnitude(Waveform(tone(500.0)), TARGET)
        with pytest.raises(ValueError):
            warp_spectrum(lin, lambda f: -f)

    def test_features_accept_warp(self, voice_waveform):
        plain = compute_features(voice_waveform, ENCODER_PROFILE)
        same = compute_features(voice_waveform, ENCODER_PROFILE, warp=lambda f: f)
        np.testing.assert_allclose(same.frames, plain.frames, atol=1e-9)
