"""Spectrogram pipeline: shape contract, oracles, mask properties."""

import wave

import numpy as np
import pytest

from avseg import audio


def sine(freq, amp=1.0, phase=0.0):
    t = np.arange(audio.SAMPLE_RATE) / audio.SAMPLE_RATE
    return amp * np.sin(2 * np.pi * freq * t + phase)


class TestStft:
    def test_default_profile_shape(self):
        spec = audio.stft_magnitude(np.zeros(16000))
        assert spec.shape == (96, 256)

    def test_zero_waveform_zero_spectrogram(self):
        spec = audio.stft_magnitude(np.zeros(16000))
        assert np.all(spec == 0)

    def test_sine_concentrates_at_predicted_bin(self):
        # 1000 Hz -> bin round(1000 * 512 / 16000) = 32 -> row 31 after DC drop.
        spec = audio.stft_magnitude(sine(1000.0))
        assert audio.bin_of_frequency(1000.0) == 32
        assert np.all(spec.argmax(axis=1) == 31)

    def test_single_window_dft_oracle(self):
        # First frame of the STFT must equal a directly evaluated windowed DFT.
        x = sine(1000.0, amp=0.7, phase=0.3)
        win = audio.hann_window(400)
        frame = x[:400] * win
        n = np.arange(400)
        ref = abs(np.sum(frame * np.exp(-2j * np.pi * 32 * n / 512)))
        spec = audio.stft_magnitude(x)
        np.testing.assert_allclose(spec[0, 31], ref, rtol=1e-5)

    def test_positive_homogeneity(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(16000)
        a = audio.stft_magnitude(x)
        b = audio.stft_magnitude(3.5 * x)
        np.testing.assert_allclose(b, 3.5 * a, rtol=1e-5, atol=1e-6)

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            audio.stft_magnitude(np.zeros(15999))

    def test_rejects_wrong_rate(self):
        with pytest.raises(ValueError):
            audio.stft_magnitude(np.zeros(16000), rate=8000)


class TestMix:
    def test_additive_identity(self):
        rng = np.random.default_rng(1)
        a = np.abs(rng.standard_normal((96, 256)))
        np.testing.assert_array_equal(audio.mix(a, np.zeros_like(a)), a)

    def test_doubling(self):
        rng = np.random.default_rng(2)
        a = np.abs(rng.standard_normal((96, 256)))
        np.testing.assert_array_equal(audio.mix(a, a), 2 * a)

    def test_disjoint_tone_supports_union(self):
        a = audio.stft_magnitude(sine(1000.0))
        b = audio.stft_magnitude(sine(4000.0))
        m = audio.mix(a, b)
        np.testing.assert_allclose(m, a + b)
        # Peak rows of each tone survive in the mixture.
        assert m[0, 31] >= a[0, 31]
        assert m[0, audio.bin_of_frequency(4000.0) - 1] >= b[0, audio.bin_of_frequency(4000.0) - 1]

    def test_commutative_associative(self):
        rng = np.random.default_rng(3)
        a, b, c = (np.abs(rng.standard_normal((4, 5))) for _ in range(3))
        np.testing.assert_array_equal(audio.mix(a, b), audio.mix(b, a))
        np.testing.assert_allclose(
            audio.mix(audio.mix(a, b), c), audio.mix(a, audio.mix(b, c)), rtol=1e-7
        )

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            audio.mix(np.zeros((2, 2)), np.zeros((3, 2)))


class TestRatioTarget:
    def test_no_noise_gives_ones(self):
        rng = np.random.default_rng(4)
        a = np.abs(rng.standard_normal((8, 8))) + 0.1
        mask = audio.ratio_target(a, a)
        np.testing.assert_allclose(mask, 1.0, atol=1e-6)

    def test_equal_parts_give_half(self):
        a = np.full((4, 4), 2.0)
        mask = audio.ratio_target(a, audio.mix(a, a))
        np.testing.assert_allclose(mask, 0.5, atol=1e-8)

    def test_quarter(self):
        a_i = np.array([[1.0]])
        a_j = np.array([[3.0]])
        np.testing.assert_allclose(audio.ratio_target(a_i, audio.mix(a_i, a_j)), 0.25)

    def test_range_property(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a_i = np.abs(rng.standard_normal((6, 7)))
            a_j = np.abs(rng.standard_normal((6, 7)))
            mask = audio.ratio_target(a_i, audio.mix(a_i, a_j))
            assert np.all(mask >= 0) and np.all(mask <= 1)


class TestWavReader:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        samples = (rng.uniform(-0.5, 0.5, 16000) * 32767).astype("<i2")
        path = tmp_path / "probe.wav"
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(2)
            wf.setframerate(16000)
            wf.writeframes(samples.tobytes())
        out = audio.read_wav_mono(path)
        np.testing.assert_allclose(out, samples / 32768.0, atol=1e-6)

    def test_rejects_stereo(self, tmp_path):
        path = tmp_path / "stereo.wav"
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(2)
            wf.setsampwidth(2)
            wf.setframerate(16000)
            wf.writeframes(b"\x00" * 64)
        with pytest.raises(ValueError):
            audio.read_wav_mono(path)
