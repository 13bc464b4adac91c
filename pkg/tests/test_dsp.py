import math

import numpy as np
import pytest

from usev.audio_io import read_raw_f32, read_wav, write_raw_f32, write_wav
from usev.dsp import (AudioClip, energy, frame_signal, measure_snr_db,
                      overlap_add, scale_to_snr)


def clip(samples, sr=16000):
    return AudioClip(np.asarray(samples, dtype=np.float64), sr)


def rand_clip(rng, n, sr=16000):
    return AudioClip(rng.standard_normal(n), sr)


class TestAudioClip:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            AudioClip(np.array([0.0, np.nan]), 8000)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            AudioClip(np.zeros(4), 0)

    def test_duration(self):
        assert clip(np.zeros(8000), 16000).duration_s == 0.5


class TestFrameSignal:
    def test_frame_count_16k(self):
        fm = frame_signal(clip(np.zeros(16000)), 40, 20)
        assert fm.num_frames == 799

    def test_frame_count_8k(self):
        fm = frame_signal(clip(np.zeros(8000)), 40, 20)
        assert fm.num_frames == 399

    def test_contents(self):
        fm = frame_signal(clip([1, 2, 3, 4]), 2, 1)
        assert fm.frames.tolist() == [[1, 2], [2, 3], [3, 4]]

    def test_trailing_samples_dropped(self):
        fm = frame_signal(clip([1, 2, 3, 4, 5]), 2, 2)
        assert fm.frames.tolist() == [[1, 2], [3, 4]]

    def test_too_short_raises(self):
        with pytest.raises(ValueError):
            frame_signal(clip([1.0]), 2, 1)

    def test_bad_hop_raises(self):
        with pytest.raises(ValueError):
            frame_signal(clip([1, 2, 3]), 2, 3)


class TestOverlapAdd:
    def test_single_frame(self):
        fm = frame_signal(clip([1, 2, 3]), 3, 1)
        assert overlap_add(fm, hop=2).samples.tolist() == [1, 2, 3]

    def test_two_frames(self):
        fm = frame_signal(clip([1.0, 1, 1]), 2, 1)
        assert overlap_add(fm).samples.tolist() == [1, 2, 1]

    def test_adjoint_identity(self):
        # <frame(x), Y> == <x, ola(Y)> for random shapes
        rng = np.random.default_rng(7)
        for _ in range(30):
            n = int(rng.integers(16, 400))
            flen = int(rng.integers(2, min(n, 32) + 1))
            hop = int(rng.integers(1, flen + 1))
            x = rand_clip(rng, n)
            fm = frame_signal(x, flen, hop)
            y = rng.standard_normal(fm.frames.shape)
            lhs = float(np.sum(fm.frames * y))
            from usev.dsp import FrameMatrix
            ola = overlap_add(FrameMatrix(y, flen, hop, x.sample_rate), hop)
            rhs = float(np.dot(x.samples[: len(ola)], ola.samples))
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


class TestEnergy:
    def test_zero(self):
        assert energy(clip(np.zeros(100))) == 0.0

    def test_three_four(self):
        assert energy(clip([3.0, 4.0])) == 25.0

    def test_matches_fsum_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = rng.standard_normal(int(rng.integers(10, 5000)))
            want = math.fsum(v * v for v in x.tolist())
            got = energy(x)
            assert abs(got - want) <= 1e-12 * want

    def test_quadratic_scaling(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(512)
        a = 3.7
        assert energy(a * x) == pytest.approx(a * a * energy(x), rel=1e-12)


class TestScaleToSnr:
    def test_equal_energy_zero_db(self):
        rng = np.random.default_rng(5)
        a = rand_clip(rng, 256)
        b = AudioClip(a.samples[::-1].copy(), a.sample_rate)
        scaled = scale_to_snr(a, b, 0.0)
        np.testing.assert_allclose(scaled.samples, b.samples, rtol=1e-12)

    def test_equal_energy_ten_db(self):
        rng = np.random.default_rng(6)
        a = rand_clip(rng, 256)
        b = AudioClip(a.samples[::-1].copy(), a.sample_rate)
        scaled = scale_to_snr(a, b, 10.0)
        g = scaled.samples[0] / b.samples[0]
        assert g == pytest.approx(10 ** -0.5, rel=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(8)
        for snr in (-10.0, -3.3, 0.0, 7.7, 10.0):
            a = rand_clip(rng, 1000)
            b = rand_clip(rng, 777)
            scaled = scale_to_snr(a, b, snr)
            assert measure_snr_db(a, scaled) == pytest.approx(snr, abs=1e-9)

    def test_zero_energy_rejected(self):
        silent = clip(np.zeros(64))
        loud = clip(np.ones(64))
        with pytest.raises(ValueError):
            scale_to_snr(silent, loud, 0.0)
        with pytest.raises(ValueError):
            scale_to_snr(loud, silent, 0.0)


class TestFileIO:
    def test_wav_float32_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        a = AudioClip(rng.uniform(-0.9, 0.9, 500), 8000)
        write_wav(tmp_path / "a.wav", a)
        back = read_wav(tmp_path / "a.wav")
        assert back.sample_rate == 8000
        np.testing.assert_allclose(back.samples, a.samples, atol=1e-7)

    def test_wav_pcm16_round_trip(self, tmp_path):
        rng = np.random.default_rng(10)
        a = AudioClip(rng.uniform(-0.9, 0.9, 500), 16000)
        write_wav(tmp_path / "a.wav", a, encoding="pcm16")
        back = read_wav(tmp_path / "a.wav")
        np.testing.assert_allclose(back.samples, a.samples, atol=1.0 / 32767)

    def test_wav_write_deterministic(self, tmp_path):
        rng = np.random.default_rng(11)
        a = AudioClip(rng.uniform(-0.9, 0.9, 500), 8000)
        write_wav(tmp_path / "a.wav", a)
        write_wav(tmp_path / "b.wav", a)
        assert (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()

    def test_raw_f32_round_trip(self, tmp_path):
        rng = np.random.default_rng(12)
        x = rng.standard_normal(321)
        write_raw_f32(tmp_path / "x.f32", x)
        np.testing.assert_allclose(read_raw_f32(tmp_path / "x.f32"), x, atol=1e-6)

    def test_unknown_encoding(self, tmp_path):
        with pytest.raises(ValueError):
            write_wav(tmp_path / "a.wav", clip(np.zeros(10)), encoding="pcm24")
