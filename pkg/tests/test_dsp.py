import math
import struct
import wave

import numpy as np
import pytest

from oracles import dft_direct, stft_direct
from tfgan import tensor as T
from tfgan.dsp import (
    MEL_EPS,
    AudioClip,
    MelConfig,
    StftConfig,
    frame_signal,
    magnitude,
    mel_features,
    mel_filterbank,
    stft,
)
from tfgan.gradcheck import grad_check
from tfgan.tensor import Tensor
from tfgan.wavio import WavFormatError, quantize, wav_read, wav_write


def test_disjoint_frames():
    np.testing.assert_array_equal(frame_signal([1.0, 2.0, 3.0, 4.0], 2, 2).data, [[1, 2], [3, 4]])


def test_frame_count_24000():
    assert frame_signal(np.zeros(24000), 240, 120).shape == ((24000 - 240) // 120 + 1, 240) == (199, 240)


def test_unit_frames():
    x = np.arange(5.0)
    np.testing.assert_array_equal(frame_signal(x, 1, 1).data[:, 0], x)


def test_frame_too_short():
    with pytest.raises(ValueError, match="shorter than one frame"):
        frame_signal(np.zeros(3), 4, 1)


def test_frame_count_exhaustive_small_sweep():
    for n in range(1, 61):
        for frame in range(1, n + 1):
            for hop in range(1, frame + 1):
                assert frame_signal(np.zeros(n), frame, hop).shape[0] == (n - frame) // hop + 1


@pytest.mark.slow
def test_frame_count_formula_up_to_1000():
    for n in range(1, 1001, 37):
        for frame in range(1, n + 1, 11):
            for hop in range(1, frame + 1, 7):
                view = np.lib.stride_tricks.sliding_window_view(np.zeros(n), frame)[::hop]
                assert frame_signal(np.zeros(n), frame, hop).shape[0] == view.shape[0] == (n - frame) // hop + 1


def test_stft_config_validation():
    with pytest.raises(ValueError, match="power of two"):
        StftConfig(500, 100, 400)
    with pytest.raises(ValueError, match="win_length"):
        StftConfig(256, 100, 400)


def test_stft_of_zeros():
    s = stft(np.zeros(1000), StftConfig(256, 64, 256))
    assert not np.any(s.real.data) and not np.any(s.imag.data)


@pytest.mark.parametrize("fft, hop, win", [(64, 16, 64), (64, 10, 40), (512, 240, 512), (512, 50, 240)])
def test_stft_matches_naive_dft(fft, hop, win, rng):
    x = rng.normal(size=3 * win + 17)
    s = stft(x, StftConfig(fft, hop, win))
    re, im = stft_direct(x, fft, hop, win)
    assert np.max(np.abs(s.real.data - re)) < 1e-9
    assert np.max(np.abs(s.imag.data - im)) < 1e-9


def test_dft_oracle_on_cosine():
    n = np.arange(64)
    re, im = dft_direct(np.cos(2 * math.pi * 5 * n / 64), 64)
    assert re[5] == pytest.approx(32.0)
    assert np.max(np.abs(np.delete(re, 5))) < 1e-9 and np.max(np.abs(im)) < 1e-9


def test_stft_linearity(rng):
    cfg = StftConfig(64, 16, 48)
    x, y = rng.normal(size=300), rng.normal(size=300)
    a, b = 0.7, -1.9
    lhs = stft(a * x + b * y, cfg).stacked.data
    rhs = a * stft(x, cfg).stacked.data + b * stft(y, cfg).stacked.data
    assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_windowed_parseval(rng):
    from tfgan.dsp import hann_window

    cfg = StftConfig(64, 32, 64)
    x = rng.normal(size=64 * 4)
    s = stft(x, cfg)
    power = s.real.data ** 2 + s.imag.data ** 2
    # interior bins appear twice in the full spectrum, DC and Nyquist once
    weights = np.full(cfg.n_bins, 2.0)
    weights[[0, -1]] = 1.0
    lhs = power @ weights
    frames = frame_signal(x, 64, 32).data * hann_window(64)
    rhs = 64 * np.sum(frames ** 2, axis=1)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-6)


def test_center_padding_frame_count():
    s = stft(np.zeros(24000), StftConfig(1024, 240, 1024, center=True))
    assert s.n_frames == 101


def test_magnitude_values():
    spec = Tensor(np.array([[[3.0]], [[4.0]]]))
    assert magnitude(spec).data[0, 0] == 5.0
    zero = Tensor(np.zeros((2, 1, 1)))
    assert magnitude(zero, floor=1e-7).data[0, 0] == 1e-7


def test_magnitude_gradient():
    spec = Tensor(np.array([[[3.0]], [[4.0]]]), requires_grad=True)
    T.sum(magnitude(spec)).backward()
    np.testing.assert_allclose(spec.grad.reshape(-1), [0.6, 0.8])
    rep = grad_check(lambda t: T.sum(magnitude(t)), np.array([[[3.0]], [[4.0]]]))
    assert rep.passed


@pytest.mark.parametrize(
    "compose",
    [
        lambda s: T.sum(magnitude(s)),
        lambda s: T.mean(T.log(magnitude(s))),
        lambda s: T.frobenius_norm(magnitude(s)),
    ],
)
def test_stft_grad_check(compose, rng):
    cfg = StftConfig(32, 8, 24)
    rep = grad_check(lambda t: compose(stft(t, cfg)), rng.normal(size=(2, 60)))
    assert rep.passed, rep.summary()


def test_centered_stft_grad_check(rng):
    cfg = StftConfig(16, 4, 16, center=True)
    assert grad_check(lambda t: T.sum(magnitude(stft(t, cfg))), rng.normal(size=40)).passed


def test_mel_silence():
    mel = mel_features(np.zeros(2400))
    np.testing.assert_allclose(mel.values, math.log(MEL_EPS))


def test_filterbank_covers_open_band():
    cfg = MelConfig()
    fb = mel_filterbank(cfg)
    freqs = np.arange(cfg.fft_size // 2 + 1) * cfg.sample_rate / cfg.fft_size
    inside = (freqs > cfg.fmin) & (freqs < cfg.fmax)
    assert fb.shape == (80, 513)
    assert np.all(fb[:, inside].sum(axis=0) > 0)
    assert np.all(fb >= 0) and fb.max() <= 1.0


def test_mel_frames_one_second(rng):
    mel = mel_features(AudioClip(0.1 * rng.normal(size=24000)))
    assert mel.values.shape == (101, 80)
    assert np.all(np.isfinite(mel.values))


def test_wav_round_trip_bit_exact(tmp_path, rng):
    words = rng.integers(-32768, 32768, size=5000).astype(np.int16)
    path = tmp_path / "a.wav"
    wav_write(path, AudioClip(words / 32768.0))
    clip = wav_read(path)
    np.testing.assert_array_equal(quantize(clip.samples), words)
    with wave.open(str(path)) as w:
        assert w.getframerate() == 24000 and w.getnchannels() == 1 and w.getsampwidth() == 2
        assert np.array_equal(np.frombuffer(w.readframes(5000), "<i2"), words)


def test_min_word_maps_to_minus_one(tmp_path):
    path = tmp_path / "m.wav"
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(24000)
        w.writeframes(struct.pack("<h", -32768))
    assert wav_read(path).samples[0] == -1.0


def test_write_rounds_half_away_and_clamps():
    np.testing.assert_array_equal(
        quantize(np.array([0.5 / 32768, -0.5 / 32768, 1.5 / 32768, 1.0, -1.2, 2.0])),
        [1, -1, 2, 32767, -32768, 32767],
    )


def test_stereo_rejected(tmp_path):
    path = tmp_path / "s.wav"
    with wave.open(str(path), "wb") as w:
        w.setnchannels(2)
        w.setsampwidth(2)
        w.setframerate(24000)
        w.writeframes(b"\x00\x00" * 20)
    with pytest.raises(WavFormatError, match="mono required"):
        wav_read(path)


def test_8bit_rejected(tmp_path):
    path = tmp_path / "b.wav"
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(1)
        w.setframerate(24000)
        w.writeframes(b"\x80" * 20)
    with pytest.raises(WavFormatError, match="16-bit"):
        wav_read(path)


def test_write_rejects_nan(tmp_path):
    with pytest.raises(ValueError):
        wav_write(tmp_path / "n.wav", np.array([0.0, np.nan]))
