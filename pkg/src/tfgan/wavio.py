"""16-bit PCM mono WAV reading and writing."""

from __future__ import annotations

import os
import wave

import numpy as np

from .dsp import SAMPLE_RATE, AudioClip


class WavFormatError(ValueError):
    pass


def quantize(samples: np.ndarray) -> np.ndarray:
    """Map [-1, 1] floats to int16 words: round half away from zero, then clamp."""
    scaled = np.asarray(samples, dtype=np.float64) * 32768.0
    rounded = np.where(scaled >= 0, np.floor(scaled + 0.5), np.ceil(scaled - 0.5))
    return np.clip(rounded, -32768, 32767).astype("<i2")


def wav_read(path: str | os.PathLike) -> AudioClip:
    try:
        with wave.open(os.fspath(path), "rb") as w:
            channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise WavFormatError(f"{path}: unsupported WAV encoding ({exc})") from None
    except EOFError:
        raise WavFormatError(f"{path}: truncated WAV file") from None
    if channels != 1:
        raise WavFormatError(f"{path}: mono required, file has {channels} channels")
    if width != 2:
        raise WavFormatError(f"{path}: 16-bit PCM required, file has {8 * width}-bit samples")
    words = np.frombuffer(raw, dtype="<i2")
    return AudioClip(words.astype(np.float64) / 32768.0, rate)


def wav_write(path: str | os.PathLike, clip: AudioClip | np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    if isinstance(clip, AudioClip):
        samples, sample_rate = clip.samples, clip.sample_rate
    else:
        samples = np.asarray(clip, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(samples)):
        raise ValueError("cannot write non-finite samples")
    words = quantize(samples)
    with wave.open(os.fspath(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate))
        w.writeframes(words.tobytes())
