"""Framing, windowed STFT (differentiable), magnitudes and log-mel features."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, as_tensor, make_result, pad1d, unfold1d

SAMPLE_RATE = 24000
MAG_FLOOR = 1e-7
MEL_EPS = 1e-6


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("audio samples must be finite")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 512
    hop_length: int = 240
    win_length: int = 512
    window: str = "hann"
    center: bool = False

    def __post_init__(self):
        if self.fft_size < 1 or self.fft_size & (self.fft_size - 1):
            raise ValueError(f"fft_size must be a power of two, got {self.fft_size}")
        if not 1 <= self.win_length <= self.fft_size:
            raise ValueError(f"win_length must be in [1, fft_size], got {self.win_length}")
        if self.hop_length < 1:
            raise ValueError("hop_length must be >= 1")
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


def hann_window(length: int) -> np.ndarray:
    """Periodic (DFT-even) Hann window."""
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


def frame_count(length: int, frame_length: int, hop_length: int) -> int:
    if length < frame_length:
        return 0
    return (length - frame_length) // hop_length + 1


def frame_signal(x, frame_length: int, hop_length: int) -> Tensor:
    """(..., T) -> (..., n_frames, frame_length); frames start every ``hop_length`` samples, no padding."""
    return unfold1d(as_tensor(x), frame_length, hop_length)


def rdft(frames: Tensor, fft_size: int, window: np.ndarray | None = None) -> Tensor:
    """Windowed real DFT of each frame.

    frames: (..., n, L) with L <= fft_size; frames are zero-padded at the end.
    Returns (..., 2, n, fft_size//2 + 1) with real parts at index 0 and
    imaginary parts at index 1 of the inserted axis.
    """
    L = frames.shape[-1]
    if L > fft_size:
        raise ValueError(f"frame length {L} exceeds fft_size {fft_size}")
    win = np.ones(L) if window is None else np.asarray(window, dtype=np.float64)
    dtype = frames.dtype
    spec = np.fft.rfft(frames.data * win, n=fft_size, axis=-1)
    out = np.stack([spec.real, spec.imag], axis=-3).astype(dtype)
    n_bins = fft_size // 2 + 1

    def bw(g):
        gc = g[..., 0, :, :] + 1j * g[..., 1, :, :]
        full = np.zeros(gc.shape[:-1] + (fft_size,), dtype=np.complex128)
        full[..., :n_bins] = gc
        # adjoint of the real/imag parts of the forward DFT
        gy = fft_size * np.fft.ifft(full, axis=-1).real[..., :L]
        return ((gy * win).astype(dtype),)

    return make_result(out, (frames,), bw)


@dataclass
class Spectrogram:
    """Real and imaginary STFT parts stacked as (..., 2, frames, bins)."""

    stacked: Tensor
    config: StftConfig = field(default_factory=StftConfig)

    @property
    def real(self) -> Tensor:
        return self.stacked[..., 0, :, :]

    @property
    def imag(self) -> Tensor:
        return self.stacked[..., 1, :, :]

    @property
    def n_frames(self) -> int:
        return self.stacked.shape[-2]


def stft(x, cfg: StftConfig) -> Spectrogram:
    x = as_tensor(x)
    if cfg.center:
        half = cfg.fft_size // 2
        x = pad1d(x, half, half, "reflect")
    if x.shape[-1] < cfg.win_length:
        raise ValueError(f"signal of {x.shape[-1]} samples is shorter than one STFT window ({cfg.win_length})")
    frames = frame_signal(x, cfg.win_length, cfg.hop_length)
    return Spectrogram(rdft(frames, cfg.fft_size, hann_window(cfg.win_length)), cfg)


def magnitude(spec: Spectrogram | Tensor, floor: float = MAG_FLOOR) -> Tensor:
    """max(sqrt(re^2 + im^2), floor); gradient is zero where the floor is active."""
    if floor <= 0:
        raise ValueError("magnitude floor must be positive")
    s = spec.stacked if isinstance(spec, Spectrogram) else spec
    re = s.data[..., 0, :, :]
    im = s.data[..., 1, :, :]
    mag = np.sqrt(re * re + im * im)
    active = mag > floor
    out = np.where(active, mag, floor).astype(s.dtype)

    def bw(g):
        scale = np.where(active, g / np.where(active, mag, 1.0), 0.0)
        return (np.stack([scale * re, scale * im], axis=-3),)

    return make_result(out, (s,), bw)


# ---------------------------------------------------------------------------
# mel features
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MelConfig:
    fft_size: int = 1024
    hop_length: int = 240
    win_length: int = 1024
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 12000.0
    sample_rate: int = SAMPLE_RATE

    @property
    def stft(self) -> StftConfig:
        return StftConfig(self.fft_size, self.hop_length, self.win_length, "hann", center=True)


@dataclass
class MelSpectrogram:
    values: np.ndarray  # (frames, n_mels)
    hop_length: int = 240

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ValueError(f"mel values must be (frames >= 1, n_mels), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("mel values must be finite")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Triangular filters equally spaced on the mel scale, shape (n_mels, fft_size//2 + 1)."""
    if not 0 <= cfg.fmin < cfg.fmax <= cfg.sample_rate / 2:
        raise ValueError(f"need 0 <= fmin < fmax <= Nyquist, got ({cfg.fmin}, {cfg.fmax})")
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    freqs = np.arange(cfg.fft_size // 2 + 1) * cfg.sample_rate / cfg.fft_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def mel_features(clip, cfg: MelConfig = MelConfig()) -> MelSpectrogram:
    """log(mel_filterbank . |STFT| + 1e-6) on a reflect-centred STFT; not differentiable."""
    samples = clip.samples if isinstance(clip, AudioClip) else np.asarray(clip, dtype=np.float64)
    samples = samples.astype(np.float64).reshape(-1)
    half = cfg.fft_size // 2
    if samples.size <= half:
        raise ValueError(f"clip of {samples.size} samples is too short for mel extraction (need > {half})")
    padded = np.pad(samples, (half, half), mode="reflect")
    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.win_length)[:: cfg.hop_length]
    mag = np.abs(np.fft.rfft(frames * hann_window(cfg.win_length), n=cfg.fft_size, axis=-1))
    mel = mag @ mel_filterbank(cfg).T
    return MelSpectrogram(np.log(mel + MEL_EPS), cfg.hop_length)
