"""Dataset ingestion, random aligned crops and a synthetic smoke corpus."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import container
from .dsp import SAMPLE_RATE, MelConfig, mel_features
from .wavio import WavFormatError, wav_read, wav_write

log = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


@dataclass
class Manifest:
    entries: list[tuple[str, int]] = field(default_factory=list)
    rejected: list[tuple[str, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)


def dataset_scan(directory: str | os.PathLike, clip_samples: int, sample_rate: int = SAMPLE_RATE) -> Manifest:
    """Collect usable WAVs (mono, 16-bit, ``sample_rate``, at least ``clip_samples`` long)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"{directory} is not a directory")
    manifest = Manifest()
    for path in sorted(directory.glob("*.wav")):
        try:
            clip = wav_read(path)
        except WavFormatError as exc:
            manifest.rejected.append((str(path), str(exc)))
            continue
        if clip.sample_rate != sample_rate:
            manifest.rejected.append((str(path), f"sample rate {clip.sample_rate} != {sample_rate}"))
        elif len(clip) < clip_samples:
            manifest.rejected.append((str(path), f"{len(clip)} samples < clip length {clip_samples}"))
        else:
            manifest.entries.append((str(path), len(clip)))
    for path, reason in manifest.rejected:
        log.warning("skipping %s: %s", path, reason)
    if not manifest.entries:
        detail = "; ".join(f"{p}: {r}" for p, r in manifest.rejected) or "no .wav files found"
        raise DatasetError(f"no usable audio in {directory} ({detail})")
    return manifest


def feature_cache_path(feature_dir: str | os.PathLike, wav_path: str | os.PathLike) -> Path:
    return Path(feature_dir) / (Path(wav_path).stem + ".tfv")


def save_features(path, mel: np.ndarray, hop_length: int) -> None:
    container.save(path, {"mel": np.asarray(mel, dtype=np.float32), "hop_length": np.array([hop_length], dtype=np.float64)})


def load_features(path) -> np.ndarray:
    arrays = container.load(path)
    if "mel" not in arrays:
        raise container.ContainerError(f"{path}: no 'mel' array in feature cache")
    return arrays["mel"]


class Dataset:
    """Random fixed-length crops aligned to the feature hop, paired with their mel frames."""

    def __init__(self, manifest: Manifest, clip_samples: int, mel_cfg: MelConfig = MelConfig(), feature_dir=None):
        hop = mel_cfg.hop_length
        if clip_samples % hop:
            raise DatasetError(f"clip_samples {clip_samples} must be a multiple of {hop}")
        self.manifest = manifest
        self.clip_samples = clip_samples
        self.mel_cfg = mel_cfg
        self.feature_dir = feature_dir
        self._cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def _load(self, path: str) -> tuple[np.ndarray, np.ndarray]:
        if path not in self._cache:
            samples = wav_read(path).samples
            mel = None
            if self.feature_dir is not None:
                cached = feature_cache_path(self.feature_dir, path)
                if cached.exists():
                    mel = load_features(cached).astype(np.float64)
            if mel is None:
                mel = mel_features(samples, self.mel_cfg).values
            self._cache[path] = (samples, mel)
        return self._cache[path]

    def crop(self, index: int, offset_frames: int) -> tuple[np.ndarray, np.ndarray]:
        path, _ = self.manifest.entries[index]
        samples, mel = self._load(path)
        hop = self.mel_cfg.hop_length
        n_frames = self.clip_samples // hop
        start = offset_frames * hop
        wave = samples[start:start + self.clip_samples]
        frames = mel[offset_frames:offset_frames + n_frames]
        if wave.size != self.clip_samples or frames.shape[0] != n_frames:
            raise DatasetError(f"crop at frame {offset_frames} runs past the end of {path}")
        return frames, wave

    def next_batch(self, rng: np.random.Generator, batch_size: int) -> tuple[np.ndarray, np.ndarray]:
        """mel (B, frames, n_mels) and wave (B, 1, frames * hop); wave[i] belongs to frame i // hop."""
        mels, waves = [], []
        hop = self.mel_cfg.hop_length
        for _ in range(batch_size):
            idx = int(rng.integers(len(self.manifest.entries)))
            n = self.manifest.entries[idx][1]
            positions = (n - self.clip_samples) // hop + 1
            frames, wave = self.crop(idx, int(rng.integers(positions)))
            mels.append(frames)
            waves.append(wave)
        return np.stack(mels), np.stack(waves)[:, None, :]


def next_batch(dataset: Dataset, rng: np.random.Generator, batch_size: int):
    return dataset.next_batch(rng, batch_size)


def smoke_clip(n_samples: int, seed: int = 0, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """A speech-like test signal: gliding harmonic voice, syllable envelope, light breath noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(n_samples) / sample_rate
    dur = n_samples / sample_rate
    f0 = rng.uniform(110, 180) * (1 + 0.25 * np.sin(2 * np.pi * rng.uniform(1.5, 3.0) * t + rng.uniform(0, 6.3)))
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    voiced = sum(np.sin(k * phase + rng.uniform(0, 6.3)) / k for k in range(1, 9))
    centres = np.sort(rng.uniform(0.1, 0.9, size=max(1, int(round(dur * 4))))) * dur
    env = sum(np.exp(-0.5 * ((t - c) / (0.06 + 0.04 * rng.random())) ** 2) for c in centres)
    env = env / max(env.max(), 1e-9)
    noise = rng.normal(scale=0.02, size=n_samples)
    x = env * voiced + noise * (0.3 + env)
    return 0.5 * x / np.max(np.abs(x))


def write_smoke_dataset(directory, n_files: int = 3, seconds: float = 0.5, seed: int = 0) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    n = int(round(seconds * SAMPLE_RATE))
    for i in range(n_files):
        path = directory / f"smoke_{i:02d}.wav"
        wav_write(path, smoke_clip(n, seed + i))
        paths.append(path)
    return paths
