"""Adam, the alternating GAN loop, checkpoints and inference."""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import container
from . import tensor as T
from .data import Dataset, load_features
from .discriminators import FreqDiscConfig, FreqDiscriminator, TimeDiscConfig, TimeDiscriminator
from .dsp import SAMPLE_RATE, AudioClip, MelConfig, mel_features
from .generator import Generator, GeneratorConfig
from .losses import (
    DEFAULT_STFT_RESOLUTIONS,
    DEFAULT_TIME_SCALES,
    LossSettings,
    LossWeights,
    StftLossConfig,
    TimeLossConfig,
    discriminator_total_loss,
    generator_total_loss,
)
from .params import ModelParams
from .tensor import Tensor
from .wavio import wav_read, wav_write

FORMAT_VERSION = 1

ABLATIONS = {
    "B0": dict(use_stft_loss=False, use_residual_upsample=False, use_freq_disc=False, use_time_losses=False),
    "P1": dict(use_stft_loss=True, use_residual_upsample=False, use_freq_disc=False, use_time_losses=False),
    "P2": dict(use_stft_loss=True, use_residual_upsample=True, use_freq_disc=False, use_time_losses=False),
    "P3": dict(use_stft_loss=True, use_residual_upsample=True, use_freq_disc=False, use_time_losses=True),
    "P4": dict(use_stft_loss=True, use_residual_upsample=True, use_freq_disc=True, use_time_losses=True),
}

LOG_COLUMNS = [
    "step",
    "wall_ms",
    "g_total",
    "d_total",
    "g_adv_time",
    "g_adv_freq",
    "g_fm",
    "g_stft",
    "g_time",
    "d_time",
    "d_freq",
]


class ConfigError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, components: dict[str, float]):
        self.step = step
        self.components = components
        detail = ", ".join(f"{k}={v!r}" for k, v in components.items())
        super().__init__(f"non-finite loss at step {step}: {detail}")


@dataclass
class TrainConfig:
    lr: float = 2e-4
    adam_betas: tuple[float, float] = (0.5, 0.9)
    adam_eps: float = 1e-8
    batch_size: int = 2
    clip_samples: int = 4800
    steps: int = 1000
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    stft_resolutions: tuple = DEFAULT_STFT_RESOLUTIONS
    time_scales: tuple = DEFAULT_TIME_SCALES
    use_stft_loss: bool = True
    use_residual_upsample: bool = True
    use_freq_disc: bool = True
    use_time_losses: bool = True
    g_warmup_steps: int = 0
    feature_matching_weight: float = 0.0
    channel_scale: float = 0.125
    precision: str = "float32"
    checkpoint_every: int = 100
    grad_clip: float | None = None
    lr_decay: float | None = None
    up_factors: tuple[int, ...] = (8, 6, 5)
    mel_hop: int = 240
    n_mels: int = 80

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        self.adam_betas = tuple(float(b) for b in self.adam_betas)
        self.stft_resolutions = StftLossConfig(self.stft_resolutions).resolutions
        self.time_scales = TimeLossConfig(self.time_scales).scales
        self.up_factors = tuple(int(f) for f in self.up_factors)
        self.validate()

    def validate(self) -> None:
        hop = math.prod(self.up_factors)
        if self.clip_samples % hop:
            raise ConfigError(f"clip_samples {self.clip_samples} must be multiple of {hop}")
        if self.mel_hop != hop:
            raise ConfigError(f"mel hop {self.mel_hop} must equal the generator upsampling ratio {hop}")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.batch_size < 1 or self.steps < 0:
            raise ConfigError("batch_size must be >= 1 and steps >= 0")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")
        if not self.use_stft_loss and not self.use_time_losses and self.g_warmup_steps > 0:
            raise ConfigError("generator warm-up needs a reconstruction loss")
        if self.clip_samples < TimeLossConfig(self.time_scales).min_length and self.use_time_losses:
            raise ConfigError(f"clip_samples must be at least {TimeLossConfig(self.time_scales).min_length}")

    @property
    def dtype(self):
        return np.dtype(self.precision)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        d["stft_resolutions"] = [list(r) for r in self.stft_resolutions]
        d["time_scales"] = [list(s) for s in self.time_scales]
        d["up_factors"] = list(self.up_factors)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> TrainConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_ablation(self, name: str) -> TrainConfig:
        if name not in ABLATIONS:
            raise ConfigError(f"unknown ablation {name!r}; choose from {sorted(ABLATIONS)}")
        return dataclasses.replace(self, **ABLATIONS[name])

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            n_mels=self.n_mels,
            up_factors=self.up_factors,
            channel_scale=self.channel_scale,
            residual_upsample=self.use_residual_upsample,
        )

    def mel_config(self) -> MelConfig:
        return MelConfig(hop_length=self.mel_hop, n_mels=self.n_mels)

    def loss_settings(self, adversarial: bool = True) -> LossSettings:
        return LossSettings(
            weights=self.weights,
            stft=StftLossConfig(self.stft_resolutions),
            time=TimeLossConfig(self.time_scales),
            use_stft_loss=self.use_stft_loss,
            use_time_losses=self.use_time_losses,
            use_freq_disc=self.use_freq_disc,
            use_adversarial=adversarial,
            feature_matching_weight=self.feature_matching_weight,
        )


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> AdamState:
        return cls({k: np.zeros_like(p.data) for k, p in params.items()}, {k: np.zeros_like(p.data) for k, p in params.items()})


def adam_step(params: ModelParams, state: AdamState, lr: float, beta1: float, beta2: float, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update in place, then clear the gradients."""
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for name, p in params.items():
        g = p.grad
        m = state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        v = state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.data = (p.data - update).astype(p.dtype)
        p.grad = None


def clip_grad_norm(params: ModelParams, max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params.values() if p.grad is not None))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad = (p.grad * scale).astype(p.dtype)
    return total


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class StepReport:
    step: int
    wall_ms: float
    g_total: float
    d_total: float | None
    components: dict[str, float]

    def losses(self) -> dict[str, float | None]:
        """Everything except wall time, for determinism comparisons."""
        out = {"g_total": self.g_total, "d_total": self.d_total}
        out.update(self.components)
        return out

    def row(self) -> list[str]:
        values = {"step": self.step, "wall_ms": round(self.wall_ms, 3), **self.losses()}
        return ["" if values.get(c) is None else repr(values[c]) if isinstance(values[c], float) else str(values[c]) for c in LOG_COLUMNS]


class Trainer:
    """Holds the three networks, their optimiser states and the data RNG."""

    def __init__(self, cfg: TrainConfig, dataset: Dataset | None = None):
        self.cfg = cfg
        self.dataset = dataset
        dtype = cfg.dtype
        seeds = np.random.SeedSequence(cfg.seed).generate_state(4)
        self.generator = Generator(cfg.generator_config(), seed=int(seeds[0]), dtype=dtype)
        self.time_disc = TimeDiscriminator(TimeDiscConfig(channel_scale=cfg.channel_scale), seed=int(seeds[1]), dtype=dtype)
        self.freq_disc = FreqDiscriminator(FreqDiscConfig(channel_scale=cfg.channel_scale), seed=int(seeds[2]), dtype=dtype)
        self.rng = np.random.default_rng(int(seeds[3]))
        self.opt = {
            "gen": AdamState.zeros_like(self.generator.params),
            "dtime": AdamState.zeros_like(self.time_disc.params),
            "dfreq": AdamState.zeros_like(self.freq_disc.params),
        }
        self.step = 0

    @property
    def models(self) -> dict[str, ModelParams]:
        return {"gen": self.generator.params, "dtime": self.time_disc.params, "dfreq": self.freq_disc.params}

    def lr(self) -> float:
        if self.cfg.lr_decay is None:
            return self.cfg.lr
        return self.cfg.lr * self.cfg.lr_decay ** self.step

    def _update(self, key: str) -> None:
        params = self.models[key]
        if self.cfg.grad_clip is not None:
            clip_grad_norm(params, self.cfg.grad_clip)
        b1, b2 = self.cfg.adam_betas
        adam_step(params, self.opt[key], self.lr(), b1, b2, self.cfg.adam_eps)

    def adversarial_active(self, step: int | None = None) -> bool:
        step = self.step + 1 if step is None else step
        return step > self.cfg.g_warmup_steps

    def next_batch(self):
        if self.dataset is None:
            raise RuntimeError("trainer has no dataset")
        return self.dataset.next_batch(self.rng, self.cfg.batch_size)

    def train_step(self, batch=None) -> StepReport:
        cfg = self.cfg
        if batch is None:
            batch = self.next_batch()
        mel, wave = batch
        start = time.perf_counter()
        step = self.step + 1
        adversarial = self.adversarial_active(step)
        use_freq = cfg.use_freq_disc
        x = Tensor(np.asarray(wave, dtype=cfg.dtype))
        x_hat = self.generator(np.asarray(mel, dtype=cfg.dtype))

        d_total = None
        comps: dict[str, float] = {}
        if adversarial:
            for key in ("dtime", "dfreq"):
                self.models[key].zero_grads()
            d_loss, d_comps = discriminator_total_loss(x, x_hat, self.time_disc, self.freq_disc if use_freq else None, use_freq)
            comps.update({k: float(v.data) for k, v in d_comps.items()})
            d_total = float(d_loss.data)
            if not math.isfinite(d_total):
                raise TrainingDiverged(step, {"d_total": d_total, **comps})
            T.backward(d_loss)
            self._update("dtime")
            if use_freq:
                self._update("dfreq")
            else:
                self.freq_disc.params.zero_grads()

        frozen = [self.time_disc.params, self.freq_disc.params]
        for p in frozen:
            p.set_requires_grad(False)
        try:
            g_loss, g_comps = generator_total_loss(
                x, x_hat, self.time_disc, self.freq_disc, cfg.loss_settings(adversarial)
            )
        finally:
            for p in frozen:
                p.set_requires_grad(True)
        g_values = {k: float(v.data) for k, v in g_comps.items()}
        g_total = float(g_loss.data)
        if not math.isfinite(g_total) or not all(math.isfinite(v) for v in g_values.values()):
            raise TrainingDiverged(step, {"g_total": g_total, **g_values, **comps})
        self.generator.params.zero_grads()
        T.backward(g_loss)
        self._update("gen")
        self.step = step
        comps.update(g_values)
        wall = (time.perf_counter() - start) * 1000.0
        return StepReport(step, wall, g_total, d_total, comps)

    # -- persistence -------------------------------------------------------
    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays: dict[str, np.ndarray] = {
            "meta/version": np.array([FORMAT_VERSION], dtype=np.float64),
            "meta/step": np.array([self.step], dtype=np.float64),
            "meta/config": container.text_array(self.cfg.to_json()),
            "meta/rng": container.text_array(json.dumps(self.rng.bit_generator.state, sort_keys=True)),
        }
        for key, params in self.models.items():
            for name, p in params.items():
                arrays[f"{key}/{name}"] = p.data
        for key, st in self.opt.items():
            arrays[f"opt/{key}/t"] = np.array([st.t], dtype=np.float64)
            for name in self.models[key]:
                arrays[f"opt/{key}/m/{name}"] = st.m[name]
                arrays[f"opt/{key}/v/{name}"] = st.v[name]
        return arrays

    def load_state_arrays(self, arrays) -> None:
        for key, params in self.models.items():
            params.load_arrays({name: arrays[f"{key}/{name}"] for name in params if f"{key}/{name}" in arrays})
            st = self.opt[key]
            st.t = int(arrays[f"opt/{key}/t"][0])
            for name in params:
                st.m[name] = arrays[f"opt/{key}/m/{name}"].copy()
                st.v[name] = arrays[f"opt/{key}/v/{name}"].copy()
        self.rng.bit_generator.state = json.loads(container.array_text(arrays["meta/rng"]))
        self.step = int(arrays["meta/step"][0])


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    version: int
    step: int
    config: TrainConfig
    arrays: dict[str, np.ndarray]

    def trainer(self, dataset: Dataset | None = None) -> Trainer:
        tr = Trainer(self.config, dataset)
        tr.load_state_arrays(self.arrays)
        return tr

    def generator(self) -> Generator:
        gen = Generator(self.config.generator_config(), dtype=self.config.dtype)
        gen.params.load_arrays({n: self.arrays[f"gen/{n}"] for n in gen.params})
        return gen


def save_checkpoint(path, trainer: Trainer) -> None:
    container.save(path, trainer.state_arrays())


def load_checkpoint(path) -> Checkpoint:
    try:
        arrays = container.load(path)
    except FileNotFoundError:
        raise
    except container.ContainerError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    for key in ("meta/version", "meta/step", "meta/config", "meta/rng"):
        if key not in arrays:
            raise CheckpointError(f"{path}: missing {key}")
    version = int(arrays["meta/version"][0])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: checkpoint format version {version}, expected {FORMAT_VERSION}")
    cfg = TrainConfig.from_dict(json.loads(container.array_text(arrays["meta/config"])))
    return Checkpoint(version, int(arrays["meta/step"][0]), cfg, dict(arrays))


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------

def vocode(generator: Generator, mel: np.ndarray) -> np.ndarray:
    """Run the generator without recording a graph; returns float64 samples."""
    mel = np.asarray(mel)
    if mel.ndim != 2 or mel.shape[0] < 1:
        raise ValueError(f"need a (frames >= 1, n_mels) mel matrix, got {mel.shape}")
    with T.no_grad():
        out = generator(mel[None].astype(generator.params["pre.w"].dtype))
    return out.data.reshape(-1).astype(np.float64)


def synthesize(input_path, ckpt, out_path) -> AudioClip:
    """Vocode a feature cache, or a WAV via its extracted features (copy synthesis)."""
    checkpoint = ckpt if isinstance(ckpt, Checkpoint) else load_checkpoint(ckpt)
    gen = checkpoint.generator()
    if Path(input_path).suffix.lower() == ".wav":
        mel = mel_features(wav_read(input_path), checkpoint.config.mel_config()).values
    else:
        mel = load_features(input_path)
    if mel.shape[0] == 0:
        raise ValueError("input has zero mel frames")
    clip = AudioClip(vocode(gen, mel), SAMPLE_RATE)
    wav_write(out_path, clip)
    return clip
