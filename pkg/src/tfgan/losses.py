"""Reconstruction, time-domain and adversarial objectives."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .dsp import MAG_FLOOR, StftConfig, frame_signal, magnitude, stft
from .tensor import Tensor, as_tensor

DEFAULT_STFT_RESOLUTIONS = ((1024, 120, 600), (2048, 240, 1200), (512, 50, 240))
DEFAULT_TIME_SCALES = ((1, 1), (240, 120), (480, 240), (960, 480))


@dataclass
class StftLossConfig:
    resolutions: tuple = DEFAULT_STFT_RESOLUTIONS

    def __post_init__(self):
        self.resolutions = tuple(tuple(int(v) for v in r) for r in self.resolutions)
        for fft, hop, win in self.resolutions:
            StftConfig(fft, hop, win)

    def configs(self) -> list[StftConfig]:
        return [StftConfig(fft, hop, win) for fft, hop, win in self.resolutions]


@dataclass
class TimeLossConfig:
    scales: tuple = DEFAULT_TIME_SCALES

    def __post_init__(self):
        self.scales = tuple(tuple(int(v) for v in s) for s in self.scales)
        for frame, hop in self.scales:
            if not 1 <= hop <= frame:
                raise ValueError(f"time-loss scale needs 1 <= hop <= frame, got ({frame}, {hop})")

    @property
    def min_length(self) -> int:
        return max(frame for frame, _ in self.scales)


@dataclass
class LossWeights:
    adv_time: float = 1.0
    stft: float = 1.0
    adv_freq: float = 1.0
    time: float = 20.0

    def __post_init__(self):
        if min(self.adv_time, self.stft, self.adv_freq, self.time) < 0:
            raise ValueError("loss weights must be non-negative")


def _flatten_pair(x, x_hat) -> tuple[Tensor, Tensor]:
    x, x_hat = as_tensor(x), as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise ValueError(f"signal shapes differ: {x.shape} vs {x_hat.shape}")
    n = x.shape[-1]
    batch = int(np.prod(x.shape[:-1])) if x.ndim > 1 else 1
    return x.reshape(batch, n), x_hat.reshape(batch, n)


def _mags(x, x_hat, cfg: StftConfig):
    x, x_hat = _flatten_pair(x, x_hat)
    if x.shape[-1] < cfg.win_length:
        raise ValueError(f"signals of {x.shape[-1]} samples are shorter than one STFT frame ({cfg.win_length})")
    return magnitude(stft(x, cfg)), magnitude(stft(x_hat, cfg))


def _spectral_convergence(m: Tensor, m_hat: Tensor) -> Tensor:
    num = T.frobenius_norm(m - m_hat, axes=(-2, -1))
    den = T.clamp_min(T.frobenius_norm(m, axes=(-2, -1)), MAG_FLOOR)
    return T.mean(num / den)


def _log_magnitude(m: Tensor, m_hat: Tensor) -> Tensor:
    return T.mean(T.abs(T.log(m) - T.log(m_hat)))


def spectral_convergence(x, x_hat, cfg: StftConfig) -> Tensor:
    """|| |X| - |X^| ||_F / || |X| ||_F, averaged over the batch."""
    return _spectral_convergence(*_mags(x, x_hat, cfg))


def log_magnitude_loss(x, x_hat, cfg: StftConfig) -> Tensor:
    """Mean absolute difference of log magnitudes."""
    return _log_magnitude(*_mags(x, x_hat, cfg))


def multi_res_stft_loss(x, x_hat, cfg: StftLossConfig = StftLossConfig()) -> Tensor:
    total = None
    for res in cfg.configs():
        m, m_hat = _mags(x, x_hat, res)
        term = _spectral_convergence(m, m_hat) + _log_magnitude(m, m_hat)
        total = term if total is None else total + term
    return total / len(cfg.resolutions)


def time_domain_losses(x, x_hat, scale: tuple[int, int]) -> tuple[Tensor, Tensor, Tensor]:
    """(energy, time, phase) L1 losses at one (frame, hop) scale.

    Energy and time compare per-frame mean of squares and per-frame mean; the
    phase term compares first differences of the unframed signals.
    """
    x, x_hat = _flatten_pair(x, x_hat)
    frame, hop = scale
    if x.shape[-1] < frame:
        raise ValueError(f"signals of {x.shape[-1]} samples are shorter than the {frame}-sample frame")
    fx = frame_signal(x, frame, hop)
    fy = frame_signal(x_hat, frame, hop)
    loss_e = T.mean(T.abs(T.mean(T.square(fx), axes=-1) - T.mean(T.square(fy), axes=-1)))
    loss_t = T.mean(T.abs(T.mean(fx, axes=-1) - T.mean(fy, axes=-1)))
    n = x.shape[-1]
    if n < 2:
        raise ValueError("phase loss needs at least two samples")
    dx = x[:, 1:] - x[:, : n - 1]
    dy = x_hat[:, 1:] - x_hat[:, : n - 1]
    loss_p = T.mean(T.abs(dx - dy))
    return loss_e, loss_t, loss_p


def total_time_loss(x, x_hat, cfg: TimeLossConfig = TimeLossConfig()) -> Tensor:
    x, x_hat = _flatten_pair(x, x_hat)
    if x.shape[-1] < cfg.min_length:
        raise ValueError(f"time losses need at least {cfg.min_length} samples, got {x.shape[-1]}")
    total = None
    for scale in cfg.scales:
        e, t, p = time_domain_losses(x, x_hat, scale)
        term = e + t + p
        total = term if total is None else total + term
    return total


def _logit_list(logits) -> list[Tensor]:
    if isinstance(logits, Tensor):
        return [logits]
    out = [l[0] if isinstance(l, tuple) else l for l in logits]
    return [as_tensor(l) for l in out]


def hinge_d_loss(real_logits, fake_logits) -> Tensor:
    real, fake = _logit_list(real_logits), _logit_list(fake_logits)
    if not real or not fake:
        raise ValueError("hinge_d_loss needs at least one logit map")
    if len(real) != len(fake):
        raise ValueError(f"{len(real)} real vs {len(fake)} fake logit maps")
    total = None
    for r, f in zip(real, fake):
        term = T.mean(T.relu(1.0 - r)) + T.mean(T.relu(1.0 + f))
        total = term if total is None else total + term
    return total


def hinge_g_loss(fake_logits) -> Tensor:
    fake = _logit_list(fake_logits)
    if not fake:
        raise ValueError("hinge_g_loss needs at least one logit map")
    total = None
    for f in fake:
        term = -T.mean(f)
        total = term if total is None else total + term
    return total


def feature_matching(real_feats, fake_feats) -> Tensor:
    """Mean L1 distance between discriminator activations; real side is detached."""
    pairs = []
    for r_scale, f_scale in zip(real_feats, fake_feats):
        if isinstance(r_scale, Tensor):
            r_scale, f_scale = [r_scale], [f_scale]
        if len(r_scale) != len(f_scale):
            raise ValueError("feature lists differ in length")
        pairs.extend(zip(r_scale, f_scale))
    if not pairs:
        raise ValueError("no feature maps to match")
    total = None
    for r, f in pairs:
        if r.shape != f.shape:
            raise ValueError(f"feature shapes differ: {r.shape} vs {f.shape}")
        term = T.mean(T.abs(f - r.detach()))
        total = term if total is None else total + term
    return total / len(pairs)


@dataclass
class LossSettings:
    """Everything the two total objectives need besides the signals and models."""

    weights: LossWeights = field(default_factory=LossWeights)
    stft: StftLossConfig = field(default_factory=StftLossConfig)
    time: TimeLossConfig = field(default_factory=TimeLossConfig)
    use_stft_loss: bool = True
    use_time_losses: bool = True
    use_freq_disc: bool = True
    use_adversarial: bool = True
    feature_matching_weight: float = 0.0


def _as64(t: Tensor) -> Tensor:
    return t if t.dtype == np.float64 else T.astype(t, np.float64)


def generator_total_loss(x, x_hat, time_disc, freq_disc, settings: LossSettings = LossSettings(), z=None):
    """Weighted generator objective.

    Returns ``(total, components)`` where components holds each unweighted
    term that is enabled. The weighted sum is accumulated in float64.
    ``z`` is accepted for signature compatibility and ignored.
    """
    x, x_hat = as_tensor(x), as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise ValueError(f"signal shapes differ: {x.shape} vs {x_hat.shape}")
    weights = component_weights(settings)
    components: dict[str, Tensor] = {}
    if settings.use_adversarial:
        fake = time_disc(x_hat)
        components["g_adv_time"] = hinge_g_loss(fake)
        if settings.feature_matching_weight > 0:
            with T.no_grad():
                real = time_disc(x.detach())
            components["g_fm"] = feature_matching([f for _, f in real], [f for _, f in fake])
        if settings.use_freq_disc and freq_disc is not None:
            components["g_adv_freq"] = T.mean(-freq_disc(x_hat))
    if settings.use_stft_loss:
        components["g_stft"] = multi_res_stft_loss(x, x_hat, settings.stft)
    if settings.use_time_losses:
        components["g_time"] = total_time_loss(x, x_hat, settings.time)
    if not components:
        raise ValueError("every generator loss term is disabled")
    total = None
    for name, c in components.items():
        term = _as64(c) * weights[name]
        total = term if total is None else total + term
    return total, components


def component_weights(settings: LossSettings) -> dict[str, float]:
    """Weight applied to each generator component name."""
    w = settings.weights
    return {
        "g_adv_time": w.adv_time,
        "g_fm": settings.feature_matching_weight,
        "g_adv_freq": w.adv_freq,
        "g_stft": w.stft,
        "g_time": w.time,
    }


def discriminator_total_loss(x, x_hat, time_disc, freq_disc, use_freq_disc: bool = True):
    """Hinge loss over the time scales plus the frequency logit; ``x_hat`` is detached here."""
    x, x_hat = as_tensor(x).detach(), as_tensor(x_hat).detach()
    components = {"d_time": hinge_d_loss(time_disc(x), time_disc(x_hat))}
    if use_freq_disc and freq_disc is not None:
        components["d_freq"] = hinge_d_loss([freq_disc(x)], [freq_disc(x_hat)])
    total = None
    for c in components.values():
        term = _as64(c)
        total = term if total is None else total + term
    return total, components
