"""Multi-scale time-domain discriminator and STFT-domain frequency discriminator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .conv import conv1d, conv1d_output_length, conv2d
from .dsp import StftConfig, stft
from .generator import same_pad
from .params import Initializer, ModelParams, scaled_channels
from .tensor import Tensor

MIN_TIME_DISC_SAMPLES = 256


@dataclass
class TimeDiscConfig:
    n_scales: int = 3
    pool_kernel: int = 4
    pool_stride: int = 2
    entry_kernel: int = 15
    strided_kernel: int = 41
    stride: int = 4
    n_strided: int = 3
    groups: int = 4
    post_kernel: int = 5
    logit_kernel: int = 3
    base_channels: int = 16
    max_channels: int = 512
    channel_scale: float = 1.0

    def channels(self) -> list[int]:
        """Entry width followed by the width after each strided layer."""
        g = self.groups
        cap = scaled_channels(self.max_channels, self.channel_scale, g)
        chans = [scaled_channels(self.base_channels, self.channel_scale, g)]
        for _ in range(self.n_strided):
            chans.append(min(chans[-1] * self.stride, cap))
        return chans


def scale_lengths(length: int, cfg: TimeDiscConfig = TimeDiscConfig()) -> list[int]:
    """Input length seen by each scale: avg-pool output length formula applied repeatedly."""
    out = [length]
    for _ in range(cfg.n_scales - 1):
        out.append((out[-1] - cfg.pool_kernel) // cfg.pool_stride + 1)
    return out


def init_time_disc(cfg: TimeDiscConfig, seed: int = 1, dtype=np.float32) -> ModelParams:
    init = Initializer(seed, dtype)
    params = ModelParams()
    chans = cfg.channels()
    for k in range(cfg.n_scales):
        init.conv1d(params, f"s{k}.entry", 1, chans[0], cfg.entry_kernel)
        for i in range(cfg.n_strided):
            init.conv1d(params, f"s{k}.down{i}", chans[i], chans[i + 1], cfg.strided_kernel, cfg.groups)
        init.conv1d(params, f"s{k}.post", chans[-1], chans[-1], cfg.post_kernel)
        init.conv1d(params, f"s{k}.logit", chans[-1], 1, cfg.logit_kernel)
    return params


def _time_block(x: Tensor, params: ModelParams, name: str, cfg: TimeDiscConfig):
    feats = []
    half = cfg.entry_kernel // 2
    h = conv1d(same_pad(x, half, half), params[f"{name}.entry.w"], params[f"{name}.entry.b"])
    h = T.leaky_relu(h)
    feats.append(h)
    for i in range(cfg.n_strided):
        h = conv1d(
            h,
            params[f"{name}.down{i}.w"],
            params[f"{name}.down{i}.b"],
            stride=cfg.stride,
            padding=cfg.strided_kernel // 2,
            groups=cfg.groups,
        )
        h = T.leaky_relu(h)
        feats.append(h)
    h = T.leaky_relu(conv1d(h, params[f"{name}.post.w"], params[f"{name}.post.b"], padding=cfg.post_kernel // 2))
    feats.append(h)
    logit = conv1d(h, params[f"{name}.logit.w"], params[f"{name}.logit.b"], padding=cfg.logit_kernel // 2)
    return logit, feats


def time_disc_forward(x: Tensor, params: ModelParams, cfg: TimeDiscConfig = TimeDiscConfig()):
    """x: (B, 1, T) -> [(logit_map (B,1,T_k), [feature maps])] for each scale."""
    if x.ndim != 3 or x.shape[1] != 1:
        raise ValueError(f"time discriminator expects (B, 1, T), got {x.shape}")
    if x.shape[-1] < MIN_TIME_DISC_SAMPLES:
        raise ValueError(
            f"time discriminator needs at least {MIN_TIME_DISC_SAMPLES} samples, got {x.shape[-1]}"
        )
    dtype = params["s0.entry.w"].dtype
    if x.dtype != dtype:
        x = T.astype(x, dtype)
    outs = []
    for k in range(cfg.n_scales):
        if k:
            x = T.avg_pool1d(x, cfg.pool_kernel, cfg.pool_stride)
        outs.append(_time_block(x, params, f"s{k}", cfg))
    return outs


def time_logit_lengths(length: int, cfg: TimeDiscConfig = TimeDiscConfig()) -> list[int]:
    out = []
    for n in scale_lengths(length, cfg):
        for _ in range(cfg.n_strided):
            n = conv1d_output_length(n, cfg.strided_kernel, cfg.stride, 1, cfg.strided_kernel // 2)
        out.append(n)
    return out


@dataclass
class FreqDiscConfig:
    stft: StftConfig = field(default_factory=lambda: StftConfig(512, 240, 512))
    stem_kernel: int = 7
    stage_channels: tuple[int, ...] = (64, 128, 256, 512)
    blocks_per_stage: int = 2
    channel_scale: float = 1.0

    def channels(self) -> list[int]:
        return [scaled_channels(c, self.channel_scale) for c in self.stage_channels]


def init_freq_disc(cfg: FreqDiscConfig, seed: int = 2, dtype=np.float32) -> ModelParams:
    init = Initializer(seed, dtype)
    params = ModelParams()
    chans = cfg.channels()
    init.conv2d(params, "stem", 2, chans[0], cfg.stem_kernel)
    # first stage: two plain convolutions, no shortcut
    init.conv2d(params, "d1.conv0", chans[0], chans[0], 3)
    init.conv2d(params, "d1.conv1", chans[0], chans[0], 3)
    cin = chans[0]
    for s in range(1, len(chans)):
        cout = chans[s]
        for b in range(cfg.blocks_per_stage):
            name = f"d{s + 1}.block{b}"
            init.conv2d(params, f"{name}.conv0", cin, cout, 3)
            init.conv2d(params, f"{name}.conv1", cout, cout, 3)
            if b == 0:
                init.conv2d(params, f"{name}.short", cin, cout, 1)
            cin = cout
    params["head.w"] = init.uniform((1, cin, 1), cin)
    params["head.b"] = init.zeros((1,))
    return params


def _res_block(x: Tensor, params: ModelParams, name: str, stride: int) -> Tensor:
    h = T.leaky_relu(conv2d(x, params[f"{name}.conv0.w"], params[f"{name}.conv0.b"], stride=stride, padding=1))
    h = conv2d(h, params[f"{name}.conv1.w"], params[f"{name}.conv1.b"], padding=1)
    if f"{name}.short.w" in params:
        x = conv2d(x, params[f"{name}.short.w"], params[f"{name}.short.b"], stride=stride)
    return T.leaky_relu(h + x)


def freq_disc_features(x_wave: Tensor, params: ModelParams, cfg: FreqDiscConfig = FreqDiscConfig()):
    """Returns (logit (B, 1), [stage outputs])."""
    if x_wave.ndim == 3:
        if x_wave.shape[1] != 1:
            raise ValueError(f"frequency discriminator expects (B, 1, T), got {x_wave.shape}")
        x_wave = x_wave.reshape(x_wave.shape[0], x_wave.shape[2])
    if x_wave.shape[-1] < cfg.stft.win_length:
        raise ValueError(
            f"frequency discriminator needs at least {cfg.stft.win_length} samples, got {x_wave.shape[-1]}"
        )
    dtype = params["stem.w"].dtype
    if x_wave.dtype != dtype:
        x_wave = T.astype(x_wave, dtype)
    spec = stft(x_wave, cfg.stft).stacked  # (B, 2, frames, bins)
    feats = []
    pad = cfg.stem_kernel // 2
    h = T.leaky_relu(conv2d(spec, params["stem.w"], params["stem.b"], stride=2, padding=pad))
    h = T.leaky_relu(conv2d(h, params["d1.conv0.w"], params["d1.conv0.b"], padding=1))
    h = T.leaky_relu(conv2d(h, params["d1.conv1.w"], params["d1.conv1.b"], padding=1))
    feats.append(h)
    for s in range(1, len(cfg.stage_channels)):
        for b in range(cfg.blocks_per_stage):
            h = _res_block(h, params, f"d{s + 1}.block{b}", 2 if b == 0 else 1)
        feats.append(h)
    pooled = T.mean(h, axes=(2, 3))  # (B, C)
    pooled = pooled.reshape(pooled.shape[0], pooled.shape[1], 1)
    logit = conv1d(pooled, params["head.w"], params["head.b"])
    return logit.reshape(logit.shape[0], 1), feats


def freq_disc_forward(x_wave: Tensor, params: ModelParams, cfg: FreqDiscConfig = FreqDiscConfig()) -> Tensor:
    return freq_disc_features(x_wave, params, cfg)[0]


@dataclass
class TimeDiscriminator:
    cfg: TimeDiscConfig = field(default_factory=TimeDiscConfig)
    params: ModelParams | None = None
    seed: int = 1
    dtype: object = np.float32

    def __post_init__(self):
        if self.params is None:
            self.params = init_time_disc(self.cfg, self.seed, self.dtype)

    def __call__(self, x: Tensor):
        return time_disc_forward(x, self.params, self.cfg)


@dataclass
class FreqDiscriminator:
    cfg: FreqDiscConfig = field(default_factory=FreqDiscConfig)
    params: ModelParams | None = None
    seed: int = 2
    dtype: object = np.float32

    def __post_init__(self):
        if self.params is None:
            self.params = init_freq_disc(self.cfg, self.seed, self.dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return freq_disc_forward(x, self.params, self.cfg)
