"""Mel-spectrogram -> waveform generator.

pre-conv -> [upsample block -> dilated residual stack] x 3 -> leaky ReLU ->
output conv -> tanh.  Each upsample block adds a transposed-convolution branch
and a repeat-then-1x1-conv branch, both fed by ``x + sin(x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np

from . import tensor as T
from .conv import conv1d, conv_transpose1d
from .dsp import MelSpectrogram
from .params import Initializer, ModelParams, scaled_channels
from .tensor import Tensor


@dataclass
class GeneratorConfig:
    n_mels: int = 80
    pre_conv_channels: int = 512
    stage_channels: tuple[int, ...] = (256, 128, 64)
    up_factors: tuple[int, ...] = (8, 6, 5)
    resstack_dilations: tuple[int, ...] = (1, 3, 9, 27)
    resstack_kernel: int = 3
    pre_kernel: int = 7
    out_kernel: int = 7
    channel_scale: float = 1.0
    residual_upsample: bool = True

    def __post_init__(self):
        self.stage_channels = tuple(self.stage_channels)
        self.up_factors = tuple(self.up_factors)
        self.resstack_dilations = tuple(self.resstack_dilations)
        if len(self.stage_channels) != len(self.up_factors):
            raise ValueError("stage_channels and up_factors must have the same length")
        if any(f < 1 for f in self.up_factors):
            raise ValueError("up factors must be positive")

    @property
    def hop_length(self) -> int:
        return prod(self.up_factors)

    def channels(self) -> tuple[int, list[int]]:
        pre = scaled_channels(self.pre_conv_channels, self.channel_scale)
        return pre, [scaled_channels(c, self.channel_scale) for c in self.stage_channels]


def same_pad(x: Tensor, left: int, right: int) -> Tensor:
    """Reflect padding, falling back to zeros when the signal is too short to mirror."""
    if left == 0 and right == 0:
        return x
    n = x.shape[-1]
    mode = "reflect" if max(left, right) < n else "zero"
    return T.pad1d(x, left, right, mode)


def sine_gate(x: Tensor) -> Tensor:
    return x + T.sin(x)


def upsample_block(x: Tensor, params: ModelParams, name: str, factor: int, residual: bool = True) -> Tensor:
    """(B, Cin, T) -> (B, Cout, T * factor)."""
    n = x.shape[-1]
    h = sine_gate(x) if residual else T.leaky_relu(x)
    a = conv_transpose1d(h, params[f"{name}.tconv.w"], params[f"{name}.tconv.b"], stride=factor)
    # (T-1)*f + 2f = T*f + f samples; drop the extra f, split as evenly as possible
    left = factor // 2
    a = a[..., left:left + n * factor]
    if not residual:
        return a
    b = conv1d(T.repeat_interleave(h, factor), params[f"{name}.repeat.w"], params[f"{name}.repeat.b"])
    return a + b


def resstack(x: Tensor, params: ModelParams, name: str, dilations=(1, 3, 9, 27), kernel: int = 3) -> Tensor:
    for j, d in enumerate(dilations):
        half = d * (kernel - 1) // 2
        h = same_pad(T.leaky_relu(x), half, d * (kernel - 1) - half)
        h = conv1d(h, params[f"{name}.{j}.dil.w"], params[f"{name}.{j}.dil.b"], dilation=d)
        h = conv1d(T.leaky_relu(h), params[f"{name}.{j}.proj.w"], params[f"{name}.{j}.proj.b"])
        x = x + h
    return x


def resstack_receptive_field(dilations=(1, 3, 9, 27), kernel: int = 3) -> int:
    return 1 + (kernel - 1) * sum(dilations)


def init_generator(cfg: GeneratorConfig, seed: int = 0, dtype=np.float32) -> ModelParams:
    init = Initializer(seed, dtype)
    params = ModelParams()
    pre, stages = cfg.channels()
    init.conv1d(params, "pre", cfg.n_mels, pre, cfg.pre_kernel)
    cin = pre
    for i, (cout, f) in enumerate(zip(stages, cfg.up_factors)):
        init.conv_transpose1d(params, f"up{i}.tconv", cin, cout, 2 * f, f)
        if cfg.residual_upsample:
            init.conv1d(params, f"up{i}.repeat", cin, cout, 1)
        for j, _ in enumerate(cfg.resstack_dilations):
            init.conv1d(params, f"res{i}.{j}.dil", cout, cout, cfg.resstack_kernel)
            init.conv1d(params, f"res{i}.{j}.proj", cout, cout, 1)
        cin = cout
    init.conv1d(params, "post", cin, 1, cfg.out_kernel)
    return params


def _as_batch(mel, n_mels: int, dtype) -> Tensor:
    if isinstance(mel, MelSpectrogram):
        mel = mel.values
    m = mel if isinstance(mel, Tensor) else Tensor(np.asarray(mel))
    if m.ndim == 2:
        m = m.reshape(1, *m.shape)
    if m.ndim != 3:
        raise ValueError(f"mel input must be (frames, n_mels) or (B, frames, n_mels), got {m.shape}")
    if m.shape[-1] != n_mels:
        raise ValueError(f"layer 'pre': expected {n_mels} mel channels, got {m.shape[-1]}")
    if m.shape[1] < 1:
        raise ValueError("mel input has no frames")
    if not np.all(np.isfinite(m.data)):
        raise ValueError("mel input contains non-finite values")
    if m.dtype != dtype:
        m = T.astype(m, dtype)
    return T.transpose(m, (0, 2, 1))


def _check(params: ModelParams, name: str, cin: int) -> None:
    w = params[f"{name}.w"]
    expected = w.shape[0] if name.endswith("tconv") else w.shape[1]
    if expected != cin:
        raise ValueError(f"layer {name!r}: weight {w.shape} expects {expected} input channels, got {cin}")


def generator_forward(mel, params: ModelParams, cfg: GeneratorConfig) -> Tensor:
    """(B, frames, n_mels) log-mel -> (B, 1, hop * frames) waveform in (-1, 1)."""
    dtype = params["pre.w"].dtype
    x = _as_batch(mel, cfg.n_mels, dtype)
    half = (cfg.pre_kernel - 1) // 2
    _check(params, "pre", x.shape[1])
    x = conv1d(same_pad(x, half, cfg.pre_kernel - 1 - half), params["pre.w"], params["pre.b"])
    for i, f in enumerate(cfg.up_factors):
        _check(params, f"up{i}.tconv", x.shape[1])
        x = upsample_block(x, params, f"up{i}", f, cfg.residual_upsample)
        x = resstack(x, params, f"res{i}", cfg.resstack_dilations, cfg.resstack_kernel)
    half = (cfg.out_kernel - 1) // 2
    x = same_pad(T.leaky_relu(x), half, cfg.out_kernel - 1 - half)
    _check(params, "post", x.shape[1])
    x = conv1d(x, params["post.w"], params["post.b"])
    return T.tanh(x)


@dataclass
class Generator:
    cfg: GeneratorConfig = field(default_factory=GeneratorConfig)
    params: ModelParams | None = None
    seed: int = 0
    dtype: object = np.float32

    def __post_init__(self):
        if self.params is None:
            self.params = init_generator(self.cfg, self.seed, self.dtype)

    def __call__(self, mel) -> Tensor:
        return generator_forward(mel, self.params, self.cfg)
