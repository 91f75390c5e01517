"""Registry of finite-difference gradient checks, grouped by scope."""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import tensor as T
from .conv import conv1d, conv2d, conv_transpose1d
from .discriminators import FreqDiscConfig, FreqDiscriminator, TimeDiscConfig, TimeDiscriminator
from .dsp import StftConfig, frame_signal, magnitude, rdft, stft
from .generator import Generator, GeneratorConfig, sine_gate
from .gradcheck import GradCheckReport, grad_check
from .losses import (
    LossSettings,
    StftLossConfig,
    TimeLossConfig,
    feature_matching,
    generator_total_loss,
    hinge_d_loss,
    hinge_g_loss,
    log_magnitude_loss,
    multi_res_stft_loss,
    spectral_convergence,
    time_domain_losses,
    total_time_loss,
)
from .tensor import Tensor

SCOPES = ("ops", "losses", "models")

def _rng(i: int) -> np.random.Generator:
    return np.random.default_rng(1000 + i)


def _weighted(fn, shape_seed: int):
    """Wrap an op so the scalar objective has a generic (non-symmetric) upstream gradient."""

    def f(t):
        out = fn(t)
        w = _rng(shape_seed).normal(size=out.shape)
        return T.sum(out * Tensor(w))

    return f


def _op_checks() -> dict[str, tuple[Callable, np.ndarray]]:
    r = _rng(0)
    x = r.normal(size=(3, 4))
    b = r.normal(size=(3, 4))
    pos = r.uniform(0.5, 2.0, size=(3, 4))
    sig = r.normal(size=(2, 3, 16))
    w1 = r.normal(size=(4, 3, 3))
    wg = r.normal(size=(4, 1, 5))
    wt = r.normal(size=(3, 2, 4))
    bias = r.normal(size=4)
    img = r.normal(size=(1, 2, 7, 6))
    w2 = r.normal(size=(3, 2, 3, 3))
    wave = r.normal(size=(2, 80))
    small = StftConfig(32, 8, 24)
    centred = StftConfig(16, 4, 16, center=True)
    return {
        "add": (_weighted(lambda t: t + Tensor(b), 1), x),
        "sub": (_weighted(lambda t: Tensor(b) - t, 2), x),
        "mul": (_weighted(lambda t: t * Tensor(b), 3), x),
        "mul_self": (_weighted(lambda t: t * t, 4), x),
        "div_numerator": (_weighted(lambda t: t / Tensor(pos), 5), x),
        "div_denominator": (_weighted(lambda t: Tensor(b) / t, 6), pos),
        "broadcast_scalar": (lambda t: T.sum(T.tanh(t * Tensor(1.7) + Tensor(b[0]))), x),
        "neg": (_weighted(T.neg, 7), x),
        "abs": (_weighted(T.abs, 8), x),
        "tanh": (_weighted(T.tanh, 9), x),
        "sin": (_weighted(T.sin, 10), x),
        "relu": (_weighted(T.relu, 11), x),
        "leaky_relu": (_weighted(T.leaky_relu, 12), x),
        "log": (_weighted(T.log, 13), pos),
        "square": (_weighted(T.square, 14), x),
        "sqrt": (_weighted(T.sqrt, 15), pos),
        "clamp_min": (_weighted(lambda t: T.clamp_min(t, 0.1), 16), x),
        "astype": (_weighted(lambda t: T.astype(t, np.float64), 17), x),
        "sum_axis": (_weighted(lambda t: T.sum(t, axes=1), 18), x),
        "mean_axis": (_weighted(lambda t: T.mean(t, axes=0), 19), x),
        "l1_norm": (lambda t: T.l1_norm(t), x),
        "frobenius_norm": (_weighted(lambda t: T.frobenius_norm(t, axes=1), 20), x),
        "reshape": (_weighted(lambda t: T.reshape(t, (2, 6)), 21), x),
        "transpose": (_weighted(lambda t: T.transpose(t, (1, 0)), 22), x),
        "slice": (_weighted(lambda t: t[1:, ::2], 23), x),
        "concat": (_weighted(lambda t: T.concat([t, T.sin(t)], axis=1), 24), x),
        "stack": (_weighted(lambda t: T.stack([t, T.square(t)], axis=0), 25), x),
        "pad_zero": (_weighted(lambda t: T.pad1d(t, 2, 1, "zero"), 26), x),
        "pad_reflect": (_weighted(lambda t: T.pad1d(t, 2, 3, "reflect"), 27), x),
        "repeat_interleave": (_weighted(lambda t: T.repeat_interleave(t, 3), 28), x),
        "avg_pool1d": (_weighted(lambda t: T.avg_pool1d(t, 4, 2), 29), sig),
        "unfold1d": (_weighted(lambda t: T.unfold1d(t, 5, 3), 30), sig),
        "conv1d_input": (_weighted(lambda t: conv1d(t, Tensor(w1), Tensor(bias), stride=2, dilation=2, padding=2), 31), sig),
        "conv1d_weight": (_weighted(lambda t: conv1d(Tensor(sig), t, Tensor(bias), stride=2, dilation=2, padding=2), 32), w1),
        "conv1d_bias": (_weighted(lambda t: conv1d(Tensor(sig), Tensor(w1), t, dilation=3), 33), bias),
        "conv1d_grouped": (_weighted(lambda t: conv1d(Tensor(sig[:, :1].repeat(4, 1)), t, stride=3, padding=2, groups=4), 34), wg),
        "conv_transpose1d_input": (_weighted(lambda t: conv_transpose1d(t, Tensor(wt), stride=2), 35), sig),
        "conv_transpose1d_weight": (_weighted(lambda t: conv_transpose1d(Tensor(sig), t, stride=2), 36), wt),
        "conv2d_input": (_weighted(lambda t: conv2d(t, Tensor(w2), stride=2, padding=1), 37), img),
        "conv2d_weight": (_weighted(lambda t: conv2d(Tensor(img), t, stride=1, padding=1), 38), w2),
        "frame_signal": (_weighted(lambda t: frame_signal(t, 12, 5), 39), wave),
        "rdft": (_weighted(lambda t: rdft(frame_signal(t, 16, 16), 32), 40), wave),
        "stft": (_weighted(lambda t: stft(t, small).stacked, 41), wave),
        "stft_centred": (_weighted(lambda t: stft(t, centred).stacked, 42), wave),
        "magnitude": (_weighted(lambda t: magnitude(stft(t, small)), 43), wave),
        "sine_gate": (_weighted(sine_gate, 44), x),
    }


SMALL_STFT = StftLossConfig(resolutions=((64, 16, 64), (32, 8, 24)))
SMALL_TIME = TimeLossConfig(scales=((1, 1), (12, 6), (24, 12), (48, 24)))


def _loss_checks() -> dict[str, tuple[Callable, np.ndarray]]:
    r = _rng(1)
    ref = r.normal(size=(2, 160))
    x = r.normal(size=(2, 160))
    cfg = StftConfig(64, 16, 64)
    logits = r.normal(scale=2.0, size=(1, 1, 9))
    other = [Tensor(r.normal(scale=2.0, size=(1, 1, n))) for n in (5, 3)]
    feats = r.normal(size=(1, 2, 6))
    fixed_feats = [Tensor(r.normal(size=(1, 2, 6))), Tensor(r.normal(size=(1, 3, 2)))]
    extra = Tensor(r.normal(size=(1, 3, 2)))

    def single(i):
        return lambda t: time_domain_losses(Tensor(ref), t, (24, 12))[i]

    return {
        "spectral_convergence": (lambda t: spectral_convergence(Tensor(ref), t, cfg), x),
        "log_magnitude": (lambda t: log_magnitude_loss(Tensor(ref), t, cfg), x),
        "multi_res_stft": (lambda t: multi_res_stft_loss(Tensor(ref), t, SMALL_STFT), x),
        "energy_loss": (single(0), x),
        "time_loss": (single(1), x),
        "phase_loss": (single(2), x),
        "total_time_loss": (lambda t: total_time_loss(Tensor(ref), t, SMALL_TIME), x),
        "hinge_d_real": (lambda t: hinge_d_loss([t] + other, [Tensor(-logits)] + other), logits),
        "hinge_d_fake": (lambda t: hinge_d_loss([Tensor(logits)] + other, [t] + other), logits),
        "hinge_g": (lambda t: hinge_g_loss([T.tanh(t)] + other), logits),
        "feature_matching": (lambda t: feature_matching([fixed_feats], [[t, extra]]), feats),
    }


def _model_checks() -> dict[str, tuple[Callable, np.ndarray]]:
    r = _rng(2)
    gen = Generator(GeneratorConfig(channel_scale=1 / 8), seed=3, dtype=np.float64)
    td = TimeDiscriminator(TimeDiscConfig(channel_scale=1 / 8), seed=4, dtype=np.float64)
    fd = FreqDiscriminator(FreqDiscConfig(channel_scale=1 / 8), seed=5, dtype=np.float64)
    mel = r.normal(size=(1, 6, 80))
    wave = 0.3 * r.normal(size=(1, 1, 1440))

    def via_param(name):
        original = gen.params[name]

        def f(t):
            gen.params.replace(name, t)
            try:
                return generator_total_loss(Tensor(wave), gen(mel), td, fd, LossSettings())[0]
            finally:
                gen.params.replace(name, original)

        return f, original.data.copy()

    # a handful of layers across the stack keeps the suite fast
    checks = {f"generator_total/{n}": via_param(n) for n in ("pre.w", "up0.tconv.w", "up2.repeat.w", "res1.2.dil.w", "post.b")}
    checks["time_disc/input"] = (lambda t: T.sum(T.stack([T.mean(l) for l, _ in td(t)])), wave[..., :512])
    checks["freq_disc/input"] = (lambda t: T.mean(fd(t)), wave[..., :720])
    return checks


_BUILDERS = {"ops": _op_checks, "losses": _loss_checks, "models": _model_checks}


def run_scope(scope: str, tol: float = 1e-4, eps: float = 1e-5, max_coords: int = 40) -> list[GradCheckReport]:
    if scope not in _BUILDERS:
        raise ValueError(f"unknown scope {scope!r}; choose from {SCOPES}")
    reports = []
    for name, (fn, x0) in _BUILDERS[scope]().items():
        reports.append(grad_check(fn, x0, eps=eps, tol=tol, name=name, max_coords=max_coords))
    return reports
