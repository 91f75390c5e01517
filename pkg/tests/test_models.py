import math

import numpy as np
import pytest

from tfgan import tensor as T
from tfgan.discriminators import (
    FreqDiscConfig,
    FreqDiscriminator,
    TimeDiscConfig,
    TimeDiscriminator,
    scale_lengths,
    time_logit_lengths,
)
from tfgan.dsp import StftConfig
from tfgan.generator import (
    Generator,
    GeneratorConfig,
    init_generator,
    resstack,
    resstack_receptive_field,
    sine_gate,
    upsample_block,
)
from tfgan.gradcheck import grad_check
from tfgan.params import Initializer, ModelParams
from tfgan.tensor import Tensor

DESK = 1 / 8


def tiny_generator(dtype=np.float64, **kw):
    cfg = GeneratorConfig(channel_scale=1 / 64, **kw)
    return Generator(cfg, seed=3, dtype=dtype)


# -- sine gate / blocks ------------------------------------------------------

def test_sine_gate_values():
    np.testing.assert_allclose(sine_gate(Tensor([0.0, math.pi])).data, [0.0, math.pi], atol=1e-15)


def test_sine_gate_gradient_at_zero():
    x = Tensor([0.0], requires_grad=True)
    T.sum(sine_gate(x)).backward()
    assert x.grad[0] == 2.0
    assert grad_check(lambda t: T.sum(sine_gate(t)), np.zeros(1)).passed


def _block_params(cin, cout, factor, seed=0, dtype=np.float64):
    init = Initializer(seed, dtype)
    p = ModelParams()
    init.conv_transpose1d(p, "up.tconv", cin, cout, 2 * factor, factor)
    init.conv1d(p, "up.repeat", cin, cout, 1)
    return p


@pytest.mark.parametrize("factor", [8, 6, 5])
def test_upsample_block_length(factor, rng):
    p = _block_params(3, 2, factor)
    out = upsample_block(Tensor(rng.normal(size=(1, 3, 10))), p, "up", factor)
    assert out.shape == (1, 2, 10 * factor)


def test_upsample_block_zero_in_zero_out():
    p = _block_params(3, 2, 6)
    assert not np.any(upsample_block(Tensor(np.zeros((2, 3, 4))), p, "up", 6).data)


def test_repeat_branch_with_identity_kernel(rng):
    p = _block_params(2, 2, 5)
    p["up.tconv.w"].data[:] = 0.0
    p["up.repeat.w"].data[:] = np.eye(2)[:, :, None]
    x = rng.normal(size=(1, 2, 6))
    out = upsample_block(Tensor(x), p, "up", 5).data
    h = x + np.sin(x)
    np.testing.assert_array_equal(out, np.repeat(h, 5, axis=-1))


def test_plain_upsample_when_residual_disabled(rng):
    p = _block_params(2, 3, 8)
    out = upsample_block(Tensor(rng.normal(size=(1, 2, 5))), p, "up", 8, residual=False)
    assert out.shape == (1, 3, 40)


def _resstack_params(c, seed=0):
    init = Initializer(seed, np.float64)
    p = ModelParams()
    for j in range(4):
        init.conv1d(p, f"rs.{j}.dil", c, c, 3)
        init.conv1d(p, f"rs.{j}.proj", c, c, 1)
    return p


def test_resstack_identity_with_zero_projection(rng):
    p = _resstack_params(3)
    for j in range(4):
        p[f"rs.{j}.proj.w"].data[:] = 0.0
    x = rng.normal(size=(1, 3, 40))
    np.testing.assert_array_equal(resstack(Tensor(x), p, "rs").data, x)


@pytest.mark.parametrize("length", [30, 100, 5])
def test_resstack_preserves_length(length, rng):
    p = _resstack_params(2)
    assert resstack(Tensor(rng.normal(size=(1, 2, length))), p, "rs").shape == (1, 2, length)


def test_resstack_receptive_field_by_impulse():
    assert resstack_receptive_field() == 81
    # linear probe: with linear activations the stack's footprint is the receptive field
    p = _resstack_params(1, seed=5)
    for t in p.values():
        t.data = np.abs(t.data) + 0.1
    n = 301
    base = np.zeros((1, 1, n))
    bumped = base.copy()
    bumped[0, 0, 150] = 1e-3
    diff = resstack(Tensor(bumped), p, "rs").data - resstack(Tensor(base), p, "rs").data
    support = np.flatnonzero(np.abs(diff[0, 0]) > 0)
    assert support.max() - support.min() + 1 == 81


# -- generator ---------------------------------------------------------------

def test_generator_config_defaults():
    cfg = GeneratorConfig()
    assert cfg.up_factors == (8, 6, 5) and cfg.hop_length == 240
    assert cfg.pre_conv_channels == 512 and cfg.stage_channels == (256, 128, 64)
    assert cfg.resstack_dilations == (1, 3, 9, 27)


@pytest.mark.parametrize("frames", [1, 7, 10, 20])
def test_generator_length(frames, rng):
    g = tiny_generator()
    out = g(rng.normal(size=(frames, 80)))
    assert out.shape == (1, 1, 240 * frames)
    assert np.all(np.abs(out.data) < 1)


def test_generator_stage_lengths(rng):
    cfg = GeneratorConfig(channel_scale=1 / 64)
    p = init_generator(cfg, 0, np.float64)
    x = Tensor(rng.normal(size=(1, 8, 3)))
    expected = 3
    for i, f in enumerate(cfg.up_factors):
        x = T.Tensor(rng.normal(size=(1, p[f"up{i}.tconv.w"].shape[0], expected)))
        out = upsample_block(x, p, f"up{i}", f)
        expected *= f
        assert out.shape[-1] == expected


def test_generator_channel_mismatch_names_layer(rng):
    g = tiny_generator()
    with pytest.raises(ValueError, match="'pre'"):
        g(rng.normal(size=(5, 64)))


def test_generator_rejects_nonfinite():
    g = tiny_generator()
    mel = np.zeros((3, 80))
    mel[1, 2] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        g(mel)


def test_generator_deterministic(rng):
    mel = rng.normal(size=(2, 4, 80))
    a = Generator(GeneratorConfig(channel_scale=DESK), seed=7)(mel).data
    b = Generator(GeneratorConfig(channel_scale=DESK), seed=7)(mel).data
    assert np.array_equal(a, b)


def test_channel_scale_changes_params_not_length(rng):
    mel = rng.normal(size=(3, 80))
    small = Generator(GeneratorConfig(channel_scale=1 / 16))
    big = Generator(GeneratorConfig(channel_scale=1 / 8))
    assert small.params.count() < big.params.count()
    assert small(mel).shape == big(mel).shape == (1, 1, 720)


def test_every_generator_param_gets_gradient(rng):
    g = tiny_generator()
    out = g(rng.normal(size=(1, 3, 80)))
    T.mean(T.square(out - Tensor(0.3 * rng.normal(size=out.shape)))).backward()
    for name, p in g.params.items():
        assert p.grad is not None and np.any(p.grad != 0), name


def test_generator_grad_check_on_1x1_weight(rng):
    g = tiny_generator()
    mel = rng.normal(size=(1, 2, 80))
    target = "res1.0.proj.w"
    w0 = g.params[target].data.copy()

    def f(w):
        g.params.replace(target, w)
        return T.mean(g(mel))

    rep = grad_check(f, w0, tol=1e-4)
    assert rep.passed, rep.summary()


# -- time discriminator ------------------------------------------------------

def test_time_disc_scales(rng):
    d = TimeDiscriminator(TimeDiscConfig(channel_scale=DESK), dtype=np.float32)
    x = Tensor(rng.uniform(-0.5, 0.5, size=(1, 1, 24000)).astype(np.float32))
    outs = d(x)
    assert len(outs) == 3
    lengths = [logit.shape[-1] for logit, _ in outs]
    assert lengths[0] > lengths[1] > lengths[2]
    assert lengths == time_logit_lengths(24000)
    assert all(logit.shape[1] == 1 for logit, _ in outs)
    assert all(len(feats) == 5 for _, feats in outs)


def test_time_disc_block_downsamples_by_64():
    cfg = TimeDiscConfig()
    assert cfg.stride ** cfg.n_strided == 64
    assert time_logit_lengths(64 * 100)[0] == 100


def test_scale_lengths_closed_form():
    for n in [256, 1000, 4800, 24000]:
        expected = [n, (n - 4) // 2 + 1, ((n - 4) // 2 + 1 - 4) // 2 + 1]
        assert scale_lengths(n) == expected


def test_time_disc_zero_input_finite():
    d = TimeDiscriminator(TimeDiscConfig(channel_scale=DESK), dtype=np.float64)
    for logit, _ in d(Tensor(np.zeros((1, 1, 512)))):
        assert np.all(np.isfinite(logit.data))


def test_time_disc_too_short():
    d = TimeDiscriminator(TimeDiscConfig(channel_scale=DESK))
    with pytest.raises(ValueError, match="256"):
        d(Tensor(np.zeros((1, 1, 255))))


def test_time_disc_batch_permutation(rng):
    d = TimeDiscriminator(TimeDiscConfig(channel_scale=DESK), dtype=np.float64)
    x = rng.normal(size=(3, 1, 600))
    a = d(Tensor(x))
    b = d(Tensor(x[[2, 0, 1]]))
    for (la, _), (lb, _) in zip(a, b):
        np.testing.assert_allclose(lb.data, la.data[[2, 0, 1]], rtol=1e-12, atol=1e-14)


def test_time_disc_grouped_layers():
    d = TimeDiscriminator(TimeDiscConfig(channel_scale=DESK))
    w = d.params["s0.down1.w"]
    assert w.shape[0] // 4 * 4 == w.shape[0] and w.shape[1] * 4 == d.params["s0.down0.w"].shape[0]


# -- frequency discriminator -------------------------------------------------

def test_freq_disc_default_stft():
    assert FreqDiscConfig().stft == StftConfig(512, 240, 512)


@pytest.mark.parametrize("length", [512, 1000, 4800])
def test_freq_disc_shape(length, rng):
    d = FreqDiscriminator(FreqDiscConfig(channel_scale=DESK), dtype=np.float64)
    assert d(Tensor(rng.normal(size=(2, 1, length)))).shape == (2, 1)


def test_freq_disc_zero_waveform_gives_bias_path(rng):
    d = FreqDiscriminator(FreqDiscConfig(channel_scale=DESK), dtype=np.float64)
    zeros = d(Tensor(np.zeros((1, 1, 1200)))).data
    # with all biases zero a zero spectrum can only produce a zero logit
    assert zeros[0, 0] == 0.0
    for name, p in d.params.items():
        if name.endswith(".b"):
            p.data = rng.normal(size=p.shape)
    a = d(Tensor(np.zeros((1, 1, 1200)))).data
    assert a[0, 0] != 0.0
    assert np.isfinite(a).all()


def test_freq_disc_too_short():
    d = FreqDiscriminator(FreqDiscConfig(channel_scale=DESK))
    with pytest.raises(ValueError, match="512"):
        d(Tensor(np.zeros((1, 1, 500))))


def test_freq_disc_input_gradient_nonzero(rng):
    d = FreqDiscriminator(FreqDiscConfig(channel_scale=DESK), dtype=np.float64)
    x = Tensor(rng.normal(size=(1, 1, 1000)), requires_grad=True)
    T.mean(d(x)).backward()
    assert np.any(x.grad != 0)


def test_freq_disc_grad_check_wrt_waveform(rng):
    cfg = FreqDiscConfig(stft=StftConfig(64, 32, 64), stage_channels=(4, 4, 4, 4))
    d = FreqDiscriminator(cfg, dtype=np.float64)
    rep = grad_check(lambda t: T.mean(d(t)), 0.5 * rng.normal(size=(1, 1, 160)), max_coords=60)
    assert rep.passed, rep.summary()


def test_freq_disc_batch_permutation(rng):
    d = FreqDiscriminator(FreqDiscConfig(channel_scale=DESK), dtype=np.float64)
    x = rng.normal(size=(3, 1, 700))
    a = d(Tensor(x)).data
    b = d(Tensor(x[[1, 2, 0]])).data
    np.testing.assert_allclose(b, a[[1, 2, 0]], rtol=1e-12, atol=1e-14)
