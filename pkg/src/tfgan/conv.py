"""Differentiable 1-D/2-D convolutions (cross-correlation, no kernel flip)."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, make_result

__all__ = ["conv1d", "conv_transpose1d", "conv2d", "conv1d_output_length"]


def conv1d_output_length(length: int, kernel: int, stride: int = 1, dilation: int = 1, padding: int = 0) -> int:
    return (length + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def conv1d(
    x: Tensor,
    w: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    dilation: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """x: (B, Cin, T), w: (Cout, Cin/groups, K) -> (B, Cout, T')."""
    if x.ndim != 3 or w.ndim != 3:
        raise ValueError(f"conv1d expects x (B,C,T) and w (Cout,Cin,K), got {x.shape} and {w.shape}")
    B, cin, T = x.shape
    cout, cin_g, K = w.shape
    if K < 1 or stride < 1 or dilation < 1 or padding < 0:
        raise ValueError("conv1d: kernel, stride and dilation must be >= 1 and padding >= 0")
    if cin != cin_g * groups or cout % groups:
        raise ValueError(
            f"conv1d: {cin} input channels do not match weight {w.shape} with groups={groups}"
        )
    span = dilation * (K - 1) + 1
    t_out = conv1d_output_length(T, K, stride, dilation, padding)
    if t_out < 1:
        raise ValueError(f"conv1d: input length {T} (+{2 * padding} padding) is shorter than the kernel span {span}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    cols = sliding_window_view(xp, span, axis=2)[:, :, ::stride, ::dilation][:, :, :t_out]
    cout_g = cout // groups

    def group_slices():
        for gi in range(groups):
            yield slice(gi * cin_g, (gi + 1) * cin_g), slice(gi * cout_g, (gi + 1) * cout_g)

    out = np.empty((B, cout, t_out), dtype=np.result_type(x.data, w.data))
    for cs, os_ in group_slices():
        # (B, Tout, Cout_g)
        out[:, os_, :] = np.tensordot(cols[:, cs], w.data[os_], axes=([1, 3], [1, 2])).transpose(0, 2, 1)
    if bias is not None:
        out += bias.data[None, :, None]

    def bw(g):
        gx = gw = gb = None
        if w.requires_grad:
            gw = np.empty_like(w.data)
            for cs, os_ in group_slices():
                gw[os_] = np.tensordot(g[:, os_], cols[:, cs], axes=([0, 2], [0, 2]))
        if x.requires_grad:
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for cs, os_ in group_slices():
                # (B, Tout, Cin_g, K)
                gcols = np.tensordot(g[:, os_], w.data[os_], axes=([1], [0]))
                for k in range(K):
                    start = k * dilation
                    gxp[:, cs, start:start + stride * (t_out - 1) + 1:stride] += gcols[:, :, :, k].transpose(0, 2, 1)
            gx = gxp[:, :, padding:padding + T]
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2))
        return gx, gw, gb

    parents = (x, w) if bias is None else (x, w, bias)
    return make_result(out, parents, bw)


def conv_transpose1d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """x: (B, Cin, T), w: (Cin, Cout, K) -> (B, Cout, (T-1)*stride + K).

    This is the adjoint of :func:`conv1d` with the same weight and stride.
    """
    if x.ndim != 3 or w.ndim != 3:
        raise ValueError(f"conv_transpose1d expects x (B,C,T) and w (Cin,Cout,K), got {x.shape} and {w.shape}")
    B, cin, T = x.shape
    cin_w, cout, K = w.shape
    if cin != cin_w:
        raise ValueError(f"conv_transpose1d: {cin} input channels but weight has {cin_w}")
    if not K >= stride >= 1:
        raise ValueError(f"conv_transpose1d requires kernel >= stride >= 1, got K={K}, stride={stride}")
    t_out = (T - 1) * stride + K

    # (B, T, Cout, K)
    contrib = np.tensordot(x.data, w.data, axes=([1], [0]))
    out = np.zeros((B, cout, t_out), dtype=contrib.dtype)
    for k in range(K):
        out[:, :, k:k + stride * (T - 1) + 1:stride] += contrib[:, :, :, k].transpose(0, 2, 1)
    if bias is not None:
        out += bias.data[None, :, None]

    def bw(g):
        gx = gw = gb = None
        view = sliding_window_view(g, K, axis=2)[:, :, ::stride, :]  # (B, Cout, T, K)
        if x.requires_grad:
            gx = np.tensordot(view, w.data, axes=([1, 3], [1, 2])).transpose(0, 2, 1)
        if w.requires_grad:
            gw = np.tensordot(x.data, view, axes=([0, 2], [0, 2]))
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2))
        return gx, gw, gb

    parents = (x, w) if bias is None else (x, w, bias)
    return make_result(out, parents, bw)


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """x: (B, Cin, H, W), w: (Cout, Cin, kh, kw); zero padding on both spatial axes."""
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError(f"conv2d expects 4-D x and w, got {x.shape} and {w.shape}")
    B, cin, H, W = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ValueError(f"conv2d: {cin} input channels but weight expects {cin_w}")
    ho = (H + 2 * padding - kh) // stride + 1
    wo = (W + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d: input {H}x{W} too small for kernel {kh}x{kw} with padding {padding}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    out = np.tensordot(cols, w.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def bw(g):
        gx = gw = gb = None
        if w.requires_grad:
            gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))
        if x.requires_grad:
            gcols = np.tensordot(g, w.data, axes=([1], [0]))  # (B, Ho, Wo, Cin, kh, kw)
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += (
                        gcols[..., i, j].transpose(0, 3, 1, 2)
                    )
            gx = gxp[:, :, padding:padding + H, padding:padding + W]
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, w) if bias is None else (x, w, bias)
    return make_result(out, parents, bw)
