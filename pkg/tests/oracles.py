"""Slow, obviously-correct reference implementations used only by tests."""

import math

import numpy as np


def conv1d_direct(x, w, bias=None, stride=1, dilation=1, padding=0, groups=1):
    B, cin, T = x.shape
    cout, cin_g, K = w.shape
    xp = np.zeros((B, cin, T + 2 * padding))
    xp[:, :, padding:padding + T] = x
    t_out = (T + 2 * padding - dilation * (K - 1) - 1) // stride + 1
    cout_g = cout // groups
    y = np.zeros((B, cout, t_out))
    for b in range(B):
        for o in range(cout):
            g = o // cout_g
            for t in range(t_out):
                acc = 0.0
                for c in range(cin_g):
                    for k in range(K):
                        acc += w[o, c, k] * xp[b, g * cin_g + c, t * stride + k * dilation]
                y[b, o, t] = acc + (0.0 if bias is None else bias[o])
    return y


def conv_transpose1d_direct(x, w, stride=1):
    B, cin, T = x.shape
    _, cout, K = w.shape
    y = np.zeros((B, cout, (T - 1) * stride + K))
    for b in range(B):
        for c in range(cin):
            for t in range(T):
                for o in range(cout):
                    for k in range(K):
                        y[b, o, t * stride + k] += x[b, c, t] * w[c, o, k]
    return y


def conv2d_direct(x, w, stride=1, padding=0):
    B, cin, H, W = x.shape
    cout, _, kh, kw = w.shape
    xp = np.zeros((B, cin, H + 2 * padding, W + 2 * padding))
    xp[:, :, padding:padding + H, padding:padding + W] = x
    ho = (H + 2 * padding - kh) // stride + 1
    wo = (W + 2 * padding - kw) // stride + 1
    y = np.zeros((B, cout, ho, wo))
    for i in range(ho):
        for j in range(wo):
            patch = xp[:, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
            y[:, :, i, j] = np.einsum("bckl,ockl->bo", patch, w)
    return y


def dft_direct(frame, n_fft):
    """O(n^2) DFT of a zero-padded real frame; returns (real, imag) for bins 0..n_fft/2."""
    padded = np.zeros(n_fft)
    padded[:len(frame)] = frame
    n = np.arange(n_fft)
    bins = np.arange(n_fft // 2 + 1)
    ang = 2.0 * math.pi * np.outer(bins, n) / n_fft
    return np.cos(ang) @ padded, -np.sin(ang) @ padded


def stft_direct(x, n_fft, hop, win):
    w = np.array([0.5 - 0.5 * math.cos(2 * math.pi * i / win) for i in range(win)])
    n_frames = (len(x) - win) // hop + 1
    re = np.zeros((n_frames, n_fft // 2 + 1))
    im = np.zeros_like(re)
    for f in range(n_frames):
        re[f], im[f] = dft_direct(x[f * hop:f * hop + win] * w, n_fft)
    return re, im


def adam_scalar(p, grads, lr, b1, b2, eps=1e-8):
    """Plain-float Adam on one scalar over a sequence of gradients."""
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        p = p - lr * mhat / (math.sqrt(vhat) + eps)
    return p
