"""Time-major (T x C) layer primitives with explicit backward passes.

Each ``*_fwd`` returns its output; the matching ``*_bwd`` takes whatever the
forward needed to keep plus the upstream gradient.
"""

from __future__ import annotations

import numpy as np


def linear_fwd(x, W, b):
    return x @ W + b


def linear_bwd(x, W, dy):
    return dy @ W.T, x.T @ dy, dy.sum(axis=0)


def _im2col(x, k):
    pad = k // 2
    T, C = x.shape
    cols = np.zeros((T, k * C))
    for j in range(k):
        lo, hi = max(0, pad - j), min(T, T + pad - j)
        if hi > lo:
            cols[lo:hi, j * C : (j + 1) * C] = x[lo + j - pad : hi + j - pad]
    return cols


def conv1d_fwd(x, W, b):
    """Same-length convolution with zero padding; ``W`` has shape (k, C_in, C_out), k odd."""
    k, cin, cout = W.shape
    cols = _im2col(x, k)
    return cols @ W.reshape(k * cin, cout) + b, cols


def conv1d_bwd(cols, W, dy):
    k, cin, cout = W.shape
    T = dy.shape[0]
    pad = k // 2
    dW = (cols.T @ dy).reshape(k, cin, cout)
    db = dy.sum(axis=0)
    dcols = dy @ W.reshape(k * cin, cout).T
    dx = np.zeros((T, cin))
    for j in range(k):
        lo, hi = max(0, pad - j), min(T, T + pad - j)
        if hi > lo:
            dx[lo + j - pad : hi + j - pad] += dcols[lo:hi, j * cin : (j + 1) * cin]
    return dx, dW, db


def tanh_fwd(x):
    return np.tanh(x)


def tanh_bwd(y, dy):
    return dy * (1.0 - y * y)


def silu_fwd(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s, s


def silu_bwd(x, s, dy):
    return dy * (s * (1.0 + x * (1.0 - s)))


def pool2_fwd(x):
    """Average adjacent frame pairs; odd lengths are right-padded by replicating the last frame."""
    T = x.shape[0]
    if T % 2:
        x = np.concatenate([x, x[-1:]], axis=0)
    return 0.5 * (x[0::2] + x[1::2])


def pool2_bwd(T, dy):
    dx = np.repeat(0.5 * dy, 2, axis=0)
    if T % 2:
        dx[T - 1] += dx[T]
    return dx[:T]


def up2_fwd(x, T):
    """Nearest-neighbour upsampling by 2, cropped to ``T`` frames."""
    return np.repeat(x, 2, axis=0)[:T]


def up2_bwd(Tc, dy):
    full = np.zeros((2 * Tc, dy.shape[1]))
    full[: dy.shape[0]] = dy
    return full[0::2] + full[1::2]
