"""Pair downsampler: split an image into two half-resolution views.

Each 2x2 non-overlapping patch ``[[a, b], [c, d]]`` contributes
``(b + c) / 2`` to the first view and ``(a + d) / 2`` to the second. Odd
trailing rows/columns are dropped.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .tensor_core import ConvKernel, conv2d_backward, conv2d_forward

K1 = np.array([[0.0, 0.5], [0.5, 0.0]])
K2 = np.array([[0.5, 0.0], [0.0, 0.5]])


class DownsampledPair(NamedTuple):
    first: np.ndarray
    second: np.ndarray


def _check(y: np.ndarray):
    if y.ndim != 3:
        raise ValueError(f"expected a (C, H, W) image, got shape {y.shape}")
    if y.shape[1] < 2 or y.shape[2] < 2:
        raise ValueError(f"image must be at least 2x2 to downsample, got {y.shape[1]}x{y.shape[2]}")


def depthwise_kernel(k: np.ndarray, channels: int, dtype=np.float32) -> ConvKernel:
    """Apply the 2x2 kernel ``k`` to each channel independently, no bias."""
    kern = ConvKernel.zeros(channels, channels, 2, 2, dtype=dtype)
    for c in range(channels):
        kern.weight[c, c] = k
    return kern


def _kernels(channels, dtype):
    return depthwise_kernel(K1, channels, dtype), depthwise_kernel(K2, channels, dtype)


def downsample_pair(y: np.ndarray) -> DownsampledPair:
    """Return ``(D1(y), D2(y))`` for a (C, H, W) image via stride-2 convolution."""
    _check(y)
    k1, k2 = _kernels(y.shape[0], y.dtype)
    return DownsampledPair(conv2d_forward(y, k1, stride=2), conv2d_forward(y, k2, stride=2))


def downsample_pair_adjoint(y_shape, g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the input image given gradients on both views."""
    x = np.zeros(y_shape, dtype=g1.dtype)
    k1, k2 = _kernels(y_shape[0], g1.dtype)
    gx1, _ = conv2d_backward(x, k1, g1, stride=2)
    gx2, _ = conv2d_backward(x, k2, g2, stride=2)
    return gx1 + gx2


def downsample_pair_patches(y: np.ndarray) -> DownsampledPair:
    """Same as :func:`downsample_pair`, computed directly on 2x2 patches."""
    _check(y)
    h2, w2 = y.shape[1] // 2 * 2, y.shape[2] // 2 * 2
    y = y[:, :h2, :w2]
    a, b = y[:, 0::2, 0::2], y[:, 0::2, 1::2]
    c, d = y[:, 1::2, 0::2], y[:, 1::2, 1::2]
    half = y.dtype.type(0.5)
    return DownsampledPair(half * b + half * c, half * a + half * d)
