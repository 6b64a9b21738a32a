"""Dense conv2d and ReLU with hand-written forward and backward passes.

Public functions take channel-major planar arrays of shape ``(C, H, W)``.
Convolution is cross-correlation (no kernel flip) with zero padding.

The fast path works on channel-last ``(H, W, C)`` buffers. The zero-padded
input is flattened row-major to ``(Hp * Wp, C)``; the input rows read by
kernel tap ``(i, j)`` for every output position then form a single strided
slice starting at offset ``i * Wp + j``, so each tap is one GEMM with no
im2col copy. Outputs land on a ``(Ho, Wp)`` grid whose trailing
``Wp - Wo`` columns are discarded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.linalg import blas

__all__ = [
    "ConvKernel",
    "conv2d_forward",
    "conv2d_backward",
    "conv2d_forward_direct",
    "relu_forward",
    "relu_backward",
    "output_size",
]


@dataclass
class ConvKernel:
    """Weights ``(out, in, kh, kw)`` and per-output-channel bias ``(out,)``."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weight.ndim != 4:
            raise ValueError(f"weight must be 4-D (out, in, kh, kw), got shape {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match {self.weight.shape[0]} output channels"
            )

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel_size(self) -> tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]

    @property
    def size(self) -> int:
        return self.weight.size + self.bias.size

    @classmethod
    def zeros(cls, out_channels, in_channels, kh, kw, dtype=np.float32) -> "ConvKernel":
        return cls(
            np.zeros((out_channels, in_channels, kh, kw), dtype=dtype),
            np.zeros(out_channels, dtype=dtype),
        )

    def copy(self) -> "ConvKernel":
        return ConvKernel(self.weight.copy(), self.bias.copy())


def output_size(n: int, k: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - k) // stride + 1


def _check_geometry(x_shape, kernel: ConvKernel, stride: int, padding: int):
    if len(x_shape) != 3:
        raise ValueError(f"expected a (C, H, W) tensor, got shape {tuple(x_shape)}")
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    if padding < 0:
        raise ValueError(f"padding must be non-negative, got {padding}")
    c, h, w = x_shape
    if c != kernel.in_channels:
        raise ValueError(
            f"input has {c} channels but kernel expects {kernel.in_channels}"
        )
    kh, kw = kernel.kernel_size
    ho, wo = output_size(h, kh, stride, padding), output_size(w, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise ValueError(
            f"{kh}x{kw} kernel with stride {stride}, padding {padding} "
            f"gives empty output for {h}x{w} input"
        )
    return ho, wo


# ---------------------------------------------------------------------------
# channel-last engine
# ---------------------------------------------------------------------------


def _gemm(dtype):
    return blas.dgemm if dtype == np.float64 else blas.sgemm


def _pad_flat(x: np.ndarray, padding: int) -> np.ndarray:
    """Zero-pad an (H, W, C) array spatially and flatten to (Hp*Wp, C)."""
    h, w, c = x.shape
    p = padding
    xp = np.zeros((h + 2 * p, w + 2 * p, c), dtype=x.dtype)
    xp[p : p + h, p : p + w] = x
    return xp.reshape(-1, c)


def _tap_view(flat: np.ndarray, offset: int, stride: int, n: int, writeable=False) -> np.ndarray:
    """Rows ``offset, offset + stride, ...`` of a (L, C) array as an (n, C) view."""
    c = flat.shape[1]
    s0, s1 = flat.strides
    return as_strided(flat[offset:], shape=(n, c), strides=(s0 * stride, s1), writeable=writeable)


# layers with at most this many inputs per output use one im2col GEMM
_IM2COL_MAX_K = 32
_BLOCK_ROWS = 4096


def _im2col(xf: np.ndarray, plan: "_Plan") -> np.ndarray:
    """(n, kh*kw*C) patch matrix, tap-major to match a (kh, kw, C, O) weight."""
    c = xf.shape[1]
    cols = np.empty((plan.n, plan.kh * plan.kw, c), dtype=xf.dtype)
    for k, (_, _, off) in enumerate(plan.offsets()):
        cols[:, k] = _tap_view(xf, off, plan.stride, plan.n)
    return cols.reshape(plan.n, -1)


class _Plan:
    __slots__ = ("h", "w", "hp", "wp", "ho", "wo", "n", "stride", "padding", "kh", "kw")

    def __init__(self, h, w, kh, kw, stride, padding):
        self.h, self.w, self.kh, self.kw = h, w, kh, kw
        self.stride, self.padding = stride, padding
        self.hp, self.wp = h + 2 * padding, w + 2 * padding
        self.ho = (self.hp - kh) // stride + 1
        self.wo = (self.wp - kw) // stride + 1
        # grid positions q = r * wp + c for r < ho, c < wo
        self.n = (self.ho - 1) * self.wp + self.wo

    def offsets(self):
        for i in range(self.kh):
            for j in range(self.kw):
                yield i, j, i * self.wp + j


def _flat_input(x, padding, prepadded):
    if prepadded:
        return x.reshape(-1, x.shape[2]), x.shape[0] - 2 * padding, x.shape[1] - 2 * padding
    flat = _pad_flat(x, padding) if padding else x.reshape(-1, x.shape[2])
    return flat, x.shape[0], x.shape[1]


def conv_forward_hwc(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1,
                     padding: int = 0, prepadded: bool = False) -> np.ndarray:
    """Channel-last convolution.

    ``x`` is (H, W, C), ``w`` is (kh, kw, C, O), ``b`` is (O,). Returns
    (Ho, Wo, O). With ``prepadded`` the caller passes the zero-padded
    (H + 2p, W + 2p, C) buffer instead. No validation; callers go through
    :func:`conv2d_forward` or build shapes themselves.
    """
    kh, kw, c, o = w.shape
    w = w.astype(x.dtype, copy=False)
    xf, h, wd = _flat_input(x, padding, prepadded)
    plan = _Plan(h, wd, kh, kw, stride, padding)
    grid = np.empty((plan.ho * plan.wp, o), dtype=x.dtype)
    grid[:] = b
    out = grid[: plan.n]
    if c * kh * kw <= _IM2COL_MAX_K:
        out += _im2col(xf, plan) @ w.reshape(-1, o)
    elif stride == 1:
        gemm = _gemm(x.dtype)
        for i, j, off in plan.offsets():
            # out^T += w^T x^T, all operands Fortran-ordered views
            gemm(1.0, w[i, j].T, xf[off : off + plan.n].T, beta=1.0, c=out.T, overwrite_c=1)
    else:
        for i, j, off in plan.offsets():
            out += _tap_view(xf, off, stride, plan.n) @ w[i, j]
    return grid.reshape(plan.ho, plan.wp, o)[:, : plan.wo]


def conv_backward_hwc(x: np.ndarray, w: np.ndarray, grad_out: np.ndarray, stride: int = 1,
                      padding: int = 0, need_input_grad: bool = True, prepadded: bool = False,
                      grad_mask: np.ndarray = None):
    """Gradients of :func:`conv_forward_hwc`.

    Returns ``(grad_x, grad_w, grad_b)`` with ``grad_x`` None when
    ``need_input_grad`` is false. ``grad_mask`` zeroes ``grad_out`` wherever
    the mask is not positive, which fuses a preceding ReLU's backward pass.
    """
    kh, kw, c, o = w.shape
    w = w.astype(x.dtype, copy=False)
    grad_out = grad_out.astype(x.dtype, copy=False)
    xf, h, wd = _flat_input(x, padding, prepadded)
    plan = _Plan(h, wd, kh, kw, stride, padding)

    # scatter grad_out onto the grid; junk columns must stay zero
    if plan.wo == plan.wp and grad_mask is None:
        gg = np.ascontiguousarray(grad_out).reshape(-1, o)
    else:
        gg = np.zeros((plan.ho, plan.wp, o), dtype=x.dtype)
        if grad_mask is None:
            gg[:, : plan.wo] = grad_out
        else:
            np.multiply(grad_out, grad_mask > 0, out=gg[:, : plan.wo])
        gg = gg.reshape(-1, o)
    g = gg[: plan.n]

    grad_b = g.sum(axis=0)
    if c * kh * kw <= _IM2COL_MAX_K:
        grad_w = (_im2col(xf, plan).T @ g).reshape(w.shape)
    elif stride == 1:
        # blocked over grid rows so each x/g block is reused by all taps from cache
        grad_w = np.zeros_like(w)
        for start in range(0, plan.n, _BLOCK_ROWS):
            stop = min(plan.n, start + _BLOCK_ROWS)
            gb = g[start:stop]
            for i, j, off in plan.offsets():
                grad_w[i, j] += xf[start + off : stop + off].T @ gb
    else:
        grad_w = np.empty_like(w)
        for i, j, off in plan.offsets():
            grad_w[i, j] = _tap_view(xf, off, stride, plan.n).T @ g

    if not need_input_grad:
        return None, grad_w, grad_b

    gxf = np.zeros((plan.hp * plan.wp, c), dtype=x.dtype)
    if stride == 1:
        gemm = _gemm(x.dtype)
        for i, j, off in plan.offsets():
            gemm(1.0, w[i, j], g.T, beta=1.0, c=gxf[off : off + plan.n].T, overwrite_c=1)
    else:
        for i, j, off in plan.offsets():
            view = _tap_view(gxf, off, stride, plan.n, writeable=True)
            view += g @ w[i, j].T
    gx = gxf.reshape(plan.hp, plan.wp, c)
    p = padding
    return gx[p : p + plan.h, p : p + plan.w], grad_w, grad_b


# ---------------------------------------------------------------------------
# public (C, H, W) API
# ---------------------------------------------------------------------------


def _as_hwc(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float64)
    return np.ascontiguousarray(x.transpose(1, 2, 0))


def _weight_hwc(kernel: ConvKernel) -> np.ndarray:
    return np.ascontiguousarray(kernel.weight.transpose(2, 3, 1, 0))


def conv2d_forward(x: np.ndarray, kernel: ConvKernel, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlate ``x`` (C, H, W) with ``kernel`` and add the bias.

    Output spatial size is ``(H + 2*padding - kh) // stride + 1``.
    """
    _check_geometry(x.shape, kernel, stride, padding)
    out = conv_forward_hwc(_as_hwc(x), _weight_hwc(kernel), kernel.bias, stride, padding)
    return np.ascontiguousarray(out.transpose(2, 0, 1))


def conv2d_backward(x: np.ndarray, kernel: ConvKernel, grad_output: np.ndarray,
                    stride: int = 1, padding: int = 0) -> tuple[np.ndarray, ConvKernel]:
    """Return ``(grad_input, grad_kernel)`` for :func:`conv2d_forward`.

    ``grad_kernel`` is a :class:`ConvKernel` holding weight and bias gradients.
    """
    ho, wo = _check_geometry(x.shape, kernel, stride, padding)
    expected = (kernel.out_channels, ho, wo)
    if grad_output.shape != expected:
        raise ValueError(f"grad_output shape {grad_output.shape} != forward output shape {expected}")
    gx, gw, gb = conv_backward_hwc(
        _as_hwc(x), _weight_hwc(kernel), _as_hwc(grad_output), stride, padding
    )
    grad_input = np.ascontiguousarray(gx.transpose(2, 0, 1))
    grad_kernel = ConvKernel(np.ascontiguousarray(gw.transpose(3, 2, 0, 1)), gb)
    return grad_input, grad_kernel


def conv2d_forward_direct(x: np.ndarray, kernel: ConvKernel, stride: int = 1,
                          padding: int = 0) -> np.ndarray:
    """Reference convolution: explicit loops over output channel and tap.

    Slow; exists to cross-check the GEMM path.
    """
    ho, wo = _check_geometry(x.shape, kernel, stride, padding)
    c, h, w = x.shape
    kh, kw = kernel.kernel_size
    xp = np.zeros((c, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
    xp[:, padding : padding + h, padding : padding + w] = x
    out = np.empty((kernel.out_channels, ho, wo), dtype=x.dtype)
    for o in range(kernel.out_channels):
        acc = np.full((ho, wo), kernel.bias[o], dtype=x.dtype)
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    patch = xp[ci, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride]
                    acc += kernel.weight[o, ci, i, j] * patch
        out[o] = acc
    return out


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_output: np.ndarray) -> np.ndarray:
    # subgradient 0 at exactly 0
    return np.where(x > 0, grad_output, 0).astype(grad_output.dtype, copy=False)
