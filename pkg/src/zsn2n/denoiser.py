"""Zero-shot Noise2Noise: fit a tiny conv net to one noisy image and denoise it.

The network ``f`` (3x3 conv, ReLU, 3x3 conv, ReLU, 1x1 conv) predicts the
noise; the estimate is ``y - f(y)``. It is fitted on the two downsampled
views ``D1(y), D2(y)`` with

    L_res  = 1/2 (|D1 - f(D1) - D2|^2 + |D2 - f(D2) - D1|^2)
    L_cons = 1/2 (|D1 - f(D1) - D1(y - f(y))|^2 + |D2 - f(D2) - D2(y - f(y))|^2)

where ``|.|^2`` is the mean of squared entries.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .downsample import downsample_pair, downsample_pair_adjoint
from .noise_lab import STREAM_INIT, NoiseSpec, QualityMetrics, psnr, rng_stream
from .tensor_core import ConvKernel, conv_backward_hwc, conv_forward_hwc

LOSS_VARIANTS = ("full", "no_symmetric", "no_consistency", "no_residual")


@dataclass
class NetworkParams:
    conv1: ConvKernel  # C -> hidden, 3x3
    conv2: ConvKernel  # hidden -> hidden, 3x3
    conv3: ConvKernel  # hidden -> C, 1x1

    def __post_init__(self):
        if self.conv1.kernel_size != (3, 3) or self.conv2.kernel_size != (3, 3):
            raise ValueError("conv1 and conv2 must be 3x3")
        if self.conv3.kernel_size != (1, 1):
            raise ValueError("conv3 must be 1x1")
        if not (self.conv1.out_channels == self.conv2.in_channels == self.conv2.out_channels
                == self.conv3.in_channels):
            raise ValueError("hidden widths disagree between layers")
        if self.conv3.out_channels != self.conv1.in_channels:
            raise ValueError("network must map C channels back to C channels")

    @property
    def channels(self) -> int:
        return self.conv1.in_channels

    @property
    def hidden(self) -> int:
        return self.conv1.out_channels

    @property
    def dtype(self):
        return self.conv1.weight.dtype

    def kernels(self) -> tuple[ConvKernel, ConvKernel, ConvKernel]:
        return self.conv1, self.conv2, self.conv3

    def arrays(self) -> list[np.ndarray]:
        return [a for k in self.kernels() for a in (k.weight, k.bias)]

    def num_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def copy(self) -> "NetworkParams":
        return NetworkParams(*(k.copy() for k in self.kernels()))

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams(
            *(ConvKernel(np.zeros_like(k.weight), np.zeros_like(k.bias)) for k in self.kernels())
        )

    def astype(self, dtype) -> "NetworkParams":
        return NetworkParams(
            *(ConvKernel(k.weight.astype(dtype), k.bias.astype(dtype)) for k in self.kernels())
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])


def param_count(channels: int, hidden: int) -> int:
    return (channels * 9 * hidden + hidden) + (hidden * 9 * hidden + hidden) + (hidden * channels + channels)


def init_params(channels: int, hidden: int = 48, seed: int = 0, dtype=np.float32) -> NetworkParams:
    """Weights uniform in +-sqrt(1/fan_in), zero biases."""
    if channels < 1 or hidden < 1:
        raise ValueError("channels and hidden must be >= 1")
    rng = rng_stream(seed, STREAM_INIT)
    shapes = [(hidden, channels, 3, 3), (hidden, hidden, 3, 3), (channels, hidden, 1, 1)]
    kernels = []
    for shape in shapes:
        bound = math.sqrt(1.0 / (shape[1] * shape[2] * shape[3]))
        w = rng.uniform(-bound, bound, size=shape).astype(dtype)
        kernels.append(ConvKernel(w, np.zeros(shape[0], dtype=dtype)))
    return NetworkParams(*kernels)


# ---------------------------------------------------------------------------
# network, channel-last internally
# ---------------------------------------------------------------------------

def _engine_weights(params: NetworkParams):
    return [
        (np.ascontiguousarray(k.weight.transpose(2, 3, 1, 0)), k.bias) for k in params.kernels()
    ]


def _net_forward(wts, x):
    """x: (H, W, C). Returns output and the activations backward needs.

    Hidden activations live in zero-padded buffers so the next 3x3 layer
    reads them without another copy.
    """
    (w1, b1), (w2, b2), (w3, b3) = wts
    h, w, _ = x.shape
    xp = np.zeros((h + 2, w + 2, x.shape[2]), dtype=x.dtype)
    xp[1:-1, 1:-1] = x
    z1 = conv_forward_hwc(xp, w1, b1, 1, 1, prepadded=True)
    h1p = np.zeros((h + 2, w + 2, w1.shape[3]), dtype=x.dtype)
    np.maximum(z1, 0, out=h1p[1:-1, 1:-1])
    h2 = np.maximum(conv_forward_hwc(h1p, w2, b2, 1, 1, prepadded=True), 0)
    out = conv_forward_hwc(h2, w3, b3, 1, 0)
    return out, (xp, h1p, h2)


def _net_backward(wts, cache, g, grads):
    """Accumulate parameter gradients (engine layout) into ``grads``."""
    (w1, _), (w2, _), (w3, _) = wts
    xp, h1p, h2 = cache
    g2, gw3, gb3 = conv_backward_hwc(h2, w3, g, 1, 0)
    g1, gw2, gb2 = conv_backward_hwc(h1p, w2, g2, 1, 1, prepadded=True, grad_mask=h2)
    _, gw1, gb1 = conv_backward_hwc(xp, w1, g1, 1, 1, need_input_grad=False, prepadded=True,
                                    grad_mask=h1p[1:-1, 1:-1])
    for acc, new in zip(grads, (gw1, gb1, gw2, gb2, gw3, gb3)):
        acc += new


def _hwc(x):
    return np.ascontiguousarray(x.transpose(1, 2, 0))


def _chw(x):
    return np.ascontiguousarray(x.transpose(2, 0, 1))


def network_forward(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Predicted noise ``f(x)`` for a (C, H, W) input; same shape as ``x``."""
    if x.ndim != 3 or x.shape[0] != params.channels:
        raise ValueError(f"network expects ({params.channels}, H, W) input, got {x.shape}")
    x = x.astype(params.dtype, copy=False)
    out, _ = _net_forward(_engine_weights(params), _hwc(x))
    return _chw(out)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossBreakdown:
    residual: float
    consistency: float
    total: float


def _check_image(y: np.ndarray):
    if y.ndim != 3:
        raise ValueError(f"expected a (C, H, W) image, got shape {y.shape}")
    if y.shape[1] < 2 or y.shape[2] < 2:
        raise ValueError(f"image must be at least 2x2, got {y.shape[1]}x{y.shape[2]}")


def _evaluate(params: NetworkParams, y: np.ndarray, views, variant: str, want_grad: bool = True,
              wts=None):
    """Loss, gradients and (when computed) the full-resolution estimate.

    ``views`` is ``downsample_pair(y)``. Returns ``(LossBreakdown, grads, estimate)``;
    grads are engine-layout arrays or None, estimate is (C, H, W) or None.
    """
    if variant not in LOSS_VARIANTS:
        raise ValueError(f"unknown loss variant {variant!r}; choose from {LOSS_VARIANTS}")
    wts = wts if wts is not None else _engine_weights(params)
    residual = variant != "no_residual"
    symmetric = variant != "no_symmetric"
    consistency = variant != "no_consistency"
    sign = -1.0 if residual else 1.0  # d(estimate)/d(f)

    d = (views[0], views[1])
    order = (0, 1) if symmetric else (0,)
    weight = 1.0 / len(order)
    n = d[0].size

    fwd = {}
    est = {}
    for k in order:
        out, cache = _net_forward(wts, _hwc(d[k]))
        fwd[k] = cache
        out = _chw(out)
        est[k] = d[k] - out if residual else out

    est_y = cache_y = down_est = None
    if consistency:
        out, cache_y = _net_forward(wts, _hwc(y))
        out = _chw(out)
        est_y = y - out if residual else out
        down_est = downsample_pair(est_y)

    l_res = 0.0
    l_cons = 0.0
    g_est = {}
    g_down = [None, None]
    for k in order:
        r = est[k] - d[1 - k]
        l_res += weight * float(np.mean(r * r, dtype=np.float64))
        g = r
        if consistency:
            c = est[k] - down_est[k]
            l_cons += weight * float(np.mean(c * c, dtype=np.float64))
            g = r + c
            g_down[k] = -(2.0 * weight / n) * c
        g_est[k] = (2.0 * weight / n) * g
    loss = LossBreakdown(l_res, l_cons, l_res + l_cons)

    if not want_grad:
        return loss, None, est_y

    grads = [np.zeros_like(w) for pair in wts for w in pair]
    for k in order:
        _net_backward(wts, fwd[k], _hwc(sign * g_est[k]).astype(y.dtype, copy=False), grads)
    if consistency:
        zero = np.zeros_like(d[0])
        g1 = g_down[0]
        g2 = g_down[1] if g_down[1] is not None else zero
        g_y = downsample_pair_adjoint(y.shape, g1.astype(y.dtype), g2.astype(y.dtype))
        _net_backward(wts, cache_y, _hwc(sign * g_y).astype(y.dtype, copy=False), grads)
    return loss, grads, est_y


def _grads_to_params(grads) -> NetworkParams:
    kernels = []
    for i in range(3):
        gw, gb = grads[2 * i], grads[2 * i + 1]
        kernels.append(ConvKernel(np.ascontiguousarray(gw.transpose(3, 2, 0, 1)), gb))
    return NetworkParams(*kernels)


def loss_and_grad(params: NetworkParams, y: np.ndarray, variant: str = "full"):
    """Return ``(LossBreakdown, grads)``; grads is a :class:`NetworkParams`."""
    _check_image(y)
    y = y.astype(params.dtype, copy=False)
    loss, grads, _ = _evaluate(params, y, downsample_pair(y), variant)
    return loss, _grads_to_params(grads)


def loss_value(params: NetworkParams, y: np.ndarray, variant: str = "full") -> LossBreakdown:
    _check_image(y)
    y = y.astype(params.dtype, copy=False)
    loss, _, _ = _evaluate(params, y, downsample_pair(y), variant, want_grad=False)
    return loss


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class OptimizerState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def for_params(cls, params: NetworkParams) -> "OptimizerState":
        return cls([np.zeros_like(a) for a in params.arrays()],
                   [np.zeros_like(a) for a in params.arrays()])


def adam_step(params: NetworkParams, grads: NetworkParams, state: OptimizerState,
              learning_rate: float, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update with bias correction, applied in place."""
    _adam_arrays(params.arrays(), grads.arrays(), state, learning_rate, beta1, beta2, eps)
    return params, state


def _adam_arrays(ps, gs, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(ps, gs, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= (lr / c1) * m / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


@dataclass
class FitConfig:
    iterations: int = 2000
    learning_rate: float = 1e-3
    lr_halving_steps: tuple = (1000, 1500)
    seed: int = 0
    loss_variant: str = "full"
    hidden: int = 48

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ValueError(f"unknown loss variant {self.loss_variant!r}")
        self.lr_halving_steps = tuple(sorted(int(s) for s in self.lr_halving_steps))

    def lr_at(self, it: int) -> float:
        """Learning rate for 0-based iteration ``it``."""
        halvings = sum(1 for s in self.lr_halving_steps if it >= s)
        return self.learning_rate * 0.5 ** halvings

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lr_halving_steps"] = list(self.lr_halving_steps)
        return d


@dataclass
class DenoiseReport:
    config: FitConfig
    residual: list = field(default_factory=list)
    consistency: list = field(default_factory=list)
    total: list = field(default_factory=list)
    clean_mse: Optional[list] = None
    seconds: float = 0.0
    noisy: Optional[QualityMetrics] = None
    denoised: Optional[QualityMetrics] = None
    input_path: Optional[str] = None
    noise: Optional[NoiseSpec] = None

    @property
    def seconds_per_100(self) -> float:
        return 100.0 * self.seconds / max(len(self.total), 1)

    def losses(self) -> list[LossBreakdown]:
        return [LossBreakdown(*t) for t in zip(self.residual, self.consistency, self.total)]

    def to_dict(self, include_curve: bool = True) -> dict:
        d = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "input_path": self.input_path,
            "noise": self.noise.to_dict() if self.noise else None,
            "config": self.config.to_dict(),
            "iterations": len(self.total),
            "seconds": self.seconds,
            "seconds_per_100_iterations": self.seconds_per_100,
            "final_loss": asdict(self.losses()[-1]) if self.total else None,
            "metrics": {
                "noisy": self.noisy.to_dict() if self.noisy else None,
                "denoised": self.denoised.to_dict() if self.denoised else None,
            },
        }
        if include_curve:
            d["curve"] = {
                "residual": list(self.residual),
                "consistency": list(self.consistency),
                "total": list(self.total),
                "clean_mse": list(self.clean_mse) if self.clean_mse is not None else None,
            }
        return d


REPORT_SCHEMA_VERSION = 1


def denoise(y: np.ndarray, config: FitConfig = None, clean: np.ndarray = None,
            callback: Callable[[int, LossBreakdown], None] = None):
    """Fit the network to ``y`` (C, H, W) and return ``(estimate, report)``.

    The estimate is clamped to [0, 1]. With ``clean`` supplied the report
    carries a per-iteration clean-MSE curve (entry ``t`` uses the parameters
    entering iteration ``t``) and before/after PSNR.
    """
    config = config or FitConfig()
    _check_image(y)
    if not np.all(np.isfinite(y)):
        raise ValueError("input image contains non-finite values")
    if clean is not None and clean.shape != y.shape:
        raise ValueError(f"clean image shape {clean.shape} != noisy shape {y.shape}")
    y = np.ascontiguousarray(y, dtype=np.float32)

    t0 = time.perf_counter()
    params = init_params(y.shape[0], config.hidden, config.seed, dtype=np.float32)
    state = OptimizerState.for_params(params)
    views = downsample_pair(y)
    residual = config.loss_variant != "no_residual"
    report = DenoiseReport(config=config, clean_mse=[] if clean is not None else None)

    for it in range(config.iterations):
        wts = _engine_weights(params)
        loss, grads, est_y = _evaluate(params, y, views, config.loss_variant, wts=wts)
        report.residual.append(loss.residual)
        report.consistency.append(loss.consistency)
        report.total.append(loss.total)
        if clean is not None:
            if est_y is None:
                est_y = _estimate(params, y, residual)
            report.clean_mse.append(psnr(np.clip(est_y, 0, 1), clean).mse)
        grads = _grads_to_params(grads)
        _adam_arrays(params.arrays(), grads.arrays(), state, config.lr_at(it))
        if callback is not None:
            callback(it, loss)

    x_hat = np.clip(_estimate(params, y, residual), 0.0, 1.0)
    report.seconds = time.perf_counter() - t0
    if clean is not None:
        report.noisy = psnr(y, clean)
        report.denoised = psnr(x_hat, clean)
    return x_hat, report


def _estimate(params, y, residual=True):
    f = network_forward(params, y)
    return y - f if residual else f
