"""Finite-difference check of the analytic loss gradient.

Central differences of the full loss are taken for every network parameter
in float64. A single-weight perturbation changes one channel of one
pre-activation, so each perturbed loss is evaluated by patching a cached
forward pass rather than rerunning the whole network. The loss itself is
recomputed here from its definition with a slicing downsampler; nothing is
shared with the analytic backward path.

ReLU makes the loss piecewise smooth. When a +-step perturbation moves any
pre-activation across zero the difference quotient straddles a kink and is
meaningless, so for those parameters the step is divided by 10 until no
crossing occurs (the probe sees every pre-activation, so crossings are
detected exactly).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .denoiser import init_params, loss_and_grad
from .noise_lab import STREAM_TEST, rng_stream


def _down(a):
    """(H, W, C) -> two half-resolution views."""
    h, w = a.shape[0] // 2 * 2, a.shape[1] // 2 * 2
    a = a[:h, :w]
    return 0.5 * (a[0::2, 1::2] + a[1::2, 0::2]), 0.5 * (a[0::2, 0::2] + a[1::2, 1::2])


def _mse(a, b):
    d = a - b
    return np.mean(d * d)


def _shifted(padded, h, w):
    for i in range(3):
        for j in range(3):
            yield i, j, padded[i : i + h, j : j + w]


def _pad(a):
    return np.pad(a, ((1, 1), (1, 1), (0, 0)))


class _Probe:
    """Cached forward pass of the network on ``D1(y), D2(y), y``."""

    def __init__(self, params, y_chw):
        self.w1 = params.conv1.weight
        self.b1 = params.conv1.bias
        self.w2 = params.conv2.weight
        self.b2 = params.conv2.bias
        self.w3 = params.conv3.weight[:, :, 0, 0]  # (C, hidden)
        self.b3 = params.conv3.bias
        y = y_chw.transpose(1, 2, 0)
        self.y = y
        self.d1, self.d2 = _down(y)
        self.caches = [self._forward(x) for x in (self.d1, self.d2, y)]

    @staticmethod
    def _conv3x3(xp, w, b, h, wd):
        out = np.broadcast_to(b, (h, wd, w.shape[0])).copy()
        for i, j, win in _shifted(xp, h, wd):
            out += win @ w[:, :, i, j].T
        return out

    def _forward(self, x):
        h, w, _ = x.shape
        xp = _pad(x)
        z1 = self._conv3x3(xp, self.w1, self.b1, h, w)
        h1 = np.maximum(z1, 0)
        h1p = _pad(h1)
        z2 = self._conv3x3(h1p, self.w2, self.b2, h, w)
        h2 = np.maximum(z2, 0)
        out = h2 @ self.w3.T + self.b3
        return dict(xp=xp, z1=z1, h1=h1, h1p=h1p, z2=z2, h2=h2, out=out)

    def loss(self, outs=None) -> float:
        f1, f2, fy = outs if outs is not None else [c["out"] for c in self.caches]
        e1 = self.d1 - f1
        e2 = self.d2 - f2
        v1, v2 = _down(self.y - fy)
        res = 0.5 * (_mse(e1, self.d2) + _mse(e2, self.d1))
        cons = 0.5 * (_mse(e1, v1) + _mse(e2, v2))
        return float(res + cons)

    @staticmethod
    def _flips(z, dz):
        return bool(np.any((z > 0) != (z + dz > 0)))

    def perturbed(self, layer: int, kind: str, index: tuple, delta: float):
        """Network outputs after nudging one parameter by ``delta``.

        Returns ``(outs, crossed)``; ``crossed`` reports a pre-activation
        sign change.
        """
        outs = []
        crossed = False
        for c in self.caches:
            h, w = c["out"].shape[:2]
            if layer == 3:
                out = c["out"].copy()
                if kind == "weight":
                    o, ci = index[0], index[1]
                    out[..., o] += delta * c["h2"][..., ci]
                else:
                    out[..., index[0]] += delta
            elif layer == 2:
                o = index[0]
                if kind == "weight":
                    _, ci, i, j = index
                    dz = delta * c["h1p"][i : i + h, j : j + w, ci]
                else:
                    dz = delta
                z = c["z2"][..., o]
                crossed |= self._flips(z, dz)
                dh = np.maximum(z + dz, 0) - c["h2"][..., o]
                out = c["out"] + dh[..., None] * self.w3[:, o]
            else:
                o = index[0]
                if kind == "weight":
                    _, ci, i, j = index
                    dz1 = delta * c["xp"][i : i + h, j : j + w, ci]
                else:
                    dz1 = delta
                z1 = c["z1"][..., o]
                crossed |= self._flips(z1, dz1)
                dh1p = np.pad(np.maximum(z1 + dz1, 0) - c["h1"][..., o], 1)
                dz2 = np.zeros_like(c["z2"])
                for i, j, win in _shifted(dh1p, h, w):
                    dz2 += win[..., None] * self.w2[:, o, i, j]
                crossed |= self._flips(c["z2"], dz2)
                out = np.maximum(c["z2"] + dz2, 0) @ self.w3.T + self.b3
            outs.append(out)
        return outs, crossed

    def central_difference(self, layer, kind, index, step, min_step=1e-9):
        """Returns ``(derivative, step_used)``."""
        while True:
            plus, c1 = self.perturbed(layer, kind, index, step)
            minus, c2 = self.perturbed(layer, kind, index, -step)
            if not (c1 or c2) or step / 10 < min_step:
                return (self.loss(plus) - self.loss(minus)) / (2 * step), step
            step /= 10


@dataclass
class GradcheckResult:
    max_rel_error: float
    worst: str
    n_params: int
    n_kink_adjusted: int
    seconds: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tolerance)


def relative_error(analytic, numeric, floor):
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def gradient_check(seed: int = 0, size: int = 16, channels: int = 3, hidden: int = 48,
                   step: float = 1e-4, tolerance: float = 1e-4, floor: float = 1e-7,
                   perturb_grad: float = 0.0) -> GradcheckResult:
    """Compare analytic gradients of the full loss with central differences.

    The relative error of each parameter is ``|a - n| / max(|a|, |n|, floor)``.
    ``perturb_grad`` is added to one analytic gradient entry, a negative
    control that must make the check fail.
    """
    t0 = time.perf_counter()
    rng = rng_stream(seed, STREAM_TEST)
    y = rng.random((channels, size, size))
    params = init_params(channels, hidden, seed, dtype=np.float64)
    for k in params.kernels():
        k.bias[:] = rng.uniform(-0.1, 0.1, size=k.bias.shape)

    _, grads = loss_and_grad(params, y, "full")
    probe = _Probe(params, y)

    worst = (-1.0, "")
    n = 0
    n_kink = 0
    for layer, (kern, gkern) in enumerate(zip(params.kernels(), grads.kernels()), start=1):
        for kind, arr, garr in (("weight", kern.weight, gkern.weight), ("bias", kern.bias, gkern.bias)):
            analytic = garr.copy()
            if perturb_grad and layer == 2 and kind == "weight":
                analytic.flat[0] += perturb_grad
            numeric = np.empty_like(analytic)
            for index in np.ndindex(arr.shape):
                numeric[index], used = probe.central_difference(layer, kind, index, step)
                n_kink += used != step
            err = relative_error(analytic, numeric, floor)
            n += err.size
            i = int(np.argmax(err))
            if err.flat[i] > worst[0]:
                idx = np.unravel_index(i, err.shape)
                worst = (float(err.flat[i]), f"conv{layer}.{kind}{list(map(int, idx))}")
    return GradcheckResult(worst[0], worst[1], n, n_kink, time.perf_counter() - t0, tolerance)
