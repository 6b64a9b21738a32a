"""Synthetic noise, quality metrics and seeded random streams.

Random streams
--------------
``rng_stream(seed, stream_id)`` is NumPy's PCG64 bit generator seeded by
``SeedSequence(entropy=seed, spawn_key=(stream_id,))``. Normal variates use
NumPy's ziggurat sampler; Poisson variates use NumPy's sampler (the
multiplication method for rates below 10, Hormann's PTRS transformed
rejection above). Fixing NumPy's bit-stream policy, these choices pin every
noise draw and every weight initialization.

Noise conventions
-----------------
Images are float arrays on [0, 1].

* gaussian, level ``sigma`` on the 0-255 scale: ``y = x + N(0, (sigma/255)^2)``
* poisson, level ``lam`` (events per unit intensity): ``y = Poisson(lam * x) / lam``

Noisy images are never clipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

# stream ids; one per consumer of randomness
STREAM_INIT = 0
STREAM_NOISE = 1
STREAM_TEST = 2


def rng_stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    if seed < 0 or stream_id < 0:
        raise ValueError("seed and stream_id must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))


class NoiseFamily(str, Enum):
    GAUSSIAN = "gaussian"
    POISSON = "poisson"


@dataclass(frozen=True)
class NoiseSpec:
    family: NoiseFamily
    level: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", NoiseFamily(self.family))
        if not self.level > 0:
            raise ValueError(f"noise level must be positive, got {self.level}")

    def to_dict(self) -> dict:
        return {"family": self.family.value, "level": float(self.level), "seed": int(self.seed)}


def add_noise(x: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Return a noisy copy of ``x`` (same dtype); deterministic given ``spec.seed``."""
    rng = rng_stream(spec.seed, STREAM_NOISE)
    if spec.family is NoiseFamily.GAUSSIAN:
        e = rng.standard_normal(x.shape) * (spec.level / 255.0)
        return (x + e).astype(x.dtype)
    if np.any(x < 0):
        raise ValueError("poisson noise needs non-negative intensities")
    lam = float(spec.level)
    counts = rng.poisson(lam * x.astype(np.float64))
    return (counts / lam).astype(x.dtype)


@dataclass(frozen=True)
class QualityMetrics:
    mse: float
    psnr_db: float

    def to_dict(self) -> dict:
        # JSON has no infinity
        psnr = self.psnr_db if math.isfinite(self.psnr_db) else None
        return {"mse": self.mse, "psnr_db": psnr}


def psnr(a: np.ndarray, b: np.ndarray) -> QualityMetrics:
    """MSE and PSNR with data range 1.0; identical inputs give infinite PSNR."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    mse = float(np.mean(d * d))
    if mse == 0.0:
        return QualityMetrics(0.0, math.inf)
    return QualityMetrics(mse, 10.0 * math.log10(1.0 / mse))
