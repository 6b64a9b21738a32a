"""Benchmark sweeps, ablations and the Noise2Noise = Noise2Clean check."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import jsonschema
import numpy as np

from .denoiser import FitConfig, REPORT_SCHEMA_VERSION, denoise, param_count
from .imageio import EIGHT_BIT_SUFFIXES, FLOAT_SUFFIX, center_crop, load_image
from .noise_lab import NoiseSpec, add_noise, psnr, rng_stream

# ---------------------------------------------------------------------------
# report schema
# ---------------------------------------------------------------------------

_METRICS = {
    "anyOf": [
        {"type": "null"},
        {
            "type": "object",
            "required": ["mse", "psnr_db"],
            "properties": {
                "mse": {"type": "number", "minimum": 0},
                "psnr_db": {"type": ["number", "null"]},
            },
        },
    ]
}
_NUM_LIST = {"type": "array", "items": {"type": "number"}}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "DenoiseReport",
    "type": "object",
    "required": ["schema_version", "config", "iterations", "metrics", "final_loss"],
    "properties": {
        "schema_version": {"const": REPORT_SCHEMA_VERSION},
        "input_path": {"type": ["string", "null"]},
        "noise": {
            "anyOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "required": ["family", "level", "seed"],
                    "properties": {
                        "family": {"enum": ["gaussian", "poisson"]},
                        "level": {"type": "number", "exclusiveMinimum": 0},
                        "seed": {"type": "integer"},
                    },
                },
            ]
        },
        "config": {
            "type": "object",
            "required": ["iterations", "learning_rate", "lr_halving_steps", "seed", "loss_variant", "hidden"],
            "properties": {
                "iterations": {"type": "integer", "minimum": 1},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "lr_halving_steps": {"type": "array", "items": {"type": "integer"}},
                "seed": {"type": "integer"},
                "loss_variant": {"enum": ["full", "no_symmetric", "no_consistency", "no_residual"]},
                "hidden": {"type": "integer", "minimum": 1},
            },
        },
        "iterations": {"type": "integer", "minimum": 1},
        "seconds": {"type": "number", "exclusiveMinimum": 0},
        "seconds_per_100_iterations": {"type": "number", "exclusiveMinimum": 0},
        "final_loss": {
            "type": "object",
            "required": ["residual", "consistency", "total"],
            "properties": {k: {"type": "number"} for k in ("residual", "consistency", "total")},
        },
        "metrics": {
            "type": "object",
            "required": ["noisy", "denoised"],
            "properties": {"noisy": _METRICS, "denoised": _METRICS},
        },
        "curve": {
            "type": "object",
            "required": ["residual", "consistency", "total", "clean_mse"],
            "properties": {
                "residual": _NUM_LIST,
                "consistency": _NUM_LIST,
                "total": _NUM_LIST,
                "clean_mse": {"anyOf": [{"type": "null"}, _NUM_LIST]},
            },
        },
    },
}


def validate_report(d: dict) -> None:
    jsonschema.validate(d, REPORT_SCHEMA)
    curve = d.get("curve")
    if curve is not None:
        for key in ("residual", "consistency", "total"):
            if len(curve[key]) != d["iterations"]:
                raise jsonschema.ValidationError(f"curve.{key} length != iterations")


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------


@dataclass
class BenchmarkRow:
    dataset: str
    image_id: str
    noise: str
    level: float
    seed: object
    psnr_noisy: float = math.nan
    psnr_denoised: float = math.nan
    seconds: float = math.nan
    error: str = ""


BENCH_COLUMNS = [f.name for f in fields(BenchmarkRow)]
IMAGE_SUFFIXES = EIGHT_BIT_SUFFIXES + (FLOAT_SUFFIX,)


def list_images(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory} is not a directory")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise FileNotFoundError(f"no images found in {directory}")
    return files


def _bench_job(args):
    path, dataset, family, level, seed, crop, config = args
    row = BenchmarkRow(dataset, Path(path).stem, family, level, seed)
    try:
        clean = load_image(path)
        if crop:
            clean = center_crop(clean, crop)
        noisy = add_noise(clean, NoiseSpec(family, level, seed))
        x_hat, report = denoise(noisy, replace(config, seed=seed))
        row.psnr_noisy = psnr(noisy, clean).psnr_db
        row.psnr_denoised = psnr(x_hat, clean).psnr_db
        row.seconds = report.seconds
    except Exception as exc:  # recorded per image, the sweep continues
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def run_bench(directory, family: str, levels: Sequence[float], seeds: Sequence[int],
              config: FitConfig = None, crop: int = 256, jobs: int = 1,
              progress: Callable[[BenchmarkRow], None] = None) -> list[BenchmarkRow]:
    """One row per (image, level, seed), sorted by image id, level, seed."""
    config = config or FitConfig()
    paths = list_images(directory)
    dataset = Path(directory).name
    tasks = [
        (str(p), dataset, family, float(level), int(seed), crop, config)
        for p in paths for level in levels for seed in seeds
    ]
    rows = []
    if jobs <= 1:
        for t in tasks:
            rows.append(_bench_job(t))
            if progress:
                progress(rows[-1])
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for row in pool.map(_bench_job, tasks):
                rows.append(row)
                if progress:
                    progress(row)
    rows.sort(key=lambda r: (r.image_id, r.level, r.seed))
    return rows


def level_averages(rows: Iterable[BenchmarkRow]) -> list[BenchmarkRow]:
    by_level: dict[float, list[BenchmarkRow]] = {}
    for r in rows:
        if not r.error:
            by_level.setdefault(r.level, []).append(r)
    out = []
    for level in sorted(by_level):
        rs = by_level[level]
        out.append(BenchmarkRow(
            rs[0].dataset, "AVERAGE", rs[0].noise, level, "",
            float(np.mean([r.psnr_noisy for r in rs])),
            float(np.mean([r.psnr_denoised for r in rs])),
            float(np.mean([r.seconds for r in rs])),
        ))
    return out


def _fmt(v, float_format):
    if isinstance(v, float):
        return "" if math.isnan(v) else format(v, float_format)
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[dict], float_format: str = ".4f") -> None:
    """RFC 4180 CSV (CRLF line ends); NaN is written as an empty field."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, ""), float_format) for c in columns])


def bench_records(rows, timings=True):
    recs = []
    for r in rows:
        d = {f: getattr(r, f) for f in BENCH_COLUMNS}
        if not timings:
            d["seconds"] = math.nan
        recs.append(d)
    return recs


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------

ABLATION_WIDTHS = (48, 20, 14, 10, 7)


@dataclass
class AblationRow:
    setting: str
    loss_variant: str
    hidden: int
    params: int
    psnr_noisy: float
    psnr_denoised: float
    seconds: float

    @property
    def gain(self) -> float:
        return self.psnr_denoised - self.psnr_noisy


ABLATION_COLUMNS = ["setting", "loss_variant", "hidden", "params", "psnr_noisy", "psnr_denoised", "gain", "seconds"]


def ablation_records(rows, timings=True):
    recs = []
    for r in rows:
        d = {c: getattr(r, c) for c in ABLATION_COLUMNS}
        if not timings:
            d["seconds"] = math.nan
        recs.append(d)
    return recs


def _ablation_run(noisy, clean, config, setting, denoise_fn):
    x_hat, report = denoise_fn(noisy, config)
    return AblationRow(
        setting, config.loss_variant, config.hidden, param_count(noisy.shape[0], config.hidden),
        psnr(noisy, clean).psnr_db, psnr(x_hat, clean).psnr_db, report.seconds,
    )


def ablate_loss(noisy, clean, config: FitConfig = None, denoise_fn=denoise) -> list[AblationRow]:
    """Run every loss variant with otherwise identical settings."""
    config = config or FitConfig()
    return [
        _ablation_run(noisy, clean, replace(config, loss_variant=v), v, denoise_fn)
        for v in ("full", "no_symmetric", "no_consistency", "no_residual")
    ]


def ablate_size(noisy, clean, config: FitConfig = None, widths=ABLATION_WIDTHS,
                denoise_fn=denoise) -> list[AblationRow]:
    """Shrink the hidden width; everything else fixed."""
    config = config or FitConfig()
    return [
        _ablation_run(noisy, clean, replace(config, hidden=h), f"width{h}", denoise_fn)
        for h in widths
    ]


# ---------------------------------------------------------------------------
# Noise2Noise == Noise2Clean
# ---------------------------------------------------------------------------

STRICT_SAMPLES = 10_000


@dataclass
class N2NResult:
    samples: int
    argmin_clean: float
    argmin_noisy: float
    grid_step: float
    tolerance_steps: float
    informational: bool

    @property
    def separation_steps(self) -> float:
        return abs(self.argmin_clean - self.argmin_noisy) / self.grid_step

    @property
    def passed(self) -> bool:
        # small epsilon absorbs grid rounding
        return self.separation_steps <= self.tolerance_steps + 1e-9


def verify_n2n(samples: int = 100_000, seed: int = 0, clean_value: float = 0.5,
               sigma: float = 0.2, bias: float = 0.0, grid_step: float = 1e-3) -> N2NResult:
    """Monte-Carlo check that noisy targets give the clean-target minimizer.

    Estimator family ``f_theta(y1) = theta``. Objective (i) is the mean of
    ``(theta - x)^2``, objective (ii) the mean of ``(theta - y2)^2`` with
    ``y2 = x + e2``, ``e2 ~ N(bias, sigma^2)``. Both are minimized over a
    grid on [0, 1]. ``bias`` != 0 breaks the zero-mean assumption.

    With at least ``STRICT_SAMPLES`` samples the argmins must agree within
    2 grid steps. Below that the check is informational and the tolerance
    widens to 4 standard errors of the sample mean.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = rng_stream(seed, 0)
    # the constant family never reads its input y1, so only y2 is drawn
    y2 = clean_value + bias + sigma * rng.standard_normal(samples)
    n_grid = int(round(1.0 / grid_step)) + 1
    grid = np.linspace(0.0, 1.0, n_grid)

    risk_clean = (grid - clean_value) ** 2
    risk_noisy = np.empty(n_grid)
    chunk = max(1, 4_000_000 // samples)
    for s in range(0, n_grid, chunk):
        th = grid[s : s + chunk, None]
        risk_noisy[s : s + chunk] = np.mean((th - y2[None, :]) ** 2, axis=1)

    informational = samples < STRICT_SAMPLES
    tol = 2.0
    if informational:
        tol = max(tol, 4.0 * sigma / math.sqrt(samples) / grid_step)
    return N2NResult(samples, float(grid[np.argmin(risk_clean)]), float(grid[np.argmin(risk_noisy)]),
                     grid_step, tol, informational)


def default_jobs() -> int:
    return os.cpu_count() or 1
