"""Seconds per 100 iterations on a 256x256 RGB image, single process.

    OPENBLAS_NUM_THREADS=1 python scripts/timing.py
"""

import argparse

import numpy as np

from zsn2n.denoiser import FitConfig, denoise


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iters", type=int, default=50)
    ap.add_argument("--size", type=int, default=256)
    args = ap.parse_args()
    y = np.random.default_rng(0).random((3, args.size, args.size)).astype(np.float32)
    denoise(y, FitConfig(iterations=2))  # warm-up
    _, rep = denoise(y, FitConfig(iterations=args.iters))
    per100 = rep.seconds_per_100
    print(f"{per100:.1f} s / 100 iterations -> {per100 * 20:.0f} s projected for 2000 iterations")


if __name__ == "__main__":
    main()
