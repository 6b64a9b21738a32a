"""Benchmark every noise setting of the main results table on a folder of images.

    python scripts/run_table.py --dir /data/kodak24 --out results/kodak24
    python scripts/run_table.py --dir /data/mcmaster18 --out results/mcmaster18 --jobs 8

Writes one CSV per setting and prints the per-setting averages.
"""

import argparse
from pathlib import Path

from zsn2n import experiments as ex
from zsn2n.denoiser import FitConfig

SETTINGS = [("gaussian", 25), ("gaussian", 50), ("poisson", 50), ("poisson", 10)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dir", required=True)
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--jobs", type=int, default=ex.default_jobs())
    ap.add_argument("--iters", type=int, default=2000)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [int(s) for s in args.seeds.split(",")]
    cfg = FitConfig(iterations=args.iters, lr_halving_steps=(args.iters // 2, args.iters * 3 // 4))
    for family, level in SETTINGS:
        rows = ex.run_bench(args.dir, family, [level], seeds, cfg, jobs=args.jobs)
        avg = ex.level_averages(rows)
        ex.write_csv(out / f"{family}{level:g}.csv", ex.BENCH_COLUMNS, ex.bench_records(rows + avg))
        for a in avg:
            print(f"{family} {level:g}: noisy {a.psnr_noisy:.2f} dB, denoised {a.psnr_denoised:.2f} dB, "
                  f"{a.seconds:.0f} s/image")


if __name__ == "__main__":
    main()
