"""Clean-image MSE and PSNR of the estimate over the course of one fit.

Writes a CSV (iteration, clean_mse, psnr_db, total loss) and, if matplotlib
is installed, a PNG plot next to it.

    python scripts/perf_vs_iterations.py --image src/zsn2n/data/astronaut.png --sigma 25
"""

import argparse
import math
from pathlib import Path

from zsn2n.denoiser import FitConfig, denoise
from zsn2n.experiments import write_csv
from zsn2n.imageio import center_crop, load_image
from zsn2n.noise_lab import NoiseSpec, add_noise, psnr


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--image", required=True)
    ap.add_argument("--sigma", type=float, default=25)
    ap.add_argument("--iters", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="perf_vs_iterations.csv")
    args = ap.parse_args()

    clean = center_crop(load_image(args.image), 256)
    noisy = add_noise(clean, NoiseSpec("gaussian", args.sigma, args.seed))
    cfg = FitConfig(iterations=args.iters, seed=args.seed,
                    lr_halving_steps=(args.iters // 2, args.iters * 3 // 4))
    x_hat, rep = denoise(noisy, cfg, clean=clean)
    mses = rep.clean_mse + [psnr(x_hat, clean).mse]
    totals = rep.total + [math.nan]
    rows = [{"iteration": t, "clean_mse": m, "psnr_db": 10 * math.log10(1 / m), "loss": totals[t]}
            for t, m in enumerate(mses)]
    write_csv(args.out, ["iteration", "clean_mse", "psnr_db", "loss"], rows, float_format=".9g")
    print(f"noisy {rep.noisy.psnr_db:.2f} dB, final {rep.denoised.psnr_db:.2f} dB, {rep.seconds:.0f} s")

    try:
        import matplotlib
    except ImportError:
        return
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot([r["iteration"] for r in rows], [r["psnr_db"] for r in rows])
    ax.set_xlabel("iteration")
    ax.set_ylabel("PSNR of estimate (dB)")
    fig.tight_layout()
    fig.savefig(Path(args.out).with_suffix(".png"), dpi=120)


if __name__ == "__main__":
    main()
