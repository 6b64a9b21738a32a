"""Loss-variant and width ablations on the bundled images (gaussian sigma=25).

    python scripts/ablations.py --out results/ablations.csv
"""

import argparse
from dataclasses import asdict
from pathlib import Path

from zsn2n import experiments as ex
from zsn2n.denoiser import FitConfig
from zsn2n.imageio import center_crop, load_image
from zsn2n.noise_lab import NoiseSpec, add_noise

DATA = Path(__file__).resolve().parents[1] / "src" / "zsn2n" / "data"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="ablations.csv")
    ap.add_argument("--sigma", type=float, default=25)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    records = []
    for path in sorted(DATA.glob("*.png")):
        clean = center_crop(load_image(path), 256)
        noisy = add_noise(clean, NoiseSpec("gaussian", args.sigma, args.seed))
        cfg = FitConfig(seed=args.seed)
        rows = ex.ablate_loss(noisy, clean, cfg) + ex.ablate_size(noisy, clean, cfg, widths=ex.ABLATION_WIDTHS[1:])
        for r in rows:
            rec = asdict(r) | {"image": path.stem, "gain": r.gain}
            records.append(rec)
            print(f"{path.stem:<10} {r.setting:<15} {r.psnr_denoised:.2f} dB (gain {r.gain:+.2f})", flush=True)
    ex.write_csv(args.out, ["image"] + ex.ABLATION_COLUMNS, records)


if __name__ == "__main__":
    main()
