"""Command-line front end: ``zsn2n <command> [flags]``.

Exit status is 0 on success and 1 on any validation, I/O or check failure.
Wall-clock fields are the only nondeterministic outputs; ``--no-timings``
drops them so repeated runs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

from . import experiments as ex
from .denoiser import FitConfig, denoise
from .gradcheck import gradient_check
from .imageio import ImageFormatError, center_crop, is_float_path, load_image, save_image
from .noise_lab import NoiseSpec, add_noise, psnr

LOSS_FLAGS = {
    "full": "full",
    "no-sym": "no_symmetric",
    "no-cons": "no_consistency",
    "no-res": "no_residual",
}


class CommandError(Exception):
    pass


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_fit_flags(p):
    p.add_argument("--iters", type=int, default=2000, help="gradient steps (default 2000)")
    p.add_argument("--lr", type=float, default=1e-3, help="initial learning rate (default 1e-3)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-timings", action="store_true",
                   help="omit wall-clock fields from written reports")


def _fit_config(args, **overrides) -> FitConfig:
    # halving points scale with the iteration budget: 1/2 and 3/4 of the run
    steps = (args.iters // 2, args.iters * 3 // 4)
    kw = dict(iterations=args.iters, learning_rate=args.lr, lr_halving_steps=steps, seed=args.seed)
    kw.update(overrides)
    try:
        return FitConfig(**kw)
    except ValueError as exc:
        raise CommandError(str(exc))


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_denoise(args) -> int:
    y = load_image(args.input)
    clean = load_image(args.clean) if args.clean else None
    if clean is not None and clean.shape != y.shape:
        raise CommandError(f"--clean has shape {clean.shape}, input has {y.shape}")
    config = _fit_config(args, loss_variant=LOSS_FLAGS[args.loss])
    try:
        x_hat, report = denoise(y, config, clean=clean)
    except ValueError as exc:
        raise CommandError(str(exc))
    save_image(x_hat, args.output)
    report.input_path = str(args.input)

    if args.report:
        d = report.to_dict()
        if args.no_timings:
            d.pop("seconds")
            d.pop("seconds_per_100_iterations")
        ex.validate_report(d)
        _write_json(args.report, d)
    if args.curve:
        rows = []
        for i, (r, c, t) in enumerate(zip(report.residual, report.consistency, report.total)):
            row = {"iteration": i, "residual": r, "consistency": c, "total": t}
            row["clean_mse"] = report.clean_mse[i] if report.clean_mse is not None else math.nan
            rows.append(row)
        ex.write_csv(args.curve, ["iteration", "residual", "consistency", "total", "clean_mse"], rows,
                     float_format=".9g")

    if clean is not None:
        gain = report.denoised.psnr_db - report.noisy.psnr_db
        print(f"psnr noisy {report.noisy.psnr_db:.2f} dB -> denoised {report.denoised.psnr_db:.2f} dB "
              f"(gain {gain:+.2f} dB)")
    if not args.no_timings:
        print(f"{report.seconds:.1f} s ({report.seconds_per_100:.2f} s / 100 iterations)")
    return 0


def cmd_add_noise(args) -> int:
    x = load_image(args.input)
    if args.crop:
        try:
            x = center_crop(x, args.crop)
        except ValueError as exc:
            raise CommandError(str(exc))
    if not is_float_path(args.output) and not args.clip:
        raise CommandError(
            f"{args.output}: 8-bit output clips the noisy image to [0, 1]; pass --clip to accept "
            "that, or write a .zsf float image"
        )
    if args.clean_out:
        save_image(x, args.clean_out)
    try:
        y = add_noise(x, NoiseSpec(args.noise, args.level, args.seed))
    except ValueError as exc:
        raise CommandError(str(exc))
    save_image(y, args.output)
    print(f"psnr(noisy, clean) = {psnr(y, x).psnr_db:.2f} dB")
    return 0


def cmd_bench(args) -> int:
    config = _fit_config(args)
    jobs = args.jobs if args.jobs is not None else ex.default_jobs()

    def progress(row):
        if row.error:
            print(f"{row.image_id} level={row.level:g} seed={row.seed}: FAILED {row.error}", file=sys.stderr)
        else:
            print(f"{row.image_id} level={row.level:g} seed={row.seed}: "
                  f"{row.psnr_noisy:.2f} -> {row.psnr_denoised:.2f} dB", file=sys.stderr)

    try:
        rows = ex.run_bench(args.dir, args.noise, args.levels, args.seeds, config,
                            crop=args.crop, jobs=jobs, progress=progress)
    except FileNotFoundError as exc:
        raise CommandError(str(exc))
    averages = ex.level_averages(rows)
    ex.write_csv(args.out, ex.BENCH_COLUMNS, ex.bench_records(rows + averages, timings=not args.no_timings))
    for a in averages:
        print(f"average {a.noise} level={a.level:g}: noisy {a.psnr_noisy:.2f} dB, "
              f"denoised {a.psnr_denoised:.2f} dB")
    return 1 if any(r.error for r in rows) else 0


def cmd_gradcheck(args) -> int:
    res = gradient_check(seed=args.seed, size=args.size, hidden=args.hidden,
                         perturb_grad=args.perturb_grad)
    status = "PASS" if res.passed else "FAIL"
    print(f"{status} max relative error {res.max_rel_error:.3e} at {res.worst} "
          f"({res.n_params} parameters, {res.n_kink_adjusted} with reduced step near a ReLU kink, "
          f"tolerance {res.tolerance:g})")
    return 0 if res.passed else 1


def cmd_verify_n2n(args) -> int:
    res = ex.verify_n2n(samples=args.samples, seed=args.seed, bias=args.bias)
    mode = " [informational: few samples, tolerance widened]" if res.informational else ""
    status = "PASS" if res.passed else "FAIL"
    print(f"{status} argmin vs clean target {res.argmin_clean:.3f}, vs noisy target {res.argmin_noisy:.3f}; "
          f"separation {res.separation_steps:.0f} grid steps, tolerance {res.tolerance_steps:.1f}{mode}")
    return 0 if res.passed else 1


def cmd_ablate(args) -> int:
    noisy = load_image(args.input)
    clean = load_image(args.clean)
    if clean.shape != noisy.shape:
        raise CommandError(f"--clean has shape {clean.shape}, input has {noisy.shape}")
    config = _fit_config(args)
    if args.mode == "loss":
        rows = ex.ablate_loss(noisy, clean, config)
    else:
        rows = ex.ablate_size(noisy, clean, config)
    ex.write_csv(args.out, ex.ABLATION_COLUMNS, ex.ablation_records(rows, timings=not args.no_timings))
    for r in rows:
        print(f"{r.setting:<16} params={r.params:<6d} {r.psnr_noisy:.2f} -> {r.psnr_denoised:.2f} dB "
              f"(gain {r.gain:+.2f})")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zsn2n", description="Single-image denoising with no training data")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("denoise", help="denoise one image")
    p.add_argument("--input", required=True, help="noisy image (.png/.pgm/.ppm or .zsf)")
    p.add_argument("--output", required=True, help="denoised image; .zsf keeps float precision")
    p.add_argument("--clean", help="ground truth, enables PSNR and the clean-MSE curve")
    p.add_argument("--loss", choices=sorted(LOSS_FLAGS), default="full")
    p.add_argument("--report", help="write a JSON report here")
    p.add_argument("--curve", help="write the per-iteration loss curve as CSV here")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("add-noise", help="synthesize a noisy image")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help=".zsf float image, or 8-bit with --clip")
    p.add_argument("--noise", choices=["gaussian", "poisson"], required=True)
    p.add_argument("--level", type=float, required=True,
                   help="sigma on the 0-255 scale (gaussian) or lambda (poisson)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--crop", type=int, help="center-crop to NxN before adding noise")
    p.add_argument("--clip", action="store_true", help="allow clipping to 8-bit output")
    p.add_argument("--clean-out", help="also write the (cropped) clean image here")
    p.set_defaults(func=cmd_add_noise)

    p = sub.add_parser("bench", help="benchmark a directory of clean images")
    p.add_argument("--dir", required=True)
    p.add_argument("--noise", choices=["gaussian", "poisson"], required=True)
    p.add_argument("--levels", type=_float_list, required=True, help="e.g. 10,25,50")
    p.add_argument("--seeds", type=_int_list, default=[0], help="e.g. 0,1,2")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--crop", type=int, default=256, help="center crop size, 0 disables")
    p.add_argument("--jobs", type=int, help="parallel images (default: CPU count)")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", help="finite-difference check of the loss gradient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--hidden", type=int, default=48)
    p.add_argument("--perturb-grad", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("verify-n2n", help="Monte-Carlo check that noisy targets recover the clean minimizer")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bias", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify_n2n)

    p = sub.add_parser("ablate", help="loss-variant or network-width ablation on one image")
    p.add_argument("--input", required=True, help="noisy image")
    p.add_argument("--clean", required=True)
    p.add_argument("--mode", choices=["loss", "size"], required=True)
    p.add_argument("--out", required=True, help="CSV output path")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; this tool reports every failure as 1
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (CommandError, ImageFormatError, OSError, csv.Error) as exc:
        print(f"zsn2n {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
