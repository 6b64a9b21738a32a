import csv
import json

import numpy as np
import pytest

from zsn2n.cli import main
from zsn2n.experiments import validate_report
from zsn2n.imageio import load_image, save_image

FAST = ["--iters", "6"]


@pytest.fixture
def small_clean(tmp_path, bundled_images):
    """A 32x32 crop of a bundled image plus its gaussian sigma=25 noisy copy."""
    clean = tmp_path / "clean.png"
    noisy = tmp_path / "noisy.zsf"
    assert main(["add-noise", "--input", str(bundled_images[0]), "--output", str(noisy), "--noise", "gaussian",
                 "--level", "25", "--seed", "7", "--crop", "32", "--clean-out", str(clean)]) == 0
    return clean, noisy


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_missing_input_is_usage_error(capsys):
    assert main(["denoise", "--output", "x.png"]) == 1
    assert "--input" in capsys.readouterr().err


def test_unreadable_input(tmp_path, capsys):
    assert main(["denoise", "--input", str(tmp_path / "nope.png"), "--output", str(tmp_path / "o.png")]) == 1
    assert "error" in capsys.readouterr().err


def test_add_noise_deterministic_bytes(tmp_path, bundled_images):
    outs = []
    for i in range(2):
        p = tmp_path / f"n{i}.zsf"
        assert main(["add-noise", "--input", str(bundled_images[1]), "--output", str(p),
                     "--noise", "gaussian", "--level", "25", "--seed", "7"]) == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]


def test_add_noise_8bit_needs_clip(tmp_path, bundled_images, capsys):
    args = ["add-noise", "--input", str(bundled_images[0]), "--output", str(tmp_path / "n.png"),
            "--noise", "poisson", "--level", "50"]
    assert main(args) == 1
    assert "--clip" in capsys.readouterr().err
    assert main(args + ["--clip"]) == 0


def test_add_noise_poisson_black(tmp_path):
    black = tmp_path / "black.png"
    save_image(np.zeros((3, 8, 8)), black)
    out = tmp_path / "n.zsf"
    assert main(["add-noise", "--input", str(black), "--output", str(out), "--noise", "poisson", "--level", "50"]) == 0
    assert not load_image(out).any()


def test_add_noise_reported_psnr(tmp_path, bundled_images, capsys):
    main(["add-noise", "--input", str(bundled_images[0]), "--output", str(tmp_path / "n.zsf"),
          "--noise", "gaussian", "--level", "25", "--seed", "1"])
    db = float(capsys.readouterr().out.split("=")[1].split()[0])
    assert abs(db - 20.2) <= 0.3


def test_denoise_writes_outputs(tmp_path, small_clean, capsys):
    clean, noisy = small_clean
    out, report, curve = tmp_path / "d.png", tmp_path / "r.json", tmp_path / "c.csv"
    assert main(["denoise", "--input", str(noisy), "--clean", str(clean), "--output", str(out),
                 "--report", str(report), "--curve", str(curve)] + FAST) == 0
    assert "gain" in capsys.readouterr().out
    assert load_image(out).shape == (3, 32, 32)
    d = json.loads(report.read_text())
    validate_report(d)
    assert d["iterations"] == 6 and d["seconds"] > 0
    assert len(d["curve"]["clean_mse"]) == 6
    assert len(read_csv(curve)) == 6


def test_denoise_deterministic(tmp_path, small_clean):
    clean, noisy = small_clean
    blobs = []
    for i in range(2):
        paths = [tmp_path / f"d{i}.zsf", tmp_path / f"r{i}.json", tmp_path / f"c{i}.csv"]
        assert main(["denoise", "--input", str(noisy), "--clean", str(clean), "--output", str(paths[0]),
                     "--report", str(paths[1]), "--curve", str(paths[2]), "--no-timings"] + FAST) == 0
        blobs.append([p.read_bytes() for p in paths])
    assert blobs[0] == blobs[1]


def test_denoise_shape_mismatch(tmp_path, small_clean, bundled_images):
    _, noisy = small_clean
    assert main(["denoise", "--input", str(noisy), "--clean", str(bundled_images[0]),
                 "--output", str(tmp_path / "o.png")] + FAST) == 1


@pytest.fixture
def tiny_dir(tmp_path, bundled_images):
    d = tmp_path / "imgs"
    d.mkdir()
    for p in bundled_images[:3]:
        (d / p.name).write_bytes(p.read_bytes())
    return d


def test_bench_counts_and_order(tmp_path, tiny_dir, capsys):
    out = tmp_path / "b.csv"
    assert main(["bench", "--dir", str(tiny_dir), "--noise", "gaussian", "--levels", "50,25", "--seeds", "0",
                 "--out", str(out), "--crop", "16", "--jobs", "1"] + FAST) == 0
    rows = read_csv(out)
    data = [r for r in rows if r["image_id"] != "AVERAGE"]
    avgs = [r for r in rows if r["image_id"] == "AVERAGE"]
    assert len(data) == 6 and len(avgs) == 2
    keys = [(r["image_id"], float(r["level"]), r["seed"]) for r in data]
    assert keys == sorted(keys)
    assert capsys.readouterr().out.count("average") == 2


def test_bench_deterministic_and_parallel(tmp_path, tiny_dir):
    blobs = []
    for jobs in ("1", "2"):
        out = tmp_path / f"b{jobs}.csv"
        assert main(["bench", "--dir", str(tiny_dir), "--noise", "poisson", "--levels", "50", "--seeds", "0,1",
                     "--out", str(out), "--crop", "16", "--jobs", jobs, "--no-timings"] + FAST) == 0
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1]


def test_bench_empty_dir(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["bench", "--dir", str(tmp_path / "empty"), "--noise", "gaussian", "--levels", "25",
                 "--out", str(tmp_path / "b.csv")]) == 1
    assert "no images" in capsys.readouterr().err


def test_bench_records_per_image_failure(tmp_path, tiny_dir):
    (tiny_dir / "broken.png").write_bytes(b"garbage")
    out = tmp_path / "b.csv"
    assert main(["bench", "--dir", str(tiny_dir), "--noise", "gaussian", "--levels", "25",
                 "--out", str(out), "--crop", "16", "--jobs", "1"] + FAST) == 1
    rows = read_csv(out)
    assert [r["image_id"] for r in rows if r["error"]] == ["broken"]
    assert len(rows) == 4 + 1


def test_gradcheck_commands():
    assert main(["gradcheck", "--size", "8"]) == 0
    assert main(["gradcheck", "--size", "8", "--hidden", "8", "--perturb-grad", "1e-3"]) == 1


def test_verify_n2n_commands(capsys):
    assert main(["verify-n2n"]) == 0
    assert main(["verify-n2n", "--bias", "0.1"]) == 1
    assert main(["verify-n2n", "--samples", "100"]) == 0
    assert "informational" in capsys.readouterr().out


@pytest.mark.parametrize("mode,n", [("loss", 4), ("size", 5)])
def test_ablate_modes(tmp_path, small_clean, mode, n):
    clean, noisy = small_clean
    outs = []
    for i in range(2):
        out = tmp_path / f"{mode}{i}.csv"
        assert main(["ablate", "--input", str(noisy), "--clean", str(clean), "--mode", mode,
                     "--out", str(out), "--no-timings", "--iters", "3"]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert len(read_csv(tmp_path / f"{mode}0.csv")) == n


def test_ablate_width48_matches_denoise(tmp_path, small_clean):
    clean, noisy = small_clean
    abl = tmp_path / "a.csv"
    den = tmp_path / "d.zsf"
    main(["ablate", "--input", str(noisy), "--clean", str(clean), "--mode", "size", "--out", str(abl),
          "--iters", "3"])
    main(["denoise", "--input", str(noisy), "--clean", str(clean), "--output", str(den), "--iters", "3"])
    row = read_csv(abl)[0]
    assert row["hidden"] == "48"
    from zsn2n.noise_lab import psnr
    assert float(row["psnr_denoised"]) == pytest.approx(psnr(load_image(den), load_image(clean)).psnr_db, abs=1e-4)
