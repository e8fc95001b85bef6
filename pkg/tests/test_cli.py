"""End-to-end tests of the command line stages and their manifests."""

import csv

import numpy as np
import pytest

from dplab.cli import main
from dplab.imgcore import load_raw


def _run(*argv):
    return main(list(argv))


def _read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


@pytest.fixture()
def phantom_dir(tmp_path):
    out = tmp_path / "clean"
    assert _run("gen", "--count", "3", "--size", "32", "--seed", "5",
                "--out", str(out)) == 0
    return out


@pytest.fixture()
def noisy_dir(tmp_path, phantom_dir):
    out = tmp_path / "noisy"
    assert _run("corrupt", "--noise", "gaussian", "--in", str(phantom_dir),
                "--out", str(out), "--seed", "11") == 0
    return out


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def test_gen_outputs(phantom_dir):
    assert sorted(p.name for p in phantom_dir.glob("*.dplf")) == \
        [f"phantom_{i:04d}.dplf" for i in range(3)]
    assert len(list(phantom_dir.glob("*.pgm"))) == 3
    rows = _read_csv(phantom_dir / "manifest.csv")
    assert [r["id"] for r in rows] == [f"phantom_{i:04d}" for i in range(3)]


def test_gen_rerun_bit_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert _run("gen", "--count", "2", "--size", "32", "--seed", "9",
                    "--out", str(out)) == 0
    for name in [p.name for p in a.iterdir()]:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_gen_count_zero_usage_error(tmp_path):
    assert _run("gen", "--count", "0", "--out", str(tmp_path / "x")) == 2


# ---------------------------------------------------------------------------
# corrupt
# ---------------------------------------------------------------------------

def test_corrupt_defaults_and_seed_rule(noisy_dir):
    rows = _read_csv(noisy_dir / "manifest.csv")
    assert len(rows) == 3
    for index, row in enumerate(rows):
        assert row["noise"] == "gaussian"
        assert row["params"] == "mean=0.0;var=0.005"
        assert int(row["seed"]) == 11 + index
        assert (noisy_dir / row["noisy"]).exists()


def test_corrupt_speckle_defaults(tmp_path, phantom_dir):
    out = tmp_path / "sp"
    assert _run("corrupt", "--noise", "speckle", "--in", str(phantom_dir),
                "--out", str(out)) == 0
    rows = _read_csv(out / "manifest.csv")
    assert rows[0]["params"] == "mean=0.1;var=0.01"


def test_corrupt_zero_variance_identity(tmp_path, phantom_dir):
    out = tmp_path / "z"
    assert _run("corrupt", "--noise", "gaussian", "--in", str(phantom_dir),
                "--out", str(out), "--param", "var=0") == 0
    rows = _read_csv(out / "manifest.csv")
    for row in rows:
        clean = load_raw(row["clean"])
        noisy = load_raw(out / row["noisy"])
        assert np.array_equal(noisy, np.clip(clean, 0, 1))


def test_corrupt_unknown_noise(tmp_path, phantom_dir):
    assert _run("corrupt", "--noise", "saltpepper", "--in", str(phantom_dir),
                "--out", str(tmp_path / "x")) == 2


# ---------------------------------------------------------------------------
# denoise
# ---------------------------------------------------------------------------

def test_denoise_median(tmp_path, noisy_dir):
    out = tmp_path / "den"
    assert _run("denoise", "--algo", "median", "--in",
                str(noisy_dir / "manifest.csv"), "--out", str(out)) == 0
    rows = _read_csv(out / "manifest.csv")
    assert len(rows) == 3 and rows[0]["algorithm"] == "median"
    timings = _read_csv(out / "timings.csv")
    assert len(timings) == 3
    assert all(float(t["seconds"]) >= 0 for t in timings)


def test_denoise_bm3d_with_sigma(tmp_path, noisy_dir):
    out = tmp_path / "bm"
    assert _run("denoise", "--algo", "bm3d", "--in",
                str(noisy_dir / "manifest.csv"), "--out", str(out),
                "--sigma", "0.0707") == 0
    assert len(list(out.glob("denoised_*.dplf"))) == 3


def test_denoise_unknown_algo(tmp_path, noisy_dir, capsys):
    assert _run("denoise", "--algo", "unsharp", "--in",
                str(noisy_dir / "manifest.csv"), "--out", str(tmp_path / "x")) == 2
    err = capsys.readouterr().err
    assert "bm3d" in err and "median" in err  # lists valid names


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def test_train_writes_artifacts_and_is_deterministic(tmp_path, noisy_dir):
    outs = []
    for tag in ("t1", "t2"):
        out = tmp_path / tag
        assert _run("train", "--model", "dpl", "--data",
                    str(noisy_dir / "manifest.csv"), "--iters", "4",
                    "--batch", "2", "--seed", "3", "--depth", "1",
                    "--base", "4", "--out", str(out)) == 0
        assert (out / "checkpoint.dplw").exists()
        assert (out / "loss.csv").exists()
        assert (out / "val_metrics.csv").exists()
        outs.append(out)
    assert (outs[0] / "loss.csv").read_bytes() == (outs[1] / "loss.csv").read_bytes()
    assert (outs[0] / "checkpoint.dplw").read_bytes() == \
        (outs[1] / "checkpoint.dplw").read_bytes()


def test_train_unet_baseline(tmp_path, noisy_dir):
    out = tmp_path / "tu"
    assert _run("train", "--model", "unet", "--data",
                str(noisy_dir / "manifest.csv"), "--iters", "3",
                "--batch", "2", "--seed", "3", "--depth", "1",
                "--base", "4", "--out", str(out)) == 0
    rows = (out / "loss.csv").read_text().splitlines()
    assert rows[1].split(",")[1] == "0.0"  # l_n disabled for the baseline


def test_train_incompatible_size_exit_3(tmp_path):
    clean = tmp_path / "c30"
    assert _run("gen", "--count", "2", "--size", "30", "--seed", "1",
                "--out", str(clean)) == 0
    noisy = tmp_path / "n30"
    assert _run("corrupt", "--noise", "gaussian", "--in", str(clean),
                "--out", str(noisy)) == 0
    assert _run("train", "--model", "dpl", "--data", str(noisy / "manifest.csv"),
                "--iters", "2", "--depth", "2", "--base", "4",
                "--out", str(tmp_path / "t")) == 3


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def test_eval_on_corrupt_manifest(tmp_path, noisy_dir):
    out = tmp_path / "m.csv"
    assert _run("eval", "--pairs", str(noisy_dir / "manifest.csv"),
                "--csv", str(out)) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "image_id,algorithm,noise,mse,psnr_db,ssim"
    assert len(lines) == 1 + 3 + 1  # three noisy rows plus one aggregate


def test_eval_on_denoise_manifest(tmp_path, noisy_dir):
    den = tmp_path / "den"
    assert _run("denoise", "--algo", "mean", "--in",
                str(noisy_dir / "manifest.csv"), "--out", str(den)) == 0
    out = tmp_path / "m.csv"
    assert _run("eval", "--pairs", str(den / "manifest.csv"),
                "--csv", str(out)) == 0
    rows = _read_csv(out)
    algorithms = {r["algorithm"] for r in rows}
    assert algorithms == {"mean", "noisy"}


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def _bench_config(tmp_path, **kw):
    cfg = tmp_path / "bench.ini"
    values = {"out": tmp_path / "bench_out", "seed": 5, "count": 3,
              "size": 32, "noises": "gaussian,speckle",
              "algorithms": "median,wiener,noisy"}
    values.update(kw)
    lines = ["[bench]"] + [f"{k} = {v}" for k, v in values.items()]
    cfg.write_text("\n".join(lines) + "\n")
    return cfg


def test_bench_tables_and_reproducibility(tmp_path):
    cfg = _bench_config(tmp_path)
    assert _run("bench", "--config", str(cfg)) == 0
    out = tmp_path / "bench_out"
    psnr_rows = list(csv.reader((out / "results_psnr.csv").open()))
    assert psnr_rows[0] == ["algorithm", "gaussian", "speckle"]
    assert [r[0] for r in psnr_rows[1:]] == ["median", "noisy", "wiener"]
    for row in psnr_rows[1:]:
        assert all(cell != "error" for cell in row[1:])
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert _run("bench", "--config", str(cfg)) == 0
    for name, blob in first.items():
        assert (out / name).read_bytes() == blob


def test_bench_flag_overrides(tmp_path):
    cfg = _bench_config(tmp_path)
    out2 = tmp_path / "bench2"
    assert _run("bench", "--config", str(cfg), "--out", str(out2),
                "--noises", "gaussian", "--algorithms", "median,noisy",
                "--count", "2") == 0
    rows = list(csv.reader((out2 / "results_psnr.csv").open()))
    assert rows[0] == ["algorithm", "gaussian"]
    assert len(rows) == 3


def test_bench_failed_cell_exit_1(tmp_path):
    # 12x12 images are too small for bm3d (needs >= 2*block = 16)
    cfg = _bench_config(tmp_path, size=12)
    cfg_text = cfg.read_text().replace("median,wiener,noisy", "median,bm3d,noisy")
    cfg.write_text(cfg_text)
    assert _run("bench", "--config", str(cfg)) == 1
    rows = list(csv.reader(((tmp_path / "bench_out") / "results_psnr.csv").open()))
    table = {r[0]: r[1:] for r in rows[1:]}
    assert all(cell == "error" for cell in table["bm3d"])
    assert all(cell != "error" for cell in table["median"])


def test_bench_unknown_algorithm_usage_error(tmp_path):
    cfg = _bench_config(tmp_path)
    assert _run("bench", "--config", str(cfg), "--algorithms", "sharpen") == 2


def test_bench_model_rows(tmp_path, noisy_dir):
    train_out = tmp_path / "tr"
    assert _run("train", "--model", "unet", "--data",
                str(noisy_dir / "manifest.csv"), "--iters", "2",
                "--batch", "2", "--seed", "1", "--depth", "1",
                "--base", "4", "--out", str(train_out)) == 0
    cfg = tmp_path / "bench.ini"
    cfg.write_text("\n".join([
        "[bench]",
        f"out = {tmp_path / 'bm'}",
        "seed = 2", "count = 2", "size = 32",
        "noises = gaussian",
        "algorithms = noisy",
        "[models]",
        f"unet = {train_out / 'checkpoint.dplw'}",
    ]) + "\n")
    assert _run("bench", "--config", str(cfg)) == 0
    rows = list(csv.reader(((tmp_path / "bm") / "results_psnr.csv").open()))
    assert [r[0] for r in rows[1:]] == ["noisy", "unet"]
