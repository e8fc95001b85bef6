"""Benchmark command line: generate, corrupt, denoise, train, eval, bench.

Stages couple only through manifest CSV files, so each can run in its own
process. Exit codes: 0 success, 1 partial bench failure, 2 usage error,
3 data/model incompatibility.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import dpl as dpl_mod
from .classic import FILTERS, estimate_sigma, run_filter
from .imgcore import PhantomSpec, gen_phantom, load_raw, save_pgm, save_raw
from .metrics import MetricReport
from .noise import DEFAULT_PARAMS, FAMILIES, NoiseSpec

# seed spacing between noise families in a bench run, so per-image seeds
# (base + index) never collide across families
_FAMILY_SEED_STRIDE = 1_000_000


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _parse_value(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _parse_params(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--param expects k=v, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = _parse_value(value.strip())
    return out


def _write_manifest(path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_manifest(path) -> list:
    try:
        with open(path, newline="") as f:
            return list(csv.DictReader(f))
    except OSError as e:
        raise UsageError(f"cannot read manifest {path}: {e}") from e


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(args.count):
        spec = PhantomSpec(size=args.size, ellipse_count=args.ellipses,
                           texture_amplitude=args.texture, seed=args.seed + i)
        img = gen_phantom(spec)
        name = f"phantom_{i:04d}"
        save_raw(img, out / f"{name}.dplf")
        save_pgm(img, out / f"{name}.pgm")
        rows.append([name, f"{name}.dplf", f"{name}.pgm"])
    _write_manifest(out / "manifest.csv", ["id", "dplf", "pgm"], rows)
    print(f"wrote {args.count} phantoms to {out}")
    return 0


# ---------------------------------------------------------------------------
# corrupt
# ---------------------------------------------------------------------------

def _clean_inputs(in_path) -> list:
    """(id, path) pairs from a gen manifest or a directory of .dplf files."""
    p = Path(in_path)
    if p.is_dir():
        manifest = p / "manifest.csv"
        if manifest.exists():
            return [(r["id"], p / r["dplf"]) for r in _read_manifest(manifest)]
        files = sorted(p.glob("*.dplf"))
        if not files:
            raise UsageError(f"no .dplf files in {p}")
        return [(f.stem, f) for f in files]
    if p.suffix == ".csv":
        return [(r["id"], p.parent / r["dplf"]) for r in _read_manifest(p)]
    raise UsageError(f"--in must be a directory or manifest csv, got {p}")


def _fmt_params(params: dict) -> str:
    return ";".join(f"{k}={params[k]}" for k in sorted(params))


def cmd_corrupt(args) -> int:
    if args.noise not in FAMILIES:
        raise UsageError(f"unknown noise {args.noise!r}; choose from "
                         f"{', '.join(FAMILIES)}")
    params = _parse_params(args.param)
    inputs = _clean_inputs(getattr(args, "in"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for index, (image_id, clean_path) in enumerate(inputs):
        seed = args.seed + index
        try:
            spec = NoiseSpec(args.noise, params, seed=seed)
        except ValueError as e:
            raise UsageError(str(e)) from e
        noisy = spec.apply(load_raw(clean_path))
        noisy_path = out / f"noisy_{image_id}.dplf"
        save_raw(noisy, noisy_path)
        rows.append([image_id, str(Path(clean_path).resolve()),
                     noisy_path.name, args.noise, _fmt_params(spec.params), seed])
    _write_manifest(out / "manifest.csv",
                    ["id", "clean", "noisy", "noise", "params", "seed"], rows)
    print(f"corrupted {len(rows)} images with {args.noise} noise into {out}")
    return 0


# ---------------------------------------------------------------------------
# denoise
# ---------------------------------------------------------------------------

def cmd_denoise(args) -> int:
    if args.algo not in FILTERS:
        raise UsageError(f"unknown algorithm {args.algo!r}; valid names: "
                         f"{', '.join(sorted(FILTERS))}")
    params = _parse_params(args.param)
    manifest_path = Path(getattr(args, "in"))
    entries = _read_manifest(manifest_path)
    if not entries:
        raise UsageError(f"empty manifest {manifest_path}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, timings = [], []
    for entry in entries:
        noisy = load_raw(manifest_path.parent / entry["noisy"])
        t0 = time.perf_counter()
        try:
            result = run_filter(args.algo, noisy, sigma=args.sigma, **params)
        except (TypeError, ValueError) as e:
            raise DataError(f"{args.algo} failed on {entry['id']}: {e}") from e
        timings.append([entry["id"], repr(time.perf_counter() - t0)])
        denoised_path = out / f"denoised_{entry['id']}.dplf"
        save_raw(result, denoised_path)
        rows.append([entry["id"], entry["clean"],
                     str((manifest_path.parent / entry["noisy"]).resolve()),
                     denoised_path.name, args.algo, entry.get("noise", "unknown")])
    _write_manifest(out / "manifest.csv",
                    ["id", "clean", "noisy", "denoised", "algorithm", "noise"],
                    rows)
    _write_manifest(out / "timings.csv", ["id", "seconds"], timings)
    print(f"denoised {len(rows)} images with {args.algo} into {out}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _load_pairs(manifest_path) -> tuple:
    manifest_path = Path(manifest_path)
    entries = _read_manifest(manifest_path)
    if not entries:
        raise UsageError(f"empty manifest {manifest_path}")
    pairs, noise = [], "unknown"
    for entry in entries:
        clean = load_raw(Path(entry["clean"]) if Path(entry["clean"]).is_absolute()
                         else manifest_path.parent / entry["clean"])
        noisy = load_raw(manifest_path.parent / entry["noisy"])
        pairs.append((noisy, clean))
        noise = entry.get("noise", noise)
    return pairs, noise


def cmd_train(args) -> int:
    pairs, noise = _load_pairs(args.data)
    config = dpl_mod.TrainConfig(model=args.model, iters=args.iters,
                                 batch_size=args.batch, lr=args.lr,
                                 seed=args.seed, depth=args.depth,
                                 base_channels=args.base)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = dpl_mod.train(config, pairs, noise_family=noise)
    except ValueError as e:
        raise DataError(str(e)) from e
    except dpl_mod.TrainingError as e:
        raise DataError(f"training aborted: {e}") from e
    dpl_mod.save_model(result.model, out / "checkpoint.dplw")
    dpl_mod.write_loss_curve(result.curve, out / "loss.csv")
    result.val_report.write_csv(out / "val_metrics.csv")
    print(f"trained {args.model} for {args.iters} iterations; "
          f"best validation PSNR {result.best_val_psnr:.2f} dB at "
          f"iteration {result.best_iter}; artifacts in {out}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    manifest_path = Path(args.pairs)
    entries = _read_manifest(manifest_path)
    if not entries:
        raise UsageError(f"empty manifest {manifest_path}")
    report = MetricReport()
    for entry in entries:
        clean = load_raw(Path(entry["clean"]) if Path(entry["clean"]).is_absolute()
                         else manifest_path.parent / entry["clean"])
        noise = entry.get("noise", "unknown")
        noisy = load_raw(manifest_path.parent / entry["noisy"])
        if "denoised" in entry and entry["denoised"]:
            denoised = load_raw(manifest_path.parent / entry["denoised"])
            report.add(entry["id"], entry.get("algorithm", "denoised"),
                       noise, denoised, clean)
        report.add(entry["id"], "noisy", noise, noisy, clean)
    report.write_csv(args.csv)
    print(f"wrote {len(report.rows)} metric rows to {args.csv}")
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def _load_bench_config(args) -> dict:
    cfg = {
        "out": "bench_out", "seed": 7, "count": 8, "size": 64,
        "ellipses": 3, "texture": 0.03,
        "noises": ["gaussian"], "algorithms": ["median", "bm3d", "noisy"],
        "data": None, "noise_params": {}, "models": {},
    }
    if args.config:
        parser = configparser.ConfigParser()
        read = parser.read(args.config)
        if not read:
            raise UsageError(f"cannot read config file {args.config}")
        if parser.has_section("bench"):
            section = parser["bench"]
            cfg["out"] = section.get("out", cfg["out"])
            cfg["seed"] = section.getint("seed", cfg["seed"])
            cfg["count"] = section.getint("count", cfg["count"])
            cfg["size"] = section.getint("size", cfg["size"])
            cfg["data"] = section.get("data", None)
            if "noises" in section:
                cfg["noises"] = [s.strip() for s in section["noises"].split(",") if s.strip()]
            if "algorithms" in section:
                cfg["algorithms"] = [s.strip() for s in section["algorithms"].split(",") if s.strip()]
        if parser.has_section("phantom"):
            cfg["ellipses"] = parser["phantom"].getint("ellipses", cfg["ellipses"])
            cfg["texture"] = parser["phantom"].getfloat("texture", cfg["texture"])
        for family in FAMILIES:
            section_name = f"noise.{family}"
            if parser.has_section(section_name):
                cfg["noise_params"][family] = {
                    k: float(v) for k, v in parser[section_name].items()}
        if parser.has_section("models"):
            cfg["models"] = dict(parser["models"].items())
    # flag overrides
    for key in ("out", "seed", "count", "size"):
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    if args.noises:
        cfg["noises"] = [s.strip() for s in args.noises.split(",") if s.strip()]
    if args.algorithms:
        cfg["algorithms"] = [s.strip() for s in args.algorithms.split(",") if s.strip()]
    return cfg


def _bench_clean_set(cfg) -> list:
    if cfg["data"]:
        inputs = _clean_inputs(cfg["data"])
        return [(image_id, load_raw(path)) for image_id, path in inputs]
    out = []
    for i in range(cfg["count"]):
        spec = PhantomSpec(size=cfg["size"], ellipse_count=cfg["ellipses"],
                           texture_amplitude=cfg["texture"],
                           seed=cfg["seed"] + i)
        out.append((f"phantom_{i:04d}", gen_phantom(spec)))
    return out


def cmd_bench(args) -> int:
    cfg = _load_bench_config(args)
    if cfg["count"] < 1:
        raise UsageError("count must be >= 1")
    unknown = [n for n in cfg["noises"] if n not in FAMILIES]
    if unknown:
        raise UsageError(f"unknown noise families {unknown}")
    for name in cfg["algorithms"]:
        if name != "noisy" and name not in FILTERS:
            raise UsageError(f"unknown algorithm {name!r}; valid names: "
                             f"noisy, {', '.join(sorted(FILTERS))}")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    clean_set = _bench_clean_set(cfg)

    models = {}
    for name, ckpt in cfg["models"].items():
        models[name] = dpl_mod.load_model(ckpt)

    detail = MetricReport()
    cells = {}       # (row_name, family) -> "ok" | "error"
    failed = False
    for family_index, family in enumerate(cfg["noises"]):
        base_seed = cfg["seed"] + _FAMILY_SEED_STRIDE * (family_index + 1)
        params = cfg["noise_params"].get(family, {})
        noisy_set = []
        for index, (image_id, clean) in enumerate(clean_set):
            spec = NoiseSpec(family, params, seed=base_seed + index)
            noisy_set.append((image_id, clean, spec.apply(clean)))

        def run_cell(row_name, fn):
            nonlocal failed
            try:
                for image_id, clean, noisy in noisy_set:
                    detail.add(image_id, row_name, family, fn(noisy), clean)
                cells[(row_name, family)] = "ok"
            except Exception as e:  # a failed cell must not kill the run
                cells[(row_name, family)] = "error"
                failed = True
                print(f"cell ({row_name}, {family}) failed: {e}", file=sys.stderr)

        for algo in cfg["algorithms"]:
            if algo == "noisy":
                run_cell("noisy", lambda img: img)
            else:
                run_cell(algo, lambda img, algo=algo: run_filter(algo, img))
        for name, model in models.items():
            run_cell(name, lambda img, m=model: dpl_mod.predict(m, img))

    _write_bench_tables(detail, cells, cfg["noises"], out)
    detail.write_csv(out / "results_detail.csv")
    print(f"bench wrote results_psnr.csv, results_ssim.csv, "
          f"results_detail.csv to {out}")
    return 1 if failed else 0


def _write_bench_tables(detail, cells, families, out: Path) -> None:
    aggregates = {(r.algorithm, r.noise): r for r in detail.aggregates()}
    row_names = sorted({name for name, _ in cells})
    for metric, filename in (("psnr_db", "results_psnr.csv"),
                             ("ssim", "results_ssim.csv")):
        rows = []
        for name in row_names:
            row = [name]
            for family in families:
                state = cells.get((name, family))
                if state == "ok":
                    value = getattr(aggregates[(name, family)], metric)
                    row.append("inf" if math.isinf(value) else repr(value))
                else:
                    row.append("error")
            rows.append(row)
        _write_manifest(out / filename, ["algorithm"] + families, rows)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dplab",
        description="image denoising laboratory: phantoms, noise, classical "
                    "filters, dual-path model, and benchmark reports")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate phantom images")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--ellipses", type=int, default=3)
    p.add_argument("--texture", type=float, default=0.03)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("corrupt", help="add noise to clean images")
    p.add_argument("--noise", required=True)
    p.add_argument("--in", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--param", action="append", metavar="K=V")
    p.set_defaults(fn=cmd_corrupt)

    p = sub.add_parser("denoise", help="run a classical filter over a manifest")
    p.add_argument("--algo", required=True)
    p.add_argument("--in", required=True, help="corrupt-stage manifest csv")
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--param", action="append", metavar="K=V")
    p.set_defaults(fn=cmd_denoise)

    p = sub.add_parser("train", help="train the dual-path or baseline model")
    p.add_argument("--model", choices=["dpl", "unet"], default="dpl")
    p.add_argument("--data", required=True, help="corrupt-stage manifest csv")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--base", type=int, default=16)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="score a pairs manifest into a metrics csv")
    p.add_argument("--pairs", required=True)
    p.add_argument("--csv", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="run the full noise x algorithm table")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--noises", default=None)
    p.add_argument("--algorithms", default=None)
    p.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
