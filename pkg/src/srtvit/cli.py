"""Command-line entry point: ``srtvit <subcommand> [flags]``.

Exit codes: 0 success, 1 runtime or model error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import bench as benchmod
from .errors import SRTError
from .fields import write_srtf
from .parallel import ForwardPool
from .perturb import build_grid, sample_shifts
from .pipeline import (
    AggregationSpec,
    aggregate_dense,
    immerse,
    noise_map,
    retokenize,
    srt_tokens_efficient,
    upsample_pc,
)
from .ppm import read_ppm, write_ppm
from .sr_scalar import DitherSpec, Quantizer, mse_sweep, ramp
from .synthetic import random_image
from .vit import ViTConfig
from .viz import fit_pca, render_pca, render_scalar
from .weights import load_weights, make_toy_weights, read_container, save_container, tensor_checksum

DEFAULTS = {
    "layer": None,
    "d": 3,
    "stat": "mean",
    "masked": "on",
    "path": "both",
    "out": "out",
    "seed": 0,
    "jobs": 1,
    "samples": None,
    "override_shift_bound": False,
    "gamma": 0.5,
}


class UsageError(Exception):
    pass


def sha256_bytes(b: bytes) -> str:
    return hashlib.sha256(b).hexdigest()


def sha256_file(path) -> str:
    with open(path, "rb") as f:
        return sha256_bytes(f.read())


def _array_digest(a: np.ndarray) -> str:
    return sha256_bytes(np.ascontiguousarray(a, dtype="<f4").tobytes())


def _common(p: argparse.ArgumentParser, image: bool = True) -> None:
    p.add_argument("--config", help="JSON file with run settings; explicit flags take precedence")
    p.add_argument("--weights", help="VITW weight container")
    if image:
        p.add_argument("--image", help="input PPM/PGM image")
    p.add_argument("--layer", type=int, help="tap layer, 0..depth (default: depth)")
    p.add_argument("--d", type=int, help="perturbation level in pixels (default 3)")
    p.add_argument("--stat", choices=["mean", "median", "variance"])
    p.add_argument("--masked", choices=["on", "off"])
    p.add_argument("--path", choices=["naive", "efficient", "both"])
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="worker processes for per-shift forwards")
    p.add_argument("--samples", type=int, help="draw this many random shifts instead of the full grid")
    p.add_argument("--override-shift-bound", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srtvit", description="Sub-token translation ensembling for ViT features")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_ in (
        ("enhance", "write the ensembled dense field, pooled tokens and a run manifest"),
        ("visualize", "PCA-to-RGB rendering of the ensembled dense field"),
        ("noise-map", "per-pixel distance between ensemble and single pass, plus histogram"),
    ):
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "noise-map":
            p.add_argument("--gamma", type=float)

    p = sub.add_parser("bench", help="naive vs efficient vs parallel timing and memory")
    _common(p)
    p.add_argument("--levels", default="1,2,3", help="comma-separated perturbation levels")
    p.add_argument("--repeat", type=int, default=3)

    p = sub.add_parser("sr1d", help="scalar stochastic-resonance MSE sweep")
    p.add_argument("--quantizer", choices=["round", "floor"], default="round")
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--dither", choices=["uniform", "gaussian", "none"], default="uniform")
    p.add_argument("--scale", type=float, default=0.5, help="uniform half-width or gaussian sigma")
    p.add_argument("--t", type=int, default=256, help="dither samples per signal value")
    p.add_argument("--n", type=int, default=100, help="ramp length")
    p.add_argument("--ramp-step", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")

    p = sub.add_parser("make-toy", help="write seeded toy weights")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output .vitw path")
    p.add_argument("--img-size", type=int, default=64)
    p.add_argument("--patch", type=int, default=8)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--mlp-ratio", type=float, default=4.0)
    p.add_argument("--no-cls", action="store_true")

    p = sub.add_parser("inspect-weights", help="print a container's config and tensor index")
    p.add_argument("--weights", required=True)
    return parser


def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as f:
                cfg = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read --config: {exc}") from None
    for key, default in DEFAULTS.items():
        if not hasattr(args, key):
            continue
        if getattr(args, key) is None:
            setattr(args, key, cfg.get(key, default))
    for key in ("weights", "image"):
        if hasattr(args, key) and getattr(args, key) is None and key in cfg:
            setattr(args, key, cfg[key])
    if isinstance(getattr(args, "masked", None), bool):
        args.masked = "on" if args.masked else "off"
    return args


def _load_inputs(args, need_image: bool = True):
    if not args.weights:
        raise UsageError("--weights is required")
    model = load_weights(args.weights)
    depth = model.config.depth
    if args.layer is None:
        args.layer = depth
    if not 0 <= args.layer <= depth:
        raise UsageError(f"--layer {args.layer} is invalid; valid range is 0..{depth}")
    if args.d < 0:
        raise UsageError("--d must be >= 0")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    image = None
    if need_image or args.image:
        if not args.image:
            raise UsageError("--image is required")
        image = read_ppm(args.image)
    return model, image


def _pset(args):
    if args.samples:
        return sample_shifts(args.d, args.samples, args.seed)
    return build_grid(args.d)


def _write_manifest(out: Path, manifest: dict) -> None:
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _run_config(args) -> dict:
    keys = ["weights", "image", "layer", "d", "stat", "masked", "path", "out", "seed", "jobs", "samples", "override_shift_bound"]
    return {k: getattr(args, k, None) for k in keys}


def cmd_enhance(args) -> int:
    model, image = _load_inputs(args)
    cfg = model.config
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pset = _pset(args)
    agg = AggregationSpec(args.stat, args.masked == "on")
    timings = {}
    checksums = {"weights": sha256_file(args.weights), "image": sha256_file(args.image)}
    with ForwardPool(model, args.jobs) as pool:
        t0 = time.perf_counter()
        fmaps = immerse(model, image, args.layer, pset, override_bound=args.override_shift_bound, pool=pool)
        timings["forwards_s"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        field = aggregate_dense(fmaps, list(pset), cfg, agg)
        naive = retokenize(field, cfg, args.layer, fmaps[0].cls)
        timings["naive_aggregate_s"] = time.perf_counter() - t0
        tokens = naive
        manifest_extra = {}
        if args.path in ("efficient", "both"):
            if agg.stat != "mean" or not agg.masked:
                warnings.warn("efficient route supports the masked mean only; keeping the naive tokens")
            else:
                t0 = time.perf_counter()
                eff = srt_tokens_efficient(model, image, args.layer, pset, override_bound=args.override_shift_bound, pool=pool)
                timings["efficient_s"] = time.perf_counter() - t0
                checksums["tokens_naive"] = _array_digest(naive.data)
                checksums["tokens_efficient"] = _array_digest(eff.data)
                manifest_extra["naive_efficient_equal"] = checksums["tokens_naive"] == checksums["tokens_efficient"]
                manifest_extra["naive_efficient_max_abs_dev"] = float(
                    np.max(np.abs(naive.data.astype(np.float64) - eff.data))
                )
                if args.path == "efficient":
                    tokens = eff
    write_srtf(field, out / "field.srtf")
    token_field = type(field)(tokens.data, np.ones(tokens.data.shape[:2], dtype=np.float32), True)
    write_srtf(token_field, out / "tokens.srtf")
    checksums["field.srtf"] = sha256_file(out / "field.srtf")
    checksums["tokens.srtf"] = sha256_file(out / "tokens.srtf")
    _write_manifest(
        out,
        {
            "command": "enhance",
            "config": _run_config(args),
            "model": cfg.to_dict(),
            "passes": len(pset),
            "shifts": [[s.du, s.dv] for s in pset],
            "timings": timings,
            "checksums": checksums,
            **manifest_extra,
        },
    )
    print(f"enhance: {len(pset)} passes, layer {args.layer}; wrote {out}/field.srtf, tokens.srtf, manifest.json")
    return 0


def cmd_visualize(args) -> int:
    model, image = _load_inputs(args)
    cfg = model.config
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pset = _pset(args)
    agg = AggregationSpec(args.stat, args.masked == "on")
    with ForwardPool(model, args.jobs) as pool:
        fmaps = immerse(model, image, args.layer, pset, override_bound=args.override_shift_bound, pool=pool)
    field = aggregate_dense(fmaps, list(pset), cfg, agg)
    rgb = render_pca(field, fit_pca(field))
    single = upsample_pc(fmaps[0], cfg)
    write_ppm(rgb, out / "pca.ppm")
    write_ppm(render_pca(single, fit_pca(single)), out / "pca_single.ppm")
    _write_manifest(
        out,
        {
            "command": "visualize",
            "config": _run_config(args),
            "passes": len(pset),
            "checksums": {
                "weights": sha256_file(args.weights),
                "image": sha256_file(args.image),
                "pca.ppm": sha256_file(out / "pca.ppm"),
                "pca_single.ppm": sha256_file(out / "pca_single.ppm"),
            },
        },
    )
    print(f"visualize: wrote {out}/pca.ppm")
    return 0


def cmd_noise_map(args) -> int:
    model, image = _load_inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pset = _pset(args)
    nm = noise_map(model, image, args.layer, pset, override_bound=args.override_shift_bound, jobs=args.jobs)
    write_ppm(render_scalar(nm.values, args.gamma), out / "noise.pgm")
    with open(out / "noise_hist.csv", "w", encoding="ascii", newline="") as f:
        f.write("bin_lo,bin_hi,count\n")
        for lo, hi, n in zip(nm.edges[:-1], nm.edges[1:], nm.counts):
            f.write(f"{float(lo)!r},{float(hi)!r},{int(n)}\n")
    _write_manifest(
        out,
        {
            "command": "noise-map",
            "config": _run_config(args),
            "passes": len(pset),
            "mean_noise": float(nm.values.mean()),
            "checksums": {
                "weights": sha256_file(args.weights),
                "image": sha256_file(args.image),
                "noise.pgm": sha256_file(out / "noise.pgm"),
                "noise_hist.csv": sha256_file(out / "noise_hist.csv"),
            },
        },
    )
    print(f"noise-map: mean {nm.values.mean():.6g}, max {nm.values.max():.6g}; wrote {out}/noise.pgm")
    return 0


def cmd_bench(args) -> int:
    model, image = _load_inputs(args, need_image=False)
    cfg = model.config
    if image is None:
        image = random_image(args.seed, cfg.img_h, cfg.img_w)
    try:
        levels = [int(x) for x in args.levels.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad --levels {args.levels!r}") from None
    jobs = args.jobs if args.jobs > 1 else 4
    rows = benchmod.run_bench(model, image, args.layer, levels, jobs=jobs, repeat=args.repeat)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.csv").write_text(benchmod.to_csv(rows), encoding="ascii")
    text = benchmod.to_text(rows)
    (out / "bench.txt").write_text(text + "\n", encoding="ascii")
    print(text)
    for d, stats in benchmod.summarize(rows).items():
        print(f"d={d}: " + ", ".join(f"{k}={v:.3f}" for k, v in stats.items()))
    return 0


def cmd_sr1d(args) -> int:
    q = Quantizer(args.quantizer, args.step)
    d = DitherSpec(args.dither, args.scale, args.t, args.seed)
    res = mse_sweep(q, ramp(args.n, args.ramp_step), d)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.write_csv(out / "sr1d.csv")
    print(f"mse_plain={res.mse_plain!r}")
    print(f"mse_dithered={res.mse_dithered!r}")
    return 0


def cmd_make_toy(args) -> int:
    cfg = ViTConfig(
        args.img_size, args.img_size, args.patch, args.patch, args.dim, args.depth, args.heads, args.mlp_ratio, not args.no_cls
    )
    container = make_toy_weights(args.seed, cfg)
    save_container(container, args.out)
    print(f"sha256={sha256_file(args.out)}")
    print(f"blocks.0.attn.qkv.weight={container.checksum('blocks.0.attn.qkv.weight')}")
    return 0


def cmd_inspect(args) -> int:
    c = read_container(args.weights)
    print(json.dumps(c.config.to_dict()))
    for name, t in c.tensors.items():
        print(f"{name:<28} {str(list(t.shape)):<14} {tensor_checksum(t)[:16]}")
    return 0


COMMANDS = {
    "enhance": cmd_enhance,
    "visualize": cmd_visualize,
    "noise-map": cmd_noise_map,
    "bench": cmd_bench,
    "sr1d": cmd_sr1d,
    "make-toy": cmd_make_toy,
    "inspect-weights": cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args = _resolve(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"srtvit {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (SRTError, OSError, ValueError) as exc:
        print(f"srtvit {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
