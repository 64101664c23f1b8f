"""Command-line interface.

Subcommands: enhance, metrics, train, bench, degrade, params.  Exit code is
0 only when the command completed without errors; per-file problems during
batch enhancement are reported and skipped unless --strict aborts the run.
FANET_THREADS provides the default for every --threads flag.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import bench, imageio, metrics, network, weights_io
from . import training as train_mod
from .degradation import DegradeParams, PairSet, degrade as degrade_batch, make_pairs


def _default_threads() -> int:
    env = os.environ.get("FANET_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _add_common(p: argparse.ArgumentParser, *names: str):
    if "weights" in names:
        p.add_argument("--weights", type=Path, default=None,
                       help="FANW1 weight file (default: fresh zero-head "
                            "network, which is the identity map)")
    if "alpha" in names:
        p.add_argument("--alpha", type=float, default=None,
                       help="override the spatial/frequency blend ratio")
    if "json" in names:
        p.add_argument("--json", action="store_true", help="emit JSON output")
    if "seed" in names:
        p.add_argument("--seed", type=int, default=0, help="RNG seed")
    if "threads" in names:
        p.add_argument("--threads", type=int, default=_default_threads(),
                       help="worker threads (default: $FANET_THREADS or 1)")
    if "strict" in names:
        p.add_argument("--strict", action="store_true",
                       help="abort on the first per-file error")
    if "f64" in names:
        p.add_argument("--f64", action="store_true",
                       help="run in float64 instead of float32")


def _load_weights_arg(args) -> network.NetworkWeights:
    if args.weights is not None:
        w = weights_io.load_weights(args.weights)
    else:
        w = network.default_network(seed=getattr(args, "seed", 0))
    alpha = getattr(args, "alpha", None)
    if alpha is not None:
        w = w.with_alpha(alpha)
    if getattr(args, "f64", False):
        w = w.astype(np.float64)
    return w


# ---------------------------------------------------------------------------
# enhance
# ---------------------------------------------------------------------------

def cmd_enhance(args) -> int:
    weights = _load_weights_arg(args)
    args.output_dir.mkdir(parents=True, exist_ok=True)
    inputs = [Path(p) for p in args.inputs]
    dtype = np.float64 if args.f64 else np.float32

    def process(path: Path):
        img = imageio.load_tensor(path, dtype)
        out = network.enhance(img, weights)
        dest = args.output_dir / path.name
        imageio.save_tensor(dest, out)
        return dest

    results = []
    errors = []
    if args.threads > 1 and not args.strict:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            futures = {pool.submit(process, p): p for p in inputs}
            for fut, path in futures.items():
                try:
                    results.append({"input": str(path), "output": str(fut.result())})
                except Exception as exc:
                    errors.append({"input": str(path), "error": str(exc)})
    else:
        for path in inputs:
            try:
                results.append({"input": str(path), "output": str(process(path))})
            except Exception as exc:
                errors.append({"input": str(path), "error": str(exc)})
                if args.strict:
                    break
    for err in errors:
        print(f"error: {err['input']}: {err['error']}", file=sys.stderr)
    if args.json:
        print(json.dumps({"enhanced": results, "errors": errors}, indent=2))
    else:
        for r in results:
            print(f"{r['input']} -> {r['output']}")
    return 1 if errors else 0


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def cmd_metrics(args) -> int:
    test_files = imageio.list_images(args.test)
    report = metrics.QualityReport()
    if not test_files:
        print(f"warning: no images found in {args.test}", file=sys.stderr)
        print(report.to_json())
        return 0
    ref_lookup = {}
    if args.ref is not None:
        ref_lookup = {p.name: p for p in imageio.list_images(args.ref)}
    for path in test_files:
        test_img = imageio.load_tensor(path, np.float64)[0]
        scores = metrics.ImageScores(path.name,
                                     uciqe=metrics.uciqe(test_img),
                                     uiqm=metrics.uiqm(test_img))
        if args.ref is not None:
            ref_path = ref_lookup.get(path.name)
            if ref_path is None:
                report.skipped.append(path.name)
                continue
            ref_img = imageio.load_tensor(ref_path, np.float64)[0]
            scores.psnr = metrics.psnr(ref_img, test_img)
            scores.mse = metrics.mse(ref_img, test_img)
            scores.ssim = metrics.ssim(ref_img, test_img)
        report.per_image.append(scores)
    print(report.to_json())
    if report.skipped:
        print(f"warning: {len(report.skipped)} file(s) had no reference "
              f"counterpart", file=sys.stderr)
        if args.strict:
            return 1
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _load_pair_dirs(clean_dir: Path, degraded_dir: Path) -> PairSet:
    clean_files = {p.name: p for p in imageio.list_images(clean_dir)}
    degraded_files = {p.name: p for p in imageio.list_images(degraded_dir)}
    names = sorted(clean_files.keys() & degraded_files.keys())
    if not names:
        raise train_mod.ConfigError(
            f"no matching image filenames between {clean_dir} and {degraded_dir}")
    clean = np.concatenate([imageio.load_tensor(clean_files[n]) for n in names])
    degraded = np.concatenate([imageio.load_tensor(degraded_files[n]) for n in names])
    return PairSet(clean=clean, degraded=degraded)


def _degrade_params_from(args) -> DegradeParams:
    return DegradeParams(beta=tuple(args.beta), background=tuple(args.background),
                         depth_mode=args.depth_mode,
                         depth_range=tuple(args.depth_range), seed=args.seed)


def cmd_train(args) -> int:
    if (args.clean_dir is None) != (args.degraded_dir is None):
        print("error: --clean-dir and --degraded-dir must be given together",
              file=sys.stderr)
        return 1
    cfg = train_mod.TrainConfig(
        steps=args.steps, batch_size=args.batch_size, crop_size=args.crop,
        lr_max=args.lr_max, base_lr=args.base_lr, lr_period=args.lr_period,
        betas=(args.beta1, args.beta2), flip=not args.no_flip,
        rotate=not args.no_rotate, ssim_aux=args.ssim_aux, seed=args.seed,
        float64=args.f64)
    params = _degrade_params_from(args)
    if args.clean_dir is not None:
        pairs = _load_pair_dirs(args.clean_dir, args.degraded_dir)
        holdout = None
    else:
        pairs = make_pairs(args.pairs, args.size, params, seed=args.seed)
        holdout = make_pairs(args.holdout, args.size, params, seed=args.seed,
                             start_index=args.pairs) if args.holdout else None

    log_fh = open(args.log, "w") if args.log else None

    def log(step, lr, loss):
        if log_fh:
            log_fh.write(json.dumps({"step": step, "lr": lr, "loss": loss}) + "\n")

    try:
        initial = None
        if args.weights is not None:
            initial = weights_io.load_weights(args.weights)
        if args.alpha is not None:
            initial = (initial or network.default_network(seed=args.seed)
                       ).with_alpha(args.alpha)
        weights, losses = train_mod.train(cfg, pairs, weights=initial, log=log)
        weights_io.save_weights(weights, args.out)
        summary = {"steps": cfg.steps, "out": str(args.out),
                   "final_loss": losses[-1] if losses else None}
        if holdout is not None:
            summary.update(train_mod.evaluate_enhancement(weights, holdout))
        if log_fh:
            log_fh.write(json.dumps({"event": "final", **summary}) + "\n")
        print(json.dumps(summary, indent=2) if args.json else
              " ".join(f"{k}={v}" for k, v in summary.items()))
        return 0
    except train_mod.TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        if log_fh:
            log_fh.close()


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def cmd_bench(args) -> int:
    weights = _load_weights_arg(args)
    report = bench.run_benchmark(weights, args.height, args.width,
                                 iters=args.iters, warmup=args.warmup,
                                 threads=args.threads, seed=args.seed)
    if args.json:
        print(report.to_json())
    else:
        d = report.to_dict()
        print(f"{args.height}x{args.width}: median "
              f"{d['seconds']['median']:.4f}s  fps {d['fps']:.2f}  "
              f"analytic {d['gflops']:.2f} GFLOPs  params {d['params']}  "
              f"threads {d['threads']}")
    return 0


# ---------------------------------------------------------------------------
# degrade
# ---------------------------------------------------------------------------

def cmd_degrade(args) -> int:
    params = _degrade_params_from(args)
    pairs = make_pairs(args.count, args.size, params, seed=args.seed)
    clean_dir = args.out / "clean"
    degraded_dir = args.out / "degraded"
    clean_dir.mkdir(parents=True, exist_ok=True)
    degraded_dir.mkdir(parents=True, exist_ok=True)
    ext = ".ppm" if args.format == "ppm" else ".png"
    names = []
    for i in range(len(pairs)):
        name = f"pair_{i:04d}{ext}"
        imageio.save_tensor(clean_dir / name, pairs.clean[i])
        imageio.save_tensor(degraded_dir / name, pairs.degraded[i])
        names.append(name)
    manifest = {"count": args.count, "size": args.size, "seed": args.seed,
                "format": args.format, "params": params.to_dict(),
                "files": names}
    (args.out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(json.dumps(manifest, indent=2) if args.json else
          f"wrote {args.count} pairs under {args.out}")
    return 0


# ---------------------------------------------------------------------------
# params
# ---------------------------------------------------------------------------

def cmd_params(args) -> int:
    weights = _load_weights_arg(args)
    blocks = weights.block_param_counts()
    total = network.count_params(weights)
    lo, hi = network.PARAM_BUDGET
    within = lo <= total <= hi
    if args.json:
        print(json.dumps({"blocks": blocks, "total": total,
                          "budget": [lo, hi], "within_budget": within}, indent=2))
    else:
        for name, count in blocks.items():
            print(f"{name:10s} {count:6d}")
        print(f"{'total':10s} {total:6d}  (budget {lo}..{hi}: "
              f"{'ok' if within else 'EXCEEDED'})")
    if args.enforce_budget and not within:
        return 1
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_degrade_flags(p: argparse.ArgumentParser):
    p.add_argument("--beta", type=float, nargs=3, default=[1.0, 0.35, 0.25],
                   metavar=("R", "G", "B"),
                   help="per-channel attenuation coefficients")
    p.add_argument("--background", type=float, nargs=3, default=[0.10, 0.60, 0.70],
                   metavar=("R", "G", "B"), help="veiling light color")
    p.add_argument("--depth-mode", choices=["constant", "vertical-ramp"],
                   default="constant")
    p.add_argument("--depth-range", type=float, nargs=2, default=[0.5, 2.5],
                   metavar=("MIN", "MAX"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aquaclear",
        description="Ultra-lightweight underwater image enhancement engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enhance", help="enhance PNG/PPM images")
    p.add_argument("inputs", nargs="+", help="input image files")
    p.add_argument("--output-dir", type=Path, required=True)
    _add_common(p, "weights", "alpha", "json", "seed", "threads", "strict", "f64")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("metrics", help="score images (JSON report)")
    p.add_argument("--test", type=Path, required=True,
                   help="directory of images to score")
    p.add_argument("--ref", type=Path, default=None,
                   help="directory of references for PSNR/MSE/SSIM")
    _add_common(p, "json", "strict")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("train", help="train on synthetic or supplied pairs")
    p.add_argument("--out", type=Path, required=True, help="output FANW1 file")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--crop", type=int, default=64)
    p.add_argument("--lr-max", type=float, default=4e-4)
    p.add_argument("--base-lr", type=float, default=None)
    p.add_argument("--lr-period", type=int, default=200)
    p.add_argument("--beta1", type=float, default=0.5)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--no-flip", action="store_true")
    p.add_argument("--no-rotate", action="store_true")
    p.add_argument("--ssim-aux", action="store_true",
                   help="add the (1-SSIM) auxiliary loss term")
    p.add_argument("--pairs", type=int, default=64,
                   help="synthetic training pairs to generate")
    p.add_argument("--size", type=int, default=64, help="synthetic image size")
    p.add_argument("--holdout", type=int, default=16,
                   help="held-out synthetic pairs for the final report")
    p.add_argument("--clean-dir", type=Path, default=None,
                   help="train on supplied clean images instead")
    p.add_argument("--degraded-dir", type=Path, default=None,
                   help="matching degraded images")
    p.add_argument("--log", type=Path, default=None,
                   help="line-delimited JSON training log")
    _add_degrade_flags(p)
    _add_common(p, "weights", "alpha", "json", "seed", "f64")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="forward-pass throughput benchmark")
    p.add_argument("--height", type=int, default=1080)
    p.add_argument("--width", type=int, default=1920)
    p.add_argument("--iters", type=int, default=30)
    p.add_argument("--warmup", type=int, default=5)
    _add_common(p, "weights", "alpha", "json", "seed", "threads", "f64")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("degrade", help="generate paired synthetic data")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--format", choices=["png", "ppm"], default="png")
    _add_degrade_flags(p)
    _add_common(p, "json", "seed")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("params", help="parameter budget breakdown")
    p.add_argument("--enforce-budget", action="store_true",
                   help="exit nonzero if the total leaves the budget window")
    _add_common(p, "weights", "json", "seed")
    p.set_defaults(func=cmd_params)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "iters", None) is not None and args.command == "bench":
        if args.iters < bench.MIN_ITERS:
            print(f"error: --iters must be >= {bench.MIN_ITERS}", file=sys.stderr)
            return 2
        if args.warmup < bench.MIN_WARMUP:
            print(f"error: --warmup must be >= {bench.MIN_WARMUP}", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except weights_io.WeightLoadError as exc:
        print(f"error: bad weight file: {exc}", file=sys.stderr)
        return 1
    except (imageio.ImageFormatError, train_mod.ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
