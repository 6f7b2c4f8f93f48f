"""Command-line front end for image-completion experiments.

Subcommands
-----------
corrupt   hide a seeded fraction of voxels; write the preview image + mask
complete  run the completion solver on an image and a mask
psnr      compare two images (optionally restricted to masked-out voxels)
ramp      search for the largest stable step size
bench     factorial missing-rate x loss x seed benchmark, reported as CSV

Per-sweep progress goes to standard error; machine-readable output goes to
stdout or to the requested files. Setting GCDTC_THREADS caps the linear
algebra thread pools for the whole invocation.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from contextlib import nullcontext
from dataclasses import replace
from pathlib import Path

from threadpoolctl import threadpool_limits

from .imaging import (
    corrupt,
    psnr,
    read_mask_pgm,
    read_ppm,
    write_history_csv,
    write_mask_pgm,
    write_ppm,
)
from .solver import NonFiniteError, SolverConfig, alpha_ramp, solve

# Conservative ramp start: small enough to survive on any byte-scale image.
DEFAULT_RAMP_START = 1e-9


def _missing_rate(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 <= value < 1:
        raise argparse.ArgumentTypeError(f"missing rate must be in [0, 1), got {value}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"seed must be >= 0, got {value}")
    return value


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad comma-separated floats: {text!r}") from None


def _rate_list(text: str) -> tuple[float, ...]:
    return tuple(_missing_rate(part) for part in text.split(","))


def _seed_list(text: str) -> tuple[int, ...]:
    return tuple(_seed(part) for part in text.split(","))


def _loss_list(text: str) -> tuple[str, ...]:
    losses = tuple(part.strip() for part in text.split(","))
    for name in losses:
        if name not in ("poisson", "gaussian"):
            raise argparse.ArgumentTypeError(f"unknown loss {name!r}")
    return losses


def _check_paths(inputs, outputs) -> None:
    """Validate every path up front; outputs must not alias any input."""
    for p in inputs:
        if not Path(p).is_file():
            raise ValueError(f"input file not found: {p}")
    for o in outputs:
        if o is None:
            continue
        parent = Path(o).resolve().parent
        if not parent.is_dir():
            raise ValueError(f"output directory does not exist: {parent}")
        for p in inputs:
            if Path(o).resolve() == Path(p).resolve():
                raise ValueError(f"output path {o} would overwrite input {p}")


def _add_solver_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--rho", type=_float_list, default=(10.0, 10.0, 0.0),
                     help="comma-separated per-mode smoothness weights (default 10,10,0)")
    sub.add_argument("--rank", type=int, default=300, help="CP rank (default 300)")
    sub.add_argument("--alpha", type=float, default=None, help="gradient step size")
    sub.add_argument("--auto-alpha", action="store_true",
                     help="tune alpha by ramping instead of requiring --alpha")
    sub.add_argument("--epsilon", type=float, default=1e-3,
                     help="elementwise reconstruction shift (default 1e-3)")
    sub.add_argument("--tol", type=float, default=1e-6,
                     help="relative objective-change stop threshold (default 1e-6)")
    sub.add_argument("--max-sweeps", type=int, default=500,
                     help="sweep limit (default 500)")
    sub.add_argument("--seed", type=_seed, default=0, help="RNG seed (default 0)")
    sub.add_argument("--allow-negative", action="store_true",
                     help="skip the nonnegativity clamp after each update")
    sub.add_argument("--ramp-factor", type=float, default=2.0,
                     help="multiplier per ramp step (default 2.0)")
    sub.add_argument("--probe-sweeps", type=int, default=10,
                     help="sweeps per ramp probe (default 10)")


def _config_from_args(args, loss: str) -> SolverConfig:
    alpha = args.alpha if args.alpha is not None else DEFAULT_RAMP_START
    return SolverConfig(
        rank=args.rank,
        alpha=alpha,
        loss=loss,
        rho=args.rho,
        epsilon=args.epsilon,
        nonnegative=not args.allow_negative,
        max_sweeps=args.max_sweeps,
        tol=args.tol,
        seed=args.seed,
    )


def _tuned_config(img, mask, args, loss: str, seed: int | None = None) -> SolverConfig:
    cfg = _config_from_args(args, loss)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if args.auto_alpha:
        chosen = alpha_ramp(img, mask, cfg, args.ramp_factor, args.probe_sweeps)
        print(f"auto-alpha: using {chosen!r}", file=sys.stderr)
        cfg = replace(cfg, alpha=chosen)
    elif args.alpha is None:
        raise ValueError("--alpha is required unless --auto-alpha is given")
    return cfg


def _progress(sweep_index: int, objective_value: float) -> None:
    print(f"sweep {sweep_index} objective {objective_value:.10g}", file=sys.stderr)


def cmd_corrupt(args) -> int:
    _check_paths([args.input], [args.out_image, args.out_mask])
    img = read_ppm(args.input)
    data, mask = corrupt(img, args.mr, args.seed)
    preview = data.copy()
    preview[~mask] = 0.0
    write_ppm(preview, args.out_image)
    write_mask_pgm(mask, args.out_mask)
    return 0


def cmd_complete(args) -> int:
    _check_paths([args.input, args.mask], [args.output, args.history])
    img = read_ppm(args.input)
    mask = read_mask_pgm(args.mask, img.shape)
    cfg = _tuned_config(img, mask, args, args.loss)
    result = solve(img, mask, cfg, progress=_progress)
    write_ppm(result.completed, args.output)
    if args.history is not None:
        write_history_csv(result.history, args.history)
    print(
        f"reason={result.reason} sweeps={result.sweeps} "
        f"objective={result.history[-1]:.10g}"
    )
    if result.reason == "collapsed" and args.strict:
        return 1
    return 0


def cmd_psnr(args) -> int:
    _check_paths([args.ref, args.test] + ([args.mask] if args.mask else []), [])
    ref = read_ppm(args.ref)
    test = read_ppm(args.test)
    print(f"{psnr(ref, test):.2f}")
    if args.mask is not None:
        observed = read_mask_pgm(args.mask, ref.shape)
        print(f"{psnr(ref, test, where=~observed):.2f}")
    return 0


def cmd_ramp(args) -> int:
    _check_paths([args.input, args.mask], [])
    img = read_ppm(args.input)
    mask = read_mask_pgm(args.mask, img.shape)
    cfg = _config_from_args(args, args.loss)
    chosen = alpha_ramp(img, mask, cfg, args.ramp_factor, args.probe_sweeps)
    print(f"chosen_alpha={chosen!r} collapsing_alpha={chosen * args.ramp_factor!r}")
    return 0


def cmd_bench(args) -> int:
    _check_paths([args.input], [args.report])
    img = read_ppm(args.input)
    image_name = Path(args.input).name
    rows = []
    failed = False
    for mr in args.mrs:
        for loss in args.losses:
            for seed in args.seeds:
                print(f"bench: mr={mr} loss={loss} seed={seed}", file=sys.stderr)
                started = time.perf_counter()
                try:
                    data, mask = corrupt(img, mr, seed)
                    cfg = _tuned_config(data, mask, args, loss, seed=seed)
                    result = solve(data, mask, cfg)
                    row = [
                        image_name, mr, loss, seed,
                        f"{psnr(img, result.completed):.4f}",
                        f"{psnr(img, result.completed, where=~mask):.4f}",
                        result.sweeps,
                        f"{time.perf_counter() - started:.3f}",
                        "ok" if result.reason != "collapsed" else "collapsed",
                    ]
                    if result.reason == "collapsed":
                        failed = True
                except (ValueError, NonFiniteError) as exc:
                    failed = True
                    row = [image_name, mr, loss, seed, "", "", "",
                           f"{time.perf_counter() - started:.3f}", f"error: {exc}"]
                rows.append(row)
    header = ["image", "mr", "loss", "seed", "psnr_all", "psnr_missing",
              "sweeps", "seconds", "status"]
    with open(args.report, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    for row in rows:
        print(" ".join(f"{k}={v}" for k, v in zip(header, row)))
    return 1 if failed and args.strict else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcdtc",
        description="Low-rank tensor completion of images with pluggable likelihoods.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corrupt", help="hide a seeded fraction of voxels")
    p.add_argument("--input", required=True)
    p.add_argument("--mr", type=_missing_rate, required=True)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-mask", required=True)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("complete", help="complete an image from a mask")
    p.add_argument("--input", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--loss", choices=["poisson", "gaussian"], default="poisson")
    p.add_argument("--output", required=True)
    p.add_argument("--history", default=None, help="objective history CSV path")
    p.add_argument("--strict", action="store_true",
                   help="exit nonzero when the solve collapses")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("psnr", help="PSNR between two images")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--mask", default=None,
                   help="also report PSNR over the masked-out voxels only")
    p.set_defaults(func=cmd_psnr)

    p = sub.add_parser("ramp", help="find the largest stable step size")
    p.add_argument("--input", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--loss", choices=["poisson", "gaussian"], default="poisson")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_ramp)

    p = sub.add_parser("bench", help="missing-rate x loss x seed benchmark")
    p.add_argument("--input", required=True)
    p.add_argument("--mrs", type=_rate_list, required=True)
    p.add_argument("--losses", type=_loss_list, default=("poisson", "gaussian"))
    p.add_argument("--seeds", type=_seed_list, default=(0,))
    p.add_argument("--report", required=True)
    p.add_argument("--strict", action="store_true",
                   help="exit nonzero when any grid cell fails")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cap = os.environ.get("GCDTC_THREADS")
    if cap is not None:
        try:
            limiter = threadpool_limits(limits=int(cap))
        except ValueError:
            print(f"error: GCDTC_THREADS must be an integer, got {cap!r}", file=sys.stderr)
            return 2
    else:
        limiter = nullcontext()
    try:
        with limiter:
            return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NonFiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
