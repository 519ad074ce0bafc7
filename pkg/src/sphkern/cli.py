"""Command-line entry point: ``sphkern {expand,verify,minimize,bench,stats}``.

Exit codes: 0 success, 1 failed check or diverged run, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from functools import partial
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .bench import BENCH_LOSSES, DEFAULT_N_SWEEP, DEFAULT_Q_SWEEP, run_benchmark, write_bench_csv
from .config import ConfigError, load_config
from .harmonics import embedding_moment_stats
from .kernels import (
    KernelSpec,
    QuadratureWarning,
    coefficients,
    expand_coefficients,
    kernel_eval,
    rbf_coefficient_bound,
)
from .optimizer import (
    STREAM_REFERENCE,
    DivergenceError,
    TwoViewBatch,
    antipodal_frames_init,
    generate_two_view_data,
    minimize,
)
from .sampling import UniformReference, read_points_csv, sample_uniform_sphere
from .verify import SUITES, report_json, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    return "" if x is None else format(float(x), ".17g")


def parse_coeffs(text: str) -> dict[int, float]:
    """``"1:1,2:40,3:40"`` -> ``{1: 1.0, 2: 40.0, 3: 40.0}``."""
    out = {}
    try:
        for item in text.split(","):
            l, b = item.split(":")
            out[int(l)] = float(b)
    except ValueError as exc:
        raise UsageError(f"bad --coeffs {text!r}; expected 'l:b,l:b,...'") from exc
    return out


def _add_kernel_args(p, required: bool):
    p.add_argument("--family", choices=("truncated", "rbf", "gendist"), required=required)
    p.add_argument("--q", type=int, help="ambient dimension")
    p.add_argument("--sigma", type=float, help="RBF bandwidth")
    p.add_argument("--s", type=float, help="generalized-distance exponent")
    p.add_argument("--coeffs", help="truncated-kernel weights as l:b,l:b,...")


def kernel_from_args(args, centered: bool = False) -> KernelSpec:
    if args.q is None:
        raise UsageError("--q is required with --family")
    params = {"truncated": args.coeffs, "rbf": args.sigma, "gendist": args.s}
    flag = {"truncated": "--coeffs", "rbf": "--sigma", "gendist": "--s"}[args.family]
    if params[args.family] is None:
        raise UsageError(f"--family {args.family} needs {flag}")
    try:
        if args.family == "truncated":
            return KernelSpec.truncated(args.q, parse_coeffs(args.coeffs), centered=centered)
        if args.family == "rbf":
            return KernelSpec.rbf(args.q, args.sigma, centered=centered)
        return KernelSpec.gendist(args.q, args.s, centered=centered)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _write_or_print(text: str, out_dir, name: str):
    if out_dir is None:
        sys.stdout.write(text)
        return
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    (path / name).write_text(text)
    print(path / name)


# ---------------------------------------------------------------------------
# commands


def cmd_expand(args) -> int:
    spec = kernel_from_args(args)
    order = args.order if args.order is not None else (spec.max_order if spec.family == "truncated" else 20)
    b = coefficients(spec, order)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", QuadratureWarning)
        quad = expand_coefficients(partial(kernel_eval, spec), spec.q, order)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    rows = ["l,b_l,quadrature_b_l,bound"]
    for l in range(order + 1):
        bound = rbf_coefficient_bound(spec.q, spec.sigma, l) if spec.family == "rbf" else None
        rows.append(f"{l},{_fmt(b[l])},{_fmt(quad[l])},{_fmt(bound)}")
    _write_or_print("\n".join(rows) + "\n", args.out, "coefficients.csv")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        checks = run_suite(args.suite, args.seed or 0)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from exc
    _write_or_print(report_json(checks) + "\n", args.out, "verify.json")
    failed = [c for c in checks if not c.passed]
    for c in failed:
        print(f"FAIL {c.name}: {c.measured:.3g} > {c.tolerance:.3g}", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def experiment_data(cfg) -> TwoViewBatch:
    q, d = cfg.kernel.q, cfg.data
    if d.init == "antipodal_frames":
        if d.n != 2 * q:
            raise ConfigError(f"antipodal_frames init needs data.n = 2 * q = {2 * q}")
        Z0 = antipodal_frames_init(q, cfg.seed)
        return TwoViewBatch(Z0, Z0.copy(), Z0)
    return generate_two_view_data(q, d.n, d.clusters, d.noise_angle, cfg.seed)


def cmd_minimize(args) -> int:
    if args.config is None:
        raise UsageError("minimize needs --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    out_dir = Path(args.out if args.out is not None else cfg.output.dir)
    data = experiment_data(cfg)
    try:
        with threadpool_limits(limits=args.threads):
            traj = minimize(cfg.optim_config(), data)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out_dir.mkdir(parents=True, exist_ok=True)
    traj.to_csv(out_dir / cfg.output.trajectory)
    summary = {
        "config": cfg.model_dump(mode="json"),
        "step_size": traj.config.effective_step,
        **traj.summary(),
    }
    text = json.dumps(summary, indent=2, sort_keys=True)
    (out_dir / cfg.output.summary).write_text(text + "\n")
    print(text)
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad integer list {text!r}") from exc


def cmd_bench(args) -> int:
    losses = args.losses.split(",")
    bad = [x for x in losses if x not in BENCH_LOSSES]
    if bad:
        raise UsageError(f"unknown benchmark losses {bad}; choose from {BENCH_LOSSES}")
    threads = args.threads if args.threads is not None else 1
    try:
        records, fits = run_benchmark(losses, _int_list(args.q_list), args.n_fixed, _int_list(args.n_list),
                                      args.q_fixed, args.repeats, threads or None, args.seed or 0)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out_dir = Path(args.out or "bench")
    out_dir.mkdir(parents=True, exist_ok=True)
    write_bench_csv(records, out_dir / "bench.csv")
    text = json.dumps(fits, indent=2, sort_keys=True)
    (out_dir / "bench_fits.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_stats(args) -> int:
    try:
        Z = read_points_csv(args.points)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read points from {args.points}: {exc}") from exc
    norms = np.linalg.norm(Z, axis=1)
    if not np.allclose(norms, 1.0, atol=1e-9):
        raise UsageError("points must be unit vectors")
    out = {"n": int(Z.shape[0]), "q": int(Z.shape[1]), **embedding_moment_stats(Z)}
    spec = None
    if args.config is not None:
        spec = load_config(args.config).kernel.to_spec()
    elif args.family is not None:
        spec = kernel_from_args(args, centered=True)
    if spec is not None:
        if spec.q != Z.shape[1]:
            raise UsageError(f"kernel q={spec.q} but points have dimension {Z.shape[1]}")
        seed = args.seed or 0
        ref = UniformReference(spec, sample_uniform_sphere(spec.q, args.reference_size, seed, stream=STREAM_REFERENCE))
        mmd, se = ref.estimate(Z)
        out.update({"kernel": spec.to_dict(), "mc_mmd": mmd, "mc_mmd_se": se,
                    "reference_size": args.reference_size, "seed": seed})
    _write_or_print(json.dumps(out, indent=2, sort_keys=True) + "\n", args.out, "stats.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment TOML file")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    common.add_argument("--out", help="output directory (default: stdout, config value, or ./bench)")
    common.add_argument("--threads", type=int, help="BLAS threads (0 = library default)")

    parser = argparse.ArgumentParser(prog="sphkern", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expand", parents=[common], help="Legendre coefficients of a kernel")
    _add_kernel_args(p, required=True)
    p.add_argument("--order", type=int, help="largest order L (default: 20, or the kernel's own order)")
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("verify", parents=[common], help="run verification suites")
    p.add_argument("--suite", default="all", help=f"one of: all, {', '.join(SUITES)}")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("minimize", parents=[common], help="run an optimization experiment")
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("bench", parents=[common], help="time the losses and fit scaling exponents")
    p.add_argument("--losses", default=",".join(BENCH_LOSSES))
    p.add_argument("--q-list", default=",".join(map(str, DEFAULT_Q_SWEEP)))
    p.add_argument("--n-list", default=",".join(map(str, DEFAULT_N_SWEEP)))
    p.add_argument("--n-fixed", type=int, default=256)
    p.add_argument("--q-fixed", type=int, default=1024)
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("stats", parents=[common], help="moment statistics and MMD of a point set")
    p.add_argument("points", help="CSV of unit vectors, one per row")
    _add_kernel_args(p, required=False)
    p.add_argument("--reference-size", type=int, default=4096)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
