"""Command-line front end: run experiments, seed sweeps, verification, plots.

Exit codes: 0 success, 1 usage/config error, 2 numerical divergence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, plots, verify
from .data import SyntheticSpec, generate_synthetic, parse_libsvm, to_libsvm_text
from .objective import CauchyProblem, LogisticProblem, QuadraticProblem
from .solver import ConfigError, RunResult, SolverConfig, run

TRACE_HEADER = ["k", "epoch", "F_batch", "grad_norm_batch", "F_full", "grad_norm_full",
                "skipped", "batch_size", "overlap_size", "elapsed_ns"]

_METHOD_NAMES = {"robust": "robust_lbfgs", "naive": "naive_lbfgs",
                 "gd": "gradient_descent", "sgd": "serial_sgd"}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_trace_csv(result: RunResult, timing: bool = False) -> str:
    """Locale-independent trace CSV; without `timing` the elapsed_ns cells are
    left empty so identical flags give byte-identical files."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for rec in result.records:
        writer.writerow([
            rec.k, rec.epoch, _fmt(rec.F_batch), _fmt(rec.grad_norm_batch),
            _fmt(rec.F_full), _fmt(rec.grad_norm_full), _fmt(rec.pair_skipped),
            rec.batch_size, rec.overlap_size,
            rec.elapsed_ns if timing else "",
        ])
    return buf.getvalue()


def write_manifest(trace_path: Path, config: SolverConfig, dataset_id: str,
                   dataset_sha256: str, command: str) -> Path:
    lines = [
        f"artifact_version={__version__}",
        f"created={datetime.now(timezone.utc).isoformat()}",
        f"command={command}",
        f"dataset={dataset_id}",
        f"dataset_sha256={dataset_sha256}",
        f"trace={trace_path}",
    ]
    for name, value in vars(config).items():
        lines.append(f"{name}={_fmt(value)}")
    manifest_path = Path(str(trace_path) + ".manifest")
    _atomic_write(manifest_path, "\n".join(lines) + "\n")
    return manifest_path


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--dataset", help="LIBSVM file path")
    source.add_argument("--synthetic", metavar="N,D,NNZ,SEED",
                        help="generate sparse data: n,d,nnz_per_row,seed")
    parser.add_argument("--problem", choices=["logistic", "quadratic", "cauchy"],
                        default="logistic")
    parser.add_argument("--method", choices=sorted(_METHOD_NAMES), required=True)
    parser.add_argument("--strategy", choices=["partition", "subsample", "fault"],
                        default="partition")
    parser.add_argument("--r", type=float, default=0.1, help="batch fraction |S|/n")
    parser.add_argument("--o", type=float, default=0.2, help="overlap fraction |O|/|S|")
    parser.add_argument("--alpha", type=float, required=True, help="fixed step length")
    parser.add_argument("--memory", type=int, default=10, help="curvature pairs kept")
    parser.add_argument("--epsilon", type=float, default=1e-6, help="cautious threshold")
    parser.add_argument("--cautious", action="store_true")
    bound = parser.add_mutually_exclusive_group(required=True)
    bound.add_argument("--epochs", type=int)
    bound.add_argument("--max-iters", type=int)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--nodes", type=int, default=16, help="node count K (fault strategy)")
    parser.add_argument("--p", type=float, default=0.0, help="per-node failure probability")
    parser.add_argument("--redistribute-every", type=int, default=None,
                        help="reshuffle node data every E iterations (fault strategy)")
    parser.add_argument("--dim", type=int, default=None, help="feature-dimension override")
    parser.add_argument("--zero-one-labels", action="store_true",
                        help="accept 0/1 labels, mapping 0 to -1")
    parser.add_argument("--sigma", type=float, default=None,
                        help="logistic L2 weight (default 1/n)")
    parser.add_argument("--quad-lambda-min", type=float, default=1.0)
    parser.add_argument("--quad-lambda-max", type=float, default=10.0)
    parser.add_argument("--quad-noise", type=float, default=1.0,
                        help="batch-gradient noise scale of the quadratic problem")
    parser.add_argument("--w0", choices=["zeros", "gaussian"], default="zeros")
    parser.add_argument("--eval-every", type=int, default=None,
                        help="full-gradient cadence in iterations (default: each epoch)")
    parser.add_argument("--chunks", type=int, default=1, help="gradient-reduction chunks")
    parser.add_argument("--timing", action="store_true",
                        help="write wall-clock elapsed_ns (breaks byte-determinism)")
    parser.add_argument("--out", required=True, help="output path")


def _parse_synthetic(text: str) -> SyntheticSpec:
    parts = text.split(",")
    if len(parts) != 4:
        raise CliError("--synthetic expects n,d,nnz,seed")
    try:
        n, d, nnz, seed = (int(p) for p in parts)
    except ValueError:
        raise CliError("--synthetic expects four integers") from None
    return SyntheticSpec(n=n, d=d, nnz_per_row=nnz, seed=seed)


def build_problem(args):
    """Returns (problem, dataset_id, dataset_sha256)."""
    if args.dataset is not None:
        path = Path(args.dataset)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise CliError(f"cannot read dataset: {exc}") from None
        dataset = parse_libsvm(raw.decode("utf-8").splitlines(), dim=args.dim,
                               zero_one_labels=args.zero_one_labels)
        dataset_id = str(path)
        sha = hashlib.sha256(raw).hexdigest()
    else:
        spec = _parse_synthetic(args.synthetic)
        dataset = generate_synthetic(spec)
        dataset_id = f"synthetic:{args.synthetic}"
        sha = hashlib.sha256(to_libsvm_text(dataset).encode()).hexdigest()

    if args.problem == "logistic":
        problem = LogisticProblem(dataset, sigma=args.sigma)
    elif args.problem == "quadratic":
        eigs = np.linspace(args.quad_lambda_min, args.quad_lambda_max, dataset.d)
        w_star = np.random.default_rng(args.seed).standard_normal(dataset.d)
        problem = QuadraticProblem(eigs, n_examples=dataset.n, w_star=w_star,
                                   seed=args.seed, noise_scale=args.quad_noise)
    else:
        spec = _parse_synthetic(args.synthetic) if args.synthetic else None
        seed = spec.seed if spec else args.seed
        problem = CauchyProblem(n_examples=dataset.n, d=dataset.d, seed=seed)
    return problem, dataset_id, sha


def build_config(args) -> SolverConfig:
    return SolverConfig(
        method=_METHOD_NAMES[args.method],
        alpha=args.alpha,
        m=args.memory,
        epsilon=args.epsilon,
        cautious=args.cautious,
        strategy=args.strategy,
        r=args.r,
        o=args.o,
        K=args.nodes,
        p=args.p,
        epochs=args.epochs,
        max_iters=args.max_iters,
        seed=args.seed,
        eval_every=args.eval_every,
        chunk_count=args.chunks,
        w0_mode="seeded_gaussian" if args.w0 == "gaussian" else "zeros",
        redistribute_every=args.redistribute_every,
    )


def cmd_run(args) -> int:
    problem, dataset_id, sha = build_problem(args)
    config = build_config(args)
    result = run(problem, config)
    out = Path(args.out)
    _atomic_write(out, format_trace_csv(result, timing=args.timing))
    write_manifest(out, config, dataset_id, sha, command="run")
    return 2 if result.diverged else 0


def _epoch_series(result: RunResult) -> dict[int, float]:
    """First recorded full-gradient norm of each epoch."""
    series: dict[int, float] = {}
    for rec in result.records:
        if rec.grad_norm_full is not None and rec.epoch not in series:
            series[rec.epoch] = rec.grad_norm_full
    return series


def summarize_sweep(results: list[RunResult]) -> list[tuple[int, float, float, float]]:
    """Per-epoch mean/min/max of the full gradient norm across seeds.

    Only epochs reached by every seed are reported, so the statistics always
    aggregate all N runs.
    """
    per_seed = [_epoch_series(res) for res in results]
    common = sorted(set.intersection(*(set(s) for s in per_seed)))
    rows = []
    for epoch in common:
        values = np.array([s[epoch] for s in per_seed])
        rows.append((epoch, float(values.mean()), float(values.min()), float(values.max())))
    return rows


def cmd_sweep(args) -> int:
    problem, dataset_id, sha = build_problem(args)
    base = build_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    configs = [replace(base, seed=i) for i in range(1, args.seeds + 1)]
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(lambda cfg: run(problem, cfg), configs))
    else:
        results = [run(problem, cfg) for cfg in configs]

    for cfg, result in zip(configs, results):
        trace_path = out_dir / f"trace_seed{cfg.seed}.csv"
        _atomic_write(trace_path, format_trace_csv(result, timing=args.timing))
        write_manifest(trace_path, cfg, dataset_id, sha, command="sweep")

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(plots.SUMMARY_COLUMNS)
    for epoch, mean, lo, hi in summarize_sweep(results):
        writer.writerow([epoch, _fmt(mean), _fmt(lo), _fmt(hi)])
    summary_path = out_dir / "summary.csv"
    _atomic_write(summary_path, buf.getvalue())

    if not args.no_figure:
        data = plots.load_summary(summary_path)
        plots.render_summary_figure([(f"{args.method}", data)], out_dir / "summary.svg",
                                    logy=True)
    diverged = sum(res.diverged for res in results)
    if diverged:
        print(f"note: {diverged}/{len(results)} seed(s) hit the divergence guard",
              file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    names = args.check or list(verify.ALL_CHECKS)
    results = []
    for name in names:
        if name not in verify.ALL_CHECKS:
            raise CliError(f"unknown check {name!r}")
        kwargs = {}
        if name in ("gradient",) and args.instances:
            kwargs["instances"] = args.instances
        if name in ("two-loop",) and args.instances:
            kwargs["histories"] = args.instances
        if name in ("curvature", "samplers") and args.iters:
            kwargs["iters"] = args.iters
        if name == "convex-bound":
            if args.seeds:
                kwargs["n_seeds"] = args.seeds
            if args.kmax:
                kwargs["k_max"] = args.kmax
        if name == "nonconvex-bound" and args.horizon:
            kwargs["horizon"] = args.horizon
        result = verify.ALL_CHECKS[name](**kwargs)
        print(result.describe())
        results.append(result)

    if args.out:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["check", "passed", "detail", "value"])
        for res in results:
            for key, value in res.details.items():
                writer.writerow([res.name, _fmt(res.passed), key, _fmt(float(value))])
        _atomic_write(Path(args.out), buf.getvalue())
    return 0 if all(res.passed for res in results) else 1


def cmd_plot(args) -> int:
    paths = [Path(p) for p in args.traces.split(",") if p]
    if not paths:
        raise CliError("--traces expects at least one summary CSV")
    summaries = []
    for path in paths:
        try:
            summaries.append((path.stem, plots.load_summary(path)))
        except (OSError, ValueError) as exc:
            raise CliError(str(exc)) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    plots.render_summary_figure(summaries, out, logy=args.logy)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="mblbfgs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single experiment -> trace.csv + manifest")
    _add_run_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="multi-seed experiment -> traces + summary.csv")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--seeds", type=int, required=True, help="sweep seeds 1..N")
    p_sweep.add_argument("--jobs", type=int, default=1, help="concurrent seed runs")
    p_sweep.add_argument("--no-figure", action="store_true",
                         help="skip rendering summary.svg")
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="run property checks against oracles")
    p_verify.add_argument("--check", action="append",
                          help="gradient|two-loop|curvature|convex-bound|nonconvex-bound|samplers "
                               "(repeatable; default all)")
    p_verify.add_argument("--instances", type=int, default=None)
    p_verify.add_argument("--iters", type=int, default=None)
    p_verify.add_argument("--seeds", type=int, default=None)
    p_verify.add_argument("--kmax", type=int, default=None)
    p_verify.add_argument("--horizon", type=int, default=None)
    p_verify.add_argument("--out", default=None, help="machine-readable CSV report")
    p_verify.set_defaults(func=cmd_verify)

    p_plot = sub.add_parser("plot", help="render summary CSVs as an SVG line chart")
    p_plot.add_argument("--traces", required=True, help="comma-separated summary CSVs")
    p_plot.add_argument("--out", required=True, help="output SVG path")
    p_plot.add_argument("--logy", action="store_true")
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
