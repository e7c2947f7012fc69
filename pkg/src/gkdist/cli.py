"""
Command-line interface.

Exit status is 0 on success, 1 for user errors (bad arguments, unreadable or
malformed input, invalid configuration) and 2 for numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import math
import secrets
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from gkdist import __version__
from gkdist.abc import AbcConfig, SummaryKind, run_abc, uniform_box_prior
from gkdist.bench import BenchReport, run_bench
from gkdist.core import Family, QdParams, cdf, pdf, quantile, sample
from gkdist.errors import GkError, NumericFailure
from gkdist.fdsa import FdsaConfig, GainSchedule, run_fdsa
from gkdist.io import RunManifest, log_returns, read_column, read_price_csv, write_csv
from gkdist.mcmc import McmcConfig, flat_prior, flat_b_prior, positive_k_prior, run_mcmc
from gkdist.pipeline import STAGES, AnalyzeConfig, analyze
from gkdist.validity import validity_grid

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 1, 2

PRIORS = {"flat": flat_prior, "k-positive": positive_k_prior, "flat-b": flat_b_prior}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _vec4(text: str) -> list[float]:
    vals = _floats(text)
    if len(vals) == 1:
        vals = vals * 4
    if len(vals) != 4:
        raise argparse.ArgumentTypeError(f"expected 1 or 4 comma-separated numbers, got {text!r}")
    return vals


def _add_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", choices=["gk", "gh"], default="gk")
    p.add_argument("--A", type=float, default=0.0, help="location")
    p.add_argument("--B", type=float, default=1.0, help="scale (> 0)")
    p.add_argument("--g", type=float, default=0.0, help="skewness")
    p.add_argument("--k", "--h", dest="kh", type=float, default=0.0, help="kurtosis (k or h)")
    p.add_argument("--c", type=float, default=0.8, help="asymmetry constant")


def _add_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default="-", help="output CSV (default: stdout)")
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json when --out is a file)")


def _add_data(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="CSV holding the observations")
    src.add_argument("--prices", help="CSV of prices; their log returns are the observations")
    p.add_argument("--column", default=None, help="column name (default: x for --data, price for --prices)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gkdist", description="g-and-k / g-and-h distributions and inference")
    parser.add_argument("--version", action="version", version=f"gkdist {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, help_ in (
        ("quantile", "quantile function at probabilities"),
        ("cdf", "cumulative distribution function"),
        ("pdf", "probability density"),
    ):
        p = sub.add_parser(name, help=help_)
        _add_params(p)
        p.add_argument("values", nargs="*", type=float)
        p.add_argument("--input", help="CSV file supplying the values")
        p.add_argument("--input-column", default="u" if name == "quantile" else "x")
        if name == "cdf":
            p.add_argument("--zscale", action="store_true", help="output the normal-scale root z")
        if name == "pdf":
            p.add_argument("--log", action="store_true", help="output the log density")
        _add_output(p)

    p = sub.add_parser("sample", help="random draws")
    _add_params(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int)
    _add_output(p)

    p = sub.add_parser("validity-grid", help="numerical validity over a (g, k) grid")
    p.add_argument("--family", choices=["gk", "gh"], default="gk")
    p.add_argument("--g-range", type=_floats, default=[-10.0, 10.0, 0.1], metavar="MIN,MAX,STEP")
    p.add_argument("--k-range", type=_floats, default=[-0.6, 0.1, 0.01], metavar="MIN,MAX,STEP")
    p.add_argument("--c", type=float, default=0.8)
    _add_output(p)

    p = sub.add_parser("fit-abc", help="rejection ABC")
    _add_data(p)
    p.add_argument("--family", choices=["gk", "gh"], default="gk")
    p.add_argument("--N", type=int, default=100_000)
    p.add_argument("--M", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=10_000)
    p.add_argument("--sumstats", choices=["order", "octile", "moment"], default="moment")
    p.add_argument("--prior-lo", type=_vec4, default=[-1.0, 0.0, -5.0, 0.0])
    p.add_argument("--prior-hi", type=_vec4, default=[1.0, 1.0, 5.0, 10.0])
    p.add_argument("--c", type=float, default=0.8)
    p.add_argument("--seed", type=int)
    _add_output(p)

    p = sub.add_parser("fit-fdsa", help="maximum likelihood by FDSA")
    _add_data(p)
    p.add_argument("--family", choices=["gk", "gh"], default="gk")
    p.add_argument("--theta0", type=_vec4, required=True, help="A,B,g,k (B as log B with --logB)")
    p.add_argument("--N", type=int, default=10_000)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--a0", type=_vec4, default=[1.0] * 4)
    p.add_argument("--c0", default="auto", help="'auto' or 1/4 comma-separated numbers")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.49)
    p.add_argument("--stability-offset", type=float, default=100.0)
    p.add_argument("--lo", type=_vec4, default=[-math.inf] * 4)
    p.add_argument("--hi", type=_vec4, default=[math.inf] * 4)
    p.add_argument("--logB", action="store_true")
    p.add_argument("--c", type=float, default=0.8)
    p.add_argument("--seed", type=int)
    _add_output(p)

    p = sub.add_parser("fit-mcmc", help="adaptive Metropolis posterior sampling")
    _add_data(p)
    p.add_argument("--family", choices=["gk", "gh"], default="gk")
    p.add_argument("--theta0", type=_vec4, required=True, help="A,B,g,k (B as log B with --logB)")
    p.add_argument("--sigma0", type=_floats, default=[0.01], help="1, 4 (diagonal) or 16 numbers")
    p.add_argument("--N", type=int, default=10_000)
    p.add_argument("--t0", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--logB", action="store_true")
    p.add_argument("--prior", choices=sorted(PRIORS), default="k-positive")
    p.add_argument("--c", type=float, default=0.8)
    p.add_argument("--seed", type=int)
    _add_output(p)

    p = sub.add_parser("analyze", help="ABC -> FDSA -> MCMC on log returns of a price CSV")
    p.add_argument("price_csv")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--stage", choices=STAGES, default="all", help="run stages up to and including this one")
    p.add_argument("--price-column", default="price")
    p.add_argument("--seed", type=int)
    p.add_argument("--abc-N", type=int, default=AnalyzeConfig.abc_N)
    p.add_argument("--abc-M", type=int, default=AnalyzeConfig.abc_M)
    p.add_argument("--fdsa-N", type=int, default=AnalyzeConfig.fdsa_N)
    p.add_argument("--fdsa-batch-size", type=int, default=AnalyzeConfig.fdsa_batch_size)
    p.add_argument("--fdsa-a0", type=_vec4, default=[1e-6, 1e-2, 1e-2, 1e-2])
    p.add_argument("--fdsa-c0", default="scaled", help="'scaled', 'auto' or 1/4 comma-separated numbers")
    p.add_argument("--mcmc-N", type=int, default=AnalyzeConfig.mcmc_N)
    p.add_argument("--mcmc-t0", type=int, default=AnalyzeConfig.mcmc_t0)

    p = sub.add_parser("bench", help="time distribution functions against the normal")
    p.add_argument("--n-points", type=int, default=100)
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    _add_output(p)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    return parser


def _params(args) -> QdParams:
    return QdParams(Family.parse(args.family), args.A, args.B, args.g, args.kh, args.c)


def _values(args) -> np.ndarray:
    vals = list(args.values)
    if args.input:
        vals.extend(read_column(args.input, args.input_column))
    if not vals:
        raise UsageError("no input values given")
    return np.asarray(vals, dtype=float)


def _observations(args) -> np.ndarray:
    if args.data:
        return read_column(args.data, args.column or "x")
    return log_returns(read_price_csv(args.prices, args.column or "price"))


def _c0(text: str):
    if text == "auto":
        return None
    try:
        return _vec4(text)
    except argparse.ArgumentTypeError as exc:
        raise UsageError(str(exc)) from None


def _seed(args) -> int:
    # an unseeded run still records the seed it used
    if getattr(args, "seed", None) is None:
        args.seed = secrets.randbits(32)
    return args.seed


def _sigma0(vals: list[float]) -> np.ndarray:
    if len(vals) == 1:
        return np.eye(4) * vals[0]
    if len(vals) == 4:
        return np.diag(vals)
    if len(vals) == 16:
        return np.asarray(vals).reshape(4, 4)
    raise UsageError("--sigma0 needs 1, 4 or 16 numbers")


def _run(args, argv: list[str]) -> RunManifest | None:
    cmd = args.command
    artifacts: list[str] = []

    if cmd in ("quantile", "cdf", "pdf"):
        p = _params(args)
        vals = _values(args)
        if cmd == "quantile":
            write_csv(args.out, ("u", "x"), zip(vals, np.atleast_1d(quantile(vals, p))))
        elif cmd == "cdf":
            res = np.atleast_1d(cdf(vals, p, return_z=args.zscale))
            write_csv(args.out, ("x", "z" if args.zscale else "u"), zip(vals, res))
        else:
            res = np.atleast_1d(pdf(vals, p, log_scale=args.log))
            write_csv(args.out, ("x", "log_density" if args.log else "density"), zip(vals, res))
    elif cmd == "sample":
        seed = _seed(args)
        write_csv(args.out, ("x",), ((v,) for v in sample(args.n, _params(args), seed)))
    elif cmd == "validity-grid":
        g = _grid(args.g_range)
        k = _grid(args.k_range)
        rows = validity_grid(g, k, args.c, args.family)
        write_csv(
            args.out,
            ("g", "k", "valid", "status", "min_r"),
            ((gg, kk, int(v.valid), v.status.value, v.min_r) for gg, kk, v in rows),
        )
    elif cmd == "fit-abc":
        seed = _seed(args)
        x = _observations(args)
        cfg = AbcConfig(
            N=args.N,
            M=args.M,
            rprior=uniform_box_prior(args.prior_lo, args.prior_hi),
            kind=SummaryKind.parse(args.sumstats),
            batch_size=args.batch_size,
            seed=seed,
            c=args.c,
        )
        res = run_abc(x, cfg, args.family)
        write_csv(args.out, ("A", "B", "g", "kh", "distance"), np.column_stack([res.accepted, res.distances]))
    elif cmd == "fit-fdsa":
        seed = _seed(args)
        x = _observations(args)
        gains = GainSchedule(args.a0, _c0(args.c0), args.alpha, args.gamma, args.stability_offset)
        cfg = FdsaConfig(
            N=args.N,
            theta0=args.theta0,
            bounds_lo=args.lo,
            bounds_hi=args.hi,
            batch_size=args.batch_size,
            gains=gains,
            logB=args.logB,
            seed=seed,
            c=args.c,
        )
        res = run_fdsa(x, cfg, args.family)
        losses = np.append(res.loss_estimates, np.nan)
        write_csv(
            args.out,
            ("iter", "A", "B_or_logB", "g", "kh", "loss_est"),
            ((t, *row, loss) for t, (row, loss) in enumerate(zip(res.trajectory, losses))),
        )
    elif cmd == "fit-mcmc":
        seed = _seed(args)
        x = _observations(args)
        cfg = McmcConfig(
            N=args.N,
            theta0=args.theta0,
            Sigma0=_sigma0(args.sigma0),
            t0=args.t0,
            epsilon=args.epsilon,
            logB=args.logB,
            log_prior=PRIORS[args.prior],
            c=args.c,
        )
        res = run_mcmc(x, cfg, args.family, seed)
        write_csv(
            args.out,
            ("iter", "A", "B_or_logB", "g", "kh"),
            ((t, *row) for t, row in enumerate(res.chain)),
        )
    elif cmd == "analyze":
        seed = _seed(args)
        cfg = AnalyzeConfig(
            stage=args.stage,
            seed=seed,
            price_column=args.price_column,
            abc_N=args.abc_N,
            abc_M=args.abc_M,
            fdsa_N=args.fdsa_N,
            fdsa_batch_size=args.fdsa_batch_size,
            fdsa_a0=args.fdsa_a0,
            fdsa_c0=args.fdsa_c0 if args.fdsa_c0 == "scaled" else _c0(args.fdsa_c0),
            mcmc_N=args.mcmc_N,
            mcmc_t0=args.mcmc_t0,
        )
        analyze(args.price_csv, args.out_dir, cfg, _replay_argv(argv, seed))
        return None
    elif cmd == "bench":
        report: BenchReport = run_bench(args.n_points, args.repeats, args.warmup, args.seed)
        write_csv(args.out, report.header, report.table())
    elif cmd == "replay":
        manifest = RunManifest.load(args.manifest)
        return main(manifest.argv, _nested=True)

    if args.out != "-":
        artifacts.append(str(args.out))
    params = {k: v for k, v in vars(args).items() if k not in ("command", "manifest", "verbose")}
    return RunManifest(cmd, params, getattr(args, "seed", None), _replay_argv(argv, getattr(args, "seed", None)), artifacts)


def _replay_argv(argv: list[str], seed: int | None) -> list[str]:
    out = list(argv)
    if seed is not None and "--seed" not in out and not any(a.startswith("--seed=") for a in out):
        out += ["--seed", str(seed)]
    return out


def _grid(spec: list[float]) -> np.ndarray:
    if len(spec) != 3 or not spec[2] > 0 or spec[1] < spec[0]:
        raise UsageError("range must be MIN,MAX,STEP with STEP > 0 and MAX >= MIN")
    lo, hi, step = spec
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(count), 10)


def main(argv: Sequence[str] | None = None, _nested: bool = False) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    warnings.simplefilter("default")

    try:
        manifest = _run(args, argv)
        if isinstance(manifest, int):
            return manifest
        if manifest is not None:
            path = getattr(args, "manifest", None)
            if path is None and args.out != "-":
                path = f"{args.out}.manifest.json"
            if path is not None:
                manifest.write(path)
    except NumericFailure as exc:
        print(f"gkdist: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GkError, UsageError, ValueError, OSError) as exc:
        print(f"gkdist: error: {exc}", file=sys.stderr)
        return EXIT_USER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
