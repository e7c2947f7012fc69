"""Timing of the distribution functions against normal-distribution baselines."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri

from gkdist.core import QdParams, cdf, pdf, quantile, sample, z2q
from gkdist.errors import ConfigError, NumericFailure

__all__ = ["BenchRow", "BenchReport", "run_bench", "OPERATIONS"]

OPERATIONS = ("quantile", "sample", "cdf", "pdf")
#: parameter vector (A, B, g, kh) used for both families
BENCH_THETA = (1.0, 2.0, 3.0, 4.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass
class BenchRow:
    operation: str
    normal_us: float
    gk_us: float
    gh_us: float
    normal_median_us: float
    gk_median_us: float
    gh_median_us: float

    @property
    def ratio_gk(self) -> float:
        return self.gk_us / self.normal_us

    @property
    def ratio_gh(self) -> float:
        return self.gh_us / self.normal_us


@dataclass
class BenchReport:
    rows: list[BenchRow]
    n_eval: int
    repeats: int
    warmup: int
    spot_checks: dict = field(default_factory=dict)

    def row(self, operation: str) -> BenchRow:
        for r in self.rows:
            if r.operation == operation:
                return r
        raise KeyError(operation)

    header = (
        "operation",
        "normal_us",
        "gk_us",
        "gh_us",
        "ratio_gk",
        "ratio_gh",
        "normal_median_us",
        "gk_median_us",
        "gh_median_us",
    )

    def table(self) -> list[tuple]:
        return [
            (
                r.operation,
                r.normal_us,
                r.gk_us,
                r.gh_us,
                r.ratio_gk,
                r.ratio_gh,
                r.normal_median_us,
                r.gk_median_us,
                r.gh_median_us,
            )
            for r in self.rows
        ]


def _time(fn: Callable[[], object], repeats: int, warmup: int) -> tuple[float, float]:
    for _ in range(warmup):
        fn()
    times = np.empty(repeats)
    for i in range(repeats):
        start = time.perf_counter()
        fn()
        times[i] = time.perf_counter() - start
    return float(times.mean() * 1e6), float(np.median(times) * 1e6)


def _spot_check(p: QdParams, u: np.ndarray) -> float:
    x = quantile(u, p)
    err = float(np.max(np.abs(cdf(x, p) - u)))
    z = cdf(x, p, return_z=True)
    if not np.allclose(z2q(z, p), x, rtol=1e-9, atol=1e-12):
        raise NumericFailure("benchmark spot check failed: Q(cdf_z(x)) != x")
    if not np.all(pdf(x, p) > 0):
        raise NumericFailure("benchmark spot check failed: non-positive density")
    return err


def run_bench(n_points: int = 100, repeats: int = 30, warmup: int = 3, seed: int | None = 0) -> BenchReport:
    """Mean and median microseconds per call for each operation on ``n_points`` inputs."""
    if repeats < 10:
        raise ConfigError("repeats must be at least 10")
    if n_points < 1:
        raise ConfigError("n_points must be positive")
    rng = np.random.default_rng(seed)
    u = rng.uniform(0.0, 1.0, n_points)
    gk = QdParams.gk(*BENCH_THETA)
    gh = QdParams.gh(*BENCH_THETA)
    x_norm = rng.standard_normal(n_points)
    x_gk = sample(n_points, gk, rng)
    x_gh = sample(n_points, gh, rng)
    spot = {"gk_cdf_roundtrip": _spot_check(gk, u), "gh_cdf_roundtrip": _spot_check(gh, u)}

    cases = {
        "quantile": (lambda: ndtri(u), lambda: quantile(u, gk), lambda: quantile(u, gh)),
        "sample": (
            lambda: rng.standard_normal(n_points),
            lambda: sample(n_points, gk, rng),
            lambda: sample(n_points, gh, rng),
        ),
        "cdf": (lambda: ndtr(x_norm), lambda: cdf(x_gk, gk), lambda: cdf(x_gh, gh)),
        "pdf": (
            lambda: _INV_SQRT_2PI * np.exp(-0.5 * x_norm * x_norm),
            lambda: pdf(x_gk, gk),
            lambda: pdf(x_gh, gh),
        ),
    }
    rows = []
    for op in OPERATIONS:
        (nm, nmed), (km, kmed), (hm, hmed) = (_time(fn, repeats, warmup) for fn in cases[op])
        rows.append(BenchRow(op, nm, km, hm, nmed, kmed, hmed))
    return BenchReport(rows, n_points, repeats, warmup, spot)
