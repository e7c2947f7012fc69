"""
Rejection ABC with a variance-weighted Euclidean distance on summaries.

Simulations run in batches.  The per-coordinate variances used as weights
come from the first batch and are reused for every later batch; after each
batch only the ``M`` closest simulations seen so far are kept.  Each batch
draws from its own random stream spawned from the run seed, so a batch's
simulations do not depend on how many batches precede it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.random import Generator
from scipy.special import ndtri

from gkdist.core import Family, _q
from gkdist.errors import ConfigError, DegenerateSummaryError, DomainError
from gkdist.orderstats import _moments, moment_summaries, octile_indices, uniform_orderstats

__all__ = [
    "SummaryKind",
    "AbcConfig",
    "AbcResult",
    "summarize",
    "simulate_summaries",
    "weighted_distances",
    "uniform_box_prior",
    "batch_generators",
    "run_abc",
]

Prior = Callable[[int, Generator], np.ndarray]


class SummaryKind(enum.Enum):
    FULL_ORDER_STATS = "order"
    OCTILES = "octile"
    MOMENT_ESTIMATES = "moment"

    @classmethod
    def parse(cls, value: "SummaryKind | str") -> "SummaryKind":
        if isinstance(value, SummaryKind):
            return value
        text = str(value).strip().lower().replace("_", " ")
        aliases = {
            "order": cls.FULL_ORDER_STATS,
            "order statistics": cls.FULL_ORDER_STATS,
            "full order stats": cls.FULL_ORDER_STATS,
            "octile": cls.OCTILES,
            "octiles": cls.OCTILES,
            "moment": cls.MOMENT_ESTIMATES,
            "moments": cls.MOMENT_ESTIMATES,
            "moment estimates": cls.MOMENT_ESTIMATES,
        }
        try:
            return aliases[text]
        except KeyError:
            raise DomainError(f"unknown summary kind {value!r}") from None


def summarize(data, kind: SummaryKind | str) -> np.ndarray:
    """Summary statistics of an observed sample."""
    kind = SummaryKind.parse(kind)
    x = np.sort(np.asarray(data, dtype=float).ravel())
    if x.size == 0:
        raise DomainError("data must be non-empty")
    if kind is SummaryKind.FULL_ORDER_STATS:
        return x
    if x.size < 8:
        raise DomainError(f"octile summaries need at least 8 observations, got {x.size}")
    octiles = x[octile_indices(x.size) - 1]
    if kind is SummaryKind.OCTILES:
        return octiles
    return moment_summaries(octiles)


def uniform_box_prior(lo, hi) -> Prior:
    """Independent uniform prior on a box, as an ``rprior(count, rng)`` function."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != (4,) or hi.shape != (4,) or np.any(~(lo < hi)) or not np.all(np.isfinite([lo, hi])):
        raise ConfigError("prior bounds must be finite 4-vectors with lo < hi")

    def rprior(count: int, rng: Generator) -> np.ndarray:
        return rng.uniform(lo, hi, size=(count, 4))

    return rprior


@dataclass
class AbcConfig:
    N: int
    M: int
    rprior: Prior
    kind: SummaryKind | str = SummaryKind.MOMENT_ESTIMATES
    batch_size: int = 10_000
    seed: int | None = None
    c: float = 0.8

    def __post_init__(self) -> None:
        self.kind = SummaryKind.parse(self.kind)
        if not 1 <= self.M <= self.N:
            raise ConfigError(f"need 1 <= M <= N, got M={self.M}, N={self.N}")
        if self.batch_size < self.M:
            raise ConfigError(f"batch_size ({self.batch_size}) must be at least M ({self.M})")


@dataclass
class AbcResult:
    accepted: np.ndarray
    distances: np.ndarray
    weights_v: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def simulate_summaries(
    theta: np.ndarray,
    n: int,
    kind: SummaryKind | str,
    family: Family | str,
    rng: Generator,
    c: float = 0.8,
) -> np.ndarray:
    """Simulate summaries of size-``n`` datasets, one row per parameter row.

    Rows with unusable parameters (non-finite, ``B <= 0``) come back as NaN.
    """
    kind = SummaryKind.parse(kind)
    gh = Family.parse(family) is Family.GH
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    P = theta.shape[0]
    A, B, g, kh = (theta[:, j : j + 1] for j in range(4))
    bad = ~(np.all(np.isfinite(theta), axis=1) & (theta[:, 1] > 0))

    if kind is SummaryKind.FULL_ORDER_STATS:
        out = np.empty((P, n))
        rows = max(1, 1_000_000 // max(n, 1))
        for start in range(0, P, rows):
            sl = slice(start, min(P, start + rows))
            z = rng.standard_normal((sl.stop - sl.start, n))
            with np.errstate(over="ignore", invalid="ignore"):
                out[sl] = np.sort(_q(z, A[sl], B[sl], g[sl], kh[sl], c, gh), axis=1)
    else:
        if n < 8:
            raise DomainError(f"octile summaries need at least 8 observations, got {n}")
        u = uniform_orderstats(n, octile_indices(n), rng, size=P)
        with np.errstate(over="ignore", invalid="ignore"):
            out = _q(ndtri(u), A, B, g, kh, c, gh)
        if kind is SummaryKind.MOMENT_ESTIMATES:
            out = _moments(out)
    out[bad] = np.nan
    return out


def weighted_distances(sims: np.ndarray, s0: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``sum_j (s_ij - s0_j)^2 / v_j`` per row; rows with non-finite summaries get ``inf``."""
    with np.errstate(over="ignore", invalid="ignore"):
        d = np.sum((sims - s0) ** 2 / v, axis=1)
    d[~np.isfinite(d)] = np.inf
    return d


def _weights(sims: np.ndarray) -> np.ndarray:
    ok = np.all(np.isfinite(sims), axis=1)
    if ok.sum() < 2:
        raise DegenerateSummaryError("fewer than two usable simulations in the first batch")
    v = np.var(sims[ok], axis=0, ddof=1)
    for j, vj in enumerate(v):
        if not (vj > 0 and math.isfinite(vj)):
            raise DegenerateSummaryError(f"summary coordinate {j} has variance {vj!r} in the first batch")
    return v


def batch_generators(seed: int | None, n_batches: int) -> list[Generator]:
    """Independent random streams, one per batch, derived from ``seed``."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_batches)]


def run_abc(data, cfg: AbcConfig, family: Family | str = Family.GK) -> AbcResult:
    """Rejection ABC returning the ``M`` prior draws with the closest summaries."""
    x = np.asarray(data, dtype=float).ravel()
    s0 = summarize(x, cfg.kind)
    n = x.size
    sizes = [cfg.batch_size] * (cfg.N // cfg.batch_size)
    if cfg.N % cfg.batch_size:
        sizes.append(cfg.N % cfg.batch_size)

    v = None
    kept_theta = np.empty((0, 4))
    kept_d = np.empty(0)
    failed = 0
    for size, rng in zip(sizes, batch_generators(cfg.seed, len(sizes))):
        theta = np.asarray(cfg.rprior(size, rng), dtype=float)
        if theta.shape != (size, 4):
            raise ConfigError(f"rprior returned shape {theta.shape}, expected {(size, 4)}")
        sims = simulate_summaries(theta, n, cfg.kind, family, rng, cfg.c)
        if v is None:
            v = _weights(sims)
        d = weighted_distances(sims, s0, v)
        failed += int(np.count_nonzero(np.isinf(d)))
        kept_theta = np.concatenate([kept_theta, theta])
        kept_d = np.concatenate([kept_d, d])
        order = np.argsort(kept_d, kind="stable")[: cfg.M]
        kept_theta, kept_d = kept_theta[order], kept_d[order]

    return AbcResult(kept_theta, kept_d, v, {"failed_simulations": failed})
