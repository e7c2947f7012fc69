"""
Bounded finite-difference stochastic approximation for maximum likelihood.

Each iteration draws one random subsample of the data and uses it for every
loss evaluation in that iteration, so the two sides of each central
difference share their noise.  The gradient is estimated one coordinate at a
time from projected perturbations, and the step is projected back onto the
parameter box.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.random import Generator

from gkdist.core import _LOG_SQRT_2PI, Family, _log_qprime, _solve_z
from gkdist.errors import ConfigError, DomainError, GkError

__all__ = [
    "GainSchedule",
    "FdsaConfig",
    "FdsaResult",
    "project",
    "loss_estimate",
    "batch_loss",
    "fdsa_gradient",
    "estimate_c0",
    "fdsa_minimize",
    "run_fdsa",
]

C0_FLOOR = 1e-4

BatchLoss = Callable[[np.ndarray], np.ndarray]


def project(theta, lo, hi) -> np.ndarray:
    """Clamp each component of ``theta`` into ``[lo, hi]``."""
    return np.minimum(np.maximum(np.asarray(theta, dtype=float), lo), hi)


def batch_loss(
    x: np.ndarray,
    n: int,
    thetas,
    logB: bool = False,
    family: Family | str = Family.GK,
    c: float = 0.8,
) -> np.ndarray:
    """Scaled negative log likelihood ``(n / m) sum -log f(x_i)`` for each row of ``thetas``.

    ``x`` is the (sub)sample of size ``m``.  Rows whose likelihood cannot be
    evaluated get ``+inf``.
    """
    gh = Family.parse(family) is Family.GH
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    x = np.asarray(x, dtype=float).ravel()
    P = thetas.shape[0]
    out = np.full(P, np.inf)
    with np.errstate(over="ignore", invalid="ignore"):
        B = np.exp(thetas[:, 1]) if logB else thetas[:, 1].copy()
    ok = np.all(np.isfinite(thetas), axis=1) & np.isfinite(B) & (B > 0)
    rows = np.flatnonzero(ok)
    if rows.size == 0:
        return out
    A, g, kh = thetas[rows, 0:1], thetas[rows, 2:3], thetas[rows, 3:4]
    Bc = B[rows, None]
    try:
        z, sat = _solve_z(x[None, :], A, Bc, g, kh, c, gh)
    except GkError:
        if rows.size == 1:
            return out
        # isolate the offending rows
        for r in rows:
            out[r] = batch_loss(x, n, thetas[r], logB, family, c)[0]
        return out
    with np.errstate(over="ignore", invalid="ignore"):
        log_qp, r = _log_qprime(z, Bc, g, kh, c, gh)
        nll = 0.5 * z * z + _LOG_SQRT_2PI + log_qp
    bad = np.any((sat != 0) | ~(r > 0) | ~np.isfinite(nll), axis=1)
    vals = np.sum(nll, axis=1) * (n / x.size)
    vals[bad] = np.inf
    out[rows] = vals
    return out


def loss_estimate(
    data,
    theta,
    m: int,
    subsample,
    logB: bool = False,
    family: Family | str = Family.GK,
    c: float = 0.8,
) -> float:
    """Unbiased estimate of the full negative log likelihood from ``m`` observations."""
    x = np.asarray(data, dtype=float).ravel()
    idx = np.asarray(subsample, dtype=np.int64)
    if idx.size != m:
        raise DomainError(f"subsample has {idx.size} indices, expected {m}")
    return float(batch_loss(x[idx], x.size, theta, logB, family, c)[0])


@dataclass
class GainSchedule:
    """Gain sequences ``a_t = a0 (S + t + 1)^-alpha`` and ``c_t = c0 (t + 1)^-gamma``.

    ``stability_offset`` is ``S``.  ``c0=None`` means "estimate from the
    spread of the loss at the starting point".
    """

    a0: float | np.ndarray = 1.0
    c0: float | np.ndarray | None = None
    alpha: float = 1.0
    gamma: float = 0.49
    stability_offset: float = 100.0

    def __post_init__(self) -> None:
        self.a0 = np.broadcast_to(np.asarray(self.a0, dtype=float), (4,)).copy()
        if np.any(self.a0 < 0) or not np.all(np.isfinite(self.a0)):
            raise ConfigError("a0 must be finite and non-negative")
        if self.c0 is not None:
            self.c0 = np.broadcast_to(np.asarray(self.c0, dtype=float), (4,)).copy()
            if np.any(~(self.c0 > 0)) or not np.all(np.isfinite(self.c0)):
                raise ConfigError("c0 must be finite and positive")
        if not 0 < self.gamma < self.alpha <= 1:
            raise ConfigError(f"need 0 < gamma < alpha <= 1, got gamma={self.gamma}, alpha={self.alpha}")
        if self.stability_offset < 0:
            raise ConfigError("stability_offset must be non-negative")

    def a(self, t: int) -> np.ndarray:
        return self.a0 * (self.stability_offset + t + 1) ** (-self.alpha)

    def c(self, t: int, c0=None) -> np.ndarray:
        c0 = self.c0 if c0 is None else np.broadcast_to(np.asarray(c0, dtype=float), (4,))
        if c0 is None:
            raise ConfigError("c0 has not been set")
        return c0 * (t + 1) ** (-self.gamma)


@dataclass
class FdsaConfig:
    N: int
    theta0: np.ndarray
    bounds_lo: np.ndarray = field(default_factory=lambda: np.full(4, -np.inf))
    bounds_hi: np.ndarray = field(default_factory=lambda: np.full(4, np.inf))
    batch_size: int = 100
    gains: GainSchedule = field(default_factory=GainSchedule)
    logB: bool = False
    seed: int | None = None
    c: float = 0.8
    c0_replicates: int = 20

    def __post_init__(self) -> None:
        self.theta0 = np.asarray(self.theta0, dtype=float)
        self.bounds_lo = np.broadcast_to(np.asarray(self.bounds_lo, dtype=float), (4,)).copy()
        self.bounds_hi = np.broadcast_to(np.asarray(self.bounds_hi, dtype=float), (4,)).copy()
        if self.N < 1:
            raise ConfigError(f"N must be at least 1, got {self.N}")
        if self.theta0.shape != (4,) or not np.all(np.isfinite(self.theta0)):
            raise ConfigError("theta0 must be a finite 4-vector")
        if np.any(~(self.bounds_lo < self.bounds_hi)):
            raise ConfigError("bounds_lo must be strictly below bounds_hi")
        if np.any(self.theta0 < self.bounds_lo) or np.any(self.theta0 > self.bounds_hi):
            raise ConfigError("theta0 lies outside the bounds")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")


@dataclass
class FdsaResult:
    trajectory: np.ndarray
    loss_estimates: np.ndarray
    c0: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.trajectory[-1]


def fdsa_gradient(
    loss: BatchLoss,
    theta: np.ndarray,
    c_t: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    diagnostics: Counter | None = None,
) -> tuple[np.ndarray, float]:
    """Coordinatewise central-difference gradient estimate at ``theta``.

    ``loss`` maps a ``(P, 4)`` array of parameter rows to ``P`` losses and is
    called once for all perturbations.  Returns ``(gradient, loss(theta))``.
    A coordinate pinched to zero width by the bounds gets a zero gradient;
    a coordinate whose perturbed losses are infinite is retried once at half
    the width and otherwise also set to zero.
    """
    if diagnostics is None:
        diagnostics = Counter()
    eye = np.eye(4)
    plus = project(theta + c_t[:, None] * eye, lo, hi)
    minus = project(theta - c_t[:, None] * eye, lo, hi)
    vals = loss(np.vstack([theta, plus, minus]))
    centre, l_plus, l_minus = vals[0], vals[1:5], vals[5:9]

    retry = np.flatnonzero(~(np.isfinite(l_plus) & np.isfinite(l_minus)))
    if retry.size:
        half = 0.5 * c_t[retry, None] * eye[retry]
        plus[retry] = project(theta + half, lo, hi)
        minus[retry] = project(theta - half, lo, hi)
        redo = loss(np.vstack([plus[retry], minus[retry]]))
        l_plus[retry], l_minus[retry] = redo[: retry.size], redo[retry.size :]

    grad = np.zeros(4)
    for i in range(4):
        width = abs(plus[i, i] - minus[i, i])
        if width == 0:
            diagnostics["boundary_pinch"] += 1
        elif not (math.isfinite(l_plus[i]) and math.isfinite(l_minus[i])):
            diagnostics["infinite_loss"] += 1
        else:
            grad[i] = (l_plus[i] - l_minus[i]) / width
    return grad, float(centre)


def fdsa_minimize(
    loss_factory: Callable[[Generator], BatchLoss],
    theta0,
    N: int,
    gains: GainSchedule,
    lo,
    hi,
    rng: Generator,
    c0=None,
) -> FdsaResult:
    """Generic bounded FDSA.

    ``loss_factory(rng)`` is called once per iteration and returns the loss
    used for every evaluation in that iteration.
    """
    c0 = gains.c0 if c0 is None else np.broadcast_to(np.asarray(c0, dtype=float), (4,))
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    theta = project(theta0, lo, hi)
    traj = np.empty((N + 1, 4))
    traj[0] = theta
    losses = np.empty(N)
    diagnostics: Counter = Counter()
    for t in range(N):
        loss = loss_factory(rng)
        grad, losses[t] = fdsa_gradient(loss, theta, gains.c(t, c0), lo, hi, diagnostics)
        theta = project(theta - gains.a(t) * grad, lo, hi)
        traj[t + 1] = theta
    return FdsaResult(traj, losses, np.asarray(c0, dtype=float), dict(diagnostics))


def _subsampler(x: np.ndarray, m: int, logB: bool, family, c: float):
    n = x.size

    def factory(rng: Generator) -> BatchLoss:
        sub = x if m == n else x[rng.choice(n, m, replace=False)]
        return lambda thetas: batch_loss(sub, n, thetas, logB, family, c)

    return factory


def estimate_c0(
    data,
    theta0,
    m: int,
    replicates: int = 20,
    logB: bool = False,
    family: Family | str = Family.GK,
    seed: int | Generator | None = None,
    c: float = 0.8,
) -> np.ndarray:
    """Standard deviation of the subsampled loss at ``theta0``, as a 4-vector."""
    if replicates < 2:
        raise ConfigError("replicates must be at least 2")
    x = np.asarray(data, dtype=float).ravel()
    if not 1 <= m <= x.size:
        raise ConfigError(f"batch size must lie in [1, {x.size}], got {m}")
    rng = np.random.default_rng(seed)
    factory = _subsampler(x, m, logB, family, c)
    vals = np.array([factory(rng)(theta0)[0] for _ in range(replicates)])
    sd = float(np.std(vals, ddof=1)) if np.all(np.isfinite(vals)) else math.nan
    # summation order can leave rounding-level spread in a deterministic loss
    if not sd > 1e-12 * max(1.0, float(np.max(np.abs(vals)))):
        warnings.warn(
            f"loss spread at theta0 is {sd!r}; using c0 = {C0_FLOOR:g}", RuntimeWarning, stacklevel=2
        )
        sd = C0_FLOOR
    return np.full(4, sd)


def run_fdsa(data, cfg: FdsaConfig, family: Family | str = Family.GK) -> FdsaResult:
    """Maximum-likelihood FDSA on IID data with subsampled likelihood estimates."""
    x = np.asarray(data, dtype=float).ravel()
    if not 1 <= cfg.batch_size <= x.size:
        raise ConfigError(f"batch_size must lie in [1, {x.size}], got {cfg.batch_size}")
    rng = np.random.default_rng(cfg.seed)
    c0 = cfg.gains.c0
    if c0 is None:
        c0 = estimate_c0(x, cfg.theta0, cfg.batch_size, cfg.c0_replicates, cfg.logB, family, rng, cfg.c)
    factory = _subsampler(x, cfg.batch_size, cfg.logB, family, cfg.c)
    return fdsa_minimize(factory, cfg.theta0, cfg.N, cfg.gains, cfg.bounds_lo, cfg.bounds_hi, rng, c0)
