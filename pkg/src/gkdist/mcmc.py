"""
Adaptive Metropolis sampling of the posterior for IID data.

For the first ``t0`` iterations proposals use the fixed covariance
``Sigma0``; afterwards ``(2.4^2 / 4) (S + eps I)`` where ``S`` is the sample
covariance of the chain states ``theta_1 .. theta_{t-1}`` (rejections
included), maintained incrementally.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from gkdist.core import Family, QdParams, pdf
from gkdist.errors import ConfigError, DomainError, GkError

__all__ = [
    "RunningCovariance",
    "McmcConfig",
    "McmcResult",
    "log_likelihood",
    "flat_prior",
    "positive_k_prior",
    "flat_b_prior",
    "run_mcmc",
]

_SCALE = 2.4**2 / 4


def log_likelihood(
    data,
    theta,
    logB: bool = False,
    family: Family | str = Family.GK,
    c: float = 0.8,
    diagnostics: Counter | None = None,
) -> float:
    """Sum of log densities of ``data`` under ``theta = (A, B or log B, g, kh)``.

    Parameters that cannot be evaluated (``B <= 0``, root-finding failure,
    a decreasing quantile function) give ``-inf``; each such event is counted
    under ``"likelihood_failures"`` in ``diagnostics`` when supplied.
    """
    x = np.asarray(data, dtype=float)
    if x.size == 0:
        raise DomainError("data must be non-empty")
    try:
        p = QdParams.from_theta(theta, family, logB, c)
        with warnings.catch_warnings(), np.errstate(over="ignore"):
            warnings.simplefilter("ignore")
            total = float(np.sum(pdf(x, p, log_scale=True)))
    except (GkError, OverflowError):
        if diagnostics is not None:
            diagnostics["likelihood_failures"] += 1
        return -math.inf
    return total if not math.isnan(total) else -math.inf


def flat_prior(theta) -> float:
    return 0.0


def positive_k_prior(theta) -> float:
    """Flat prior restricted to ``kh >= 0``."""
    return 0.0 if theta[3] >= 0 else -math.inf


def flat_b_prior(theta) -> float:
    """Density proportional to ``B 1(kh >= 0)`` on ``(A, log B, g, kh)``.

    This is the improper prior that is flat in the original ``B`` scale.
    """
    return float(theta[1]) if theta[3] >= 0 else -math.inf


class RunningCovariance:
    """Welford-style running mean and (n - 1)-normalised covariance."""

    def __init__(self, dim: int) -> None:
        self.count = 0
        self.mean = np.zeros(dim)
        self._m2 = np.zeros((dim, dim))

    def update(self, x) -> None:
        x = np.asarray(x, dtype=float)
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self._m2 += np.outer(delta, x - self.mean)

    @property
    def cov(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self._m2)
        m2 = 0.5 * (self._m2 + self._m2.T)
        return m2 / (self.count - 1)


@dataclass
class McmcConfig:
    N: int
    theta0: np.ndarray
    Sigma0: np.ndarray
    t0: int = 100
    epsilon: float = 1e-6
    logB: bool = False
    log_prior: Callable[[np.ndarray], float] = flat_prior
    c: float = 0.8

    def __post_init__(self) -> None:
        self.theta0 = np.asarray(self.theta0, dtype=float)
        self.Sigma0 = np.asarray(self.Sigma0, dtype=float)
        if self.N < 1:
            raise ConfigError(f"N must be at least 1, got {self.N}")
        if self.theta0.shape != (4,) or not np.all(np.isfinite(self.theta0)):
            raise ConfigError("theta0 must be a finite 4-vector")
        if self.Sigma0.shape != (4, 4) or not np.allclose(self.Sigma0, self.Sigma0.T):
            raise ConfigError("Sigma0 must be a symmetric 4x4 matrix")
        try:
            np.linalg.cholesky(self.Sigma0)
        except np.linalg.LinAlgError:
            raise ConfigError("Sigma0 must be positive definite") from None
        if self.t0 < 1:
            raise ConfigError(f"t0 must be at least 1, got {self.t0}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")


@dataclass
class McmcResult:
    chain: np.ndarray
    acceptance_count: int
    final_proposal_cov: np.ndarray
    sample_cov: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def acceptance_rate(self) -> float:
        return self.acceptance_count / (len(self.chain) - 1)


def run_mcmc(
    data,
    cfg: McmcConfig,
    family: Family | str = Family.GK,
    seed: int | np.random.Generator | None = None,
) -> McmcResult:
    """Run adaptive Metropolis for ``cfg.N`` iterations.

    Every iteration consumes four normal and one uniform variate, so runs of
    different length with the same seed share their common prefix.
    """
    x = np.asarray(data, dtype=float)
    family = Family.parse(family)
    rng = np.random.default_rng(seed)
    diagnostics: Counter = Counter()

    def log_target(theta: np.ndarray) -> float:
        lp = cfg.log_prior(theta)
        if lp == -math.inf:
            return lp
        return lp + log_likelihood(x, theta, cfg.logB, family, cfg.c, diagnostics)

    current = cfg.theta0.copy()
    if cfg.log_prior(current) == -math.inf:
        raise ConfigError("log_prior(theta0) is -inf")
    current_lt = log_target(current)

    chain = np.empty((cfg.N + 1, 4))
    chain[0] = current
    running = RunningCovariance(4)
    chol0 = np.linalg.cholesky(cfg.Sigma0)
    sigma = cfg.Sigma0
    ridge = cfg.epsilon * np.eye(4)
    accepted = 0

    for t in range(1, cfg.N + 1):
        if t <= cfg.t0:
            sigma, chol = cfg.Sigma0, chol0
        else:
            sigma = _SCALE * (running.cov + ridge)
            chol = np.linalg.cholesky(sigma)
        proposal = current + chol @ rng.standard_normal(4)
        log_u = np.log(rng.random())
        proposal_lt = log_target(proposal)
        if log_u < proposal_lt - current_lt:
            current, current_lt = proposal, proposal_lt
            accepted += 1
        chain[t] = current
        running.update(current)

    return McmcResult(chain, accepted, sigma, running.cov, dict(diagnostics))
