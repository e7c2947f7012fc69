"""
Distribution functions for the g-and-k and generalised g-and-h families.

Both families are defined by pushing a standard normal variable ``z`` through
a transform ``Q(z)``::

    Q_gk(z) = A + B (1 + c tanh(g z / 2)) z (1 + z^2)^k
    Q_gh(z) = A + B (1 + c tanh(g z / 2)) z exp(h z^2 / 2)

The quantile function and sampler are direct.  The cdf inverts ``Q`` with a
vectorised safeguarded Newton iteration inside an expanding bracket, and the
density follows from the change of variables ``f(x) = phi(z) / Q'(z)``.

Parameters are not checked for validity (a strictly increasing ``Q``); use
:mod:`gkdist.validity` for that.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.random import Generator
from scipy.special import ndtr, ndtri

from gkdist.errors import DomainError, InvalidParameterError, NumericFailure, SaturationWarning

__all__ = [
    "Family",
    "QdParams",
    "Z_CAP",
    "z2q",
    "q_deriv",
    "r_func",
    "quantile",
    "sample",
    "cdf",
    "pdf",
]

#: Half-width of the initial cdf root bracket.
Z_START = 5.0
#: Largest |z| the cdf root search will consider.
Z_CAP = 50.0
_Z_TOL = 1e-12
_MAX_ITER = 200
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class Family(enum.Enum):
    GK = "gk"
    GH = "gh"

    @classmethod
    def parse(cls, value: "Family | str") -> "Family":
        if isinstance(value, Family):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown family {value!r}; expected 'gk' or 'gh'") from None


@dataclass(frozen=True)
class QdParams:
    """Parameters of a g-and-k or g-and-h distribution.

    ``kh`` is the kurtosis parameter: ``k`` for the g-and-k family and ``h``
    for the g-and-h family.
    """

    family: Family
    A: float
    B: float
    g: float
    kh: float
    c: float = 0.8

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family.parse(self.family))
        for name in ("A", "B", "g", "kh", "c"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"parameter {name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if not self.B > 0:
            raise DomainError(f"scale B must be positive, got {self.B!r}")

    @classmethod
    def gk(cls, A: float, B: float, g: float, k: float, c: float = 0.8) -> "QdParams":
        return cls(Family.GK, A, B, g, k, c)

    @classmethod
    def gh(cls, A: float, B: float, g: float, h: float, c: float = 0.8) -> "QdParams":
        return cls(Family.GH, A, B, g, h, c)

    @classmethod
    def from_theta(
        cls,
        theta: Sequence[float],
        family: Family | str = Family.GK,
        logB: bool = False,
        c: float = 0.8,
    ) -> "QdParams":
        """Build parameters from an ``(A, B or log B, g, kh)`` vector."""
        A, B, g, kh = (float(v) for v in theta)
        if logB:
            B = math.exp(B)
        return cls(Family.parse(family), A, B, g, kh, c)

    def theta(self, logB: bool = False) -> np.ndarray:
        return np.array([self.A, math.log(self.B) if logB else self.B, self.g, self.kh])

    @property
    def is_gh(self) -> bool:
        return self.family is Family.GH

    def _arrays(self) -> tuple[float, float, float, float, float, bool]:
        return self.A, self.B, self.g, self.kh, self.c, self.is_gh


# ---------------------------------------------------------------------------
# Broadcasting kernels.  Parameters may be arrays; callers in the inference
# modules use this to evaluate many parameter vectors at once.
# ---------------------------------------------------------------------------


def _q(z, A, B, g, kh, c, gh):
    skew = 1.0 + c * np.tanh(0.5 * g * z)
    if gh:
        tail = np.exp(0.5 * kh * z * z)
    else:
        tail = (1.0 + z * z) ** kh
    return A + B * skew * z * tail


def _r(z, g, kh, c, gh):
    half = 0.5 * g * z
    skew = 1.0 + c * np.tanh(half)
    z2 = z * z
    if gh:
        body = 1.0 + kh * z2
    else:
        body = (1.0 + (2.0 * kh + 1.0) * z2) / (1.0 + z2)
    return skew * body + c * half / np.cosh(half) ** 2


def _q_and_deriv(z, A, B, g, kh, c, gh):
    half = 0.5 * g * z
    th = np.tanh(half)
    skew = 1.0 + c * th
    z2 = z * z
    if gh:
        tail = np.exp(0.5 * kh * z2)
        body = 1.0 + kh * z2
    else:
        tail = (1.0 + z2) ** kh
        body = (1.0 + (2.0 * kh + 1.0) * z2) / (1.0 + z2)
    r = skew * body + c * half / np.cosh(half) ** 2
    return A + B * skew * z * tail, B * tail * r


def _log_qprime(z, B, g, kh, c, gh):
    """Return ``(log Q'(z), R(z))``; the log is only meaningful where R > 0."""
    r = _r(z, g, kh, c, gh)
    if gh:
        log_tail = 0.5 * kh * z * z
    else:
        log_tail = kh * np.log1p(z * z)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.log(B) + log_tail + np.log(r), r


def _solve_z(x, A, B, g, kh, c, gh):
    """Solve ``Q(z) = x`` elementwise.

    Returns ``(z, saturated)`` where ``saturated`` is -1 / +1 for roots lying
    below ``-Z_CAP`` / above ``Z_CAP`` (``z`` is then set to the cap) and 0
    otherwise.
    """
    x, A, B, g, kh, c = (np.asarray(a, dtype=float) for a in (x, A, B, g, kh, c))
    shape = np.broadcast_shapes(x.shape, A.shape, B.shape, g.shape, kh.shape, c.shape)
    x, A, B, g, kh, c = (np.broadcast_to(a, shape).ravel() for a in (x, A, B, g, kh, c))
    size = x.size

    def fval(z, i):
        return _q(z, A[i], B[i], g[i], kh[i], c[i], gh) - x[i]

    everything = np.arange(size)
    lo = np.full(size, -Z_START)
    hi = np.full(size, Z_START)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        f_lo = fval(lo, everything)
        f_hi = fval(hi, everything)
        while True:
            grow_lo = np.flatnonzero((f_lo > 0) & (lo > -Z_CAP))
            grow_hi = np.flatnonzero((f_hi < 0) & (hi < Z_CAP))
            if grow_lo.size == 0 and grow_hi.size == 0:
                break
            if grow_lo.size:
                lo[grow_lo] = np.maximum(2.0 * lo[grow_lo], -Z_CAP)
                f_lo[grow_lo] = fval(lo[grow_lo], grow_lo)
            if grow_hi.size:
                hi[grow_hi] = np.minimum(2.0 * hi[grow_hi], Z_CAP)
                f_hi[grow_hi] = fval(hi[grow_hi], grow_hi)

        if np.isnan(f_lo).any() or np.isnan(f_hi).any():
            raise NumericFailure("quantile transform is undefined at the bracket ends")

        saturated = np.zeros(size, dtype=np.int8)
        saturated[f_lo > 0] = -1
        saturated[f_hi < 0] = 1

        z = np.clip((x - A) / B, lo, hi)
        z[saturated == -1] = -Z_CAP
        z[saturated == 1] = Z_CAP
        active = saturated == 0
        hit_lo = active & (f_lo == 0)
        hit_hi = active & (f_hi == 0)
        z[hit_lo] = lo[hit_lo]
        z[hit_hi] = hi[hit_hi]
        active &= ~(hit_lo | hit_hi)

        target = np.arcsinh((x - A) / B)
        step = hi - lo
        step_old = step.copy()
        for _ in range(_MAX_ITER):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            zi = z[idx]
            # Newton on asinh((Q - A) / B): same root and sign as Q - x, but
            # polynomial/exponential tails are flattened so few steps are needed
            q, d = _q_and_deriv(zi, 0.0, 1.0, g[idx], kh[idx], c[idx], gh)
            f = np.arcsinh(q) - target[idx]
            d = d / np.hypot(1.0, q)
            if np.isnan(f).any():
                raise NumericFailure("quantile transform evaluated to NaN during root search")
            below = f < 0
            lo[idx[below]] = zi[below]
            hi[idx[~below]] = zi[~below]
            lo_i, hi_i = lo[idx], hi[idx]

            newton = zi - f / d
            # a converged Newton step may sit exactly on a bracket end
            tiny = np.isfinite(newton) & (np.abs(newton - zi) <= _Z_TOL * np.maximum(1.0, np.abs(zi)))
            use_newton = tiny | (
                np.isfinite(newton)
                & np.isfinite(d)
                & (d > 0)
                & (newton > lo_i)
                & (newton < hi_i)
                & (np.abs(2.0 * f) <= np.abs(step_old[idx] * d))
            )
            z_new = np.where(use_newton, newton, 0.5 * (lo_i + hi_i))
            dz = z_new - zi
            step_old[idx] = step[idx]
            step[idx] = dz
            z[idx] = z_new

            scale = np.maximum(1.0, np.abs(z_new))
            done = (f == 0) | (np.abs(dz) <= _Z_TOL * scale) | (hi_i - lo_i <= _Z_TOL * scale)
            z[idx[f == 0]] = zi[f == 0]
            active[idx[done]] = False
        else:
            if active.any():
                raise NumericFailure("cdf root search did not converge")

    return z.reshape(shape), saturated.reshape(shape)


def _as_output(arr: np.ndarray, scalar: bool):
    return float(arr) if scalar else arr


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def _check_finite(name: str, values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise DomainError(f"{name} must be finite")


def z2q(z, p: QdParams):
    """Evaluate the quantile transform ``Q(z)`` for standard normal input ``z``."""
    arr = np.asarray(z, dtype=float)
    _check_finite("z", arr)
    with np.errstate(over="ignore", invalid="ignore"):
        out = _q(arr, *p._arrays())
    return _as_output(out, arr.ndim == 0)


def q_deriv(z, p: QdParams):
    """Derivative ``Q'(z)`` of the quantile transform."""
    arr = np.asarray(z, dtype=float)
    _check_finite("z", arr)
    with np.errstate(over="ignore", invalid="ignore"):
        _, d = _q_and_deriv(arr, *p._arrays())
    return _as_output(d, arr.ndim == 0)


def r_func(z, p: QdParams):
    """The factor ``R(z)`` of ``Q'(z)`` that carries its sign.

    ``Q'(z) = B (1 + z^2)^k R(z)`` for g-and-k and ``B exp(h z^2 / 2) R(z)``
    for g-and-h.  ``R(0) == 1`` always.
    """
    arr = np.asarray(z, dtype=float)
    _check_finite("z", arr)
    with np.errstate(over="ignore"):
        out = _r(arr, p.g, p.kh, p.c, p.is_gh)
    return _as_output(out, arr.ndim == 0)


def quantile(u, p: QdParams):
    """Quantile function. ``u`` of 0 and 1 map to ``-inf`` and ``+inf``."""
    arr = np.asarray(u, dtype=float)
    if np.any(np.isnan(arr)) or np.any((arr < 0) | (arr > 1)):
        raise DomainError("probabilities must lie in [0, 1]")
    z = ndtri(arr)
    inner = np.isfinite(z)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(inner, _q(np.where(inner, z, 0.0), *p._arrays()), z)
    return _as_output(out, arr.ndim == 0)


def sample(n: int, p: QdParams, seed: int | Generator | None = None) -> np.ndarray:
    """Draw ``n`` IID variates by transforming standard normal draws."""
    if n < 0:
        raise DomainError(f"sample size must be non-negative, got {n}")
    rng = np.random.default_rng(seed)
    with np.errstate(over="ignore", invalid="ignore"):
        return _q(rng.standard_normal(int(n)), *p._arrays())


def _root(x, p: QdParams) -> tuple[np.ndarray, np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    _check_finite("x", arr)
    z, saturated = _solve_z(arr, *p._arrays()[:5], p.is_gh)
    if saturated.any():
        warnings.warn(
            f"{int(np.count_nonzero(saturated))} value(s) lie beyond z = +/-{Z_CAP:g}; "
            "returning saturated results",
            SaturationWarning,
            stacklevel=3,
        )
    return z, saturated, arr.ndim == 0


def cdf(x, p: QdParams, return_z: bool = False):
    """Cumulative distribution function.

    Solves ``Q(z) = x`` numerically.  With ``return_z`` the root ``z`` itself
    is returned instead of ``Phi(z)``, which keeps precision far in the tails.

    Raises
    ------
    NumericFailure
        If the root search fails or lands where ``Q`` is decreasing, which
        only happens for invalid parameters.
    """
    z, saturated, scalar = _root(x, p)
    inner = saturated == 0
    if inner.any():
        with np.errstate(over="ignore"):
            r = _r(z[inner], p.g, p.kh, p.c, p.is_gh)
        if np.any(r <= 0):
            raise InvalidParameterError(
                "root found where the quantile function is not increasing; parameters are invalid"
            )
    if return_z:
        return _as_output(z, scalar)
    u = ndtr(z)
    u = np.where(saturated == -1, 0.0, np.where(saturated == 1, 1.0, u))
    return _as_output(u, scalar)


def pdf(x, p: QdParams, log_scale: bool = False):
    """Density ``phi(z) / Q'(z)`` at ``z = Q^{-1}(x)``, or its natural log.

    Points beyond the root cap get density 0 (log density ``-inf``).
    """
    z, saturated, scalar = _root(x, p)
    with np.errstate(over="ignore"):
        log_qp, r = _log_qprime(z, p.B, p.g, p.kh, p.c, p.is_gh)
    inner = saturated == 0
    if np.any(r[inner] <= 0):
        raise InvalidParameterError("Q'(z) <= 0 encountered; parameters are invalid")
    logf = -0.5 * z * z - _LOG_SQRT_2PI - log_qp
    logf = np.where(inner, logf, -np.inf)
    out = logf if log_scale else np.exp(logf)
    return _as_output(out, scalar)
