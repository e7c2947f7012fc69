"""
Which shape parameters give a strictly increasing quantile function.

``Q'(z)`` has the sign of ``R(z)`` (see :func:`gkdist.core.r_func`), so a
parameter set is valid exactly when ``R`` stays positive.  Theory settles
most of the parameter space; the remainder is checked by minimising ``R``
numerically from several starting points, which can miss a global minimum
(false "valid") but never reports a valid set as invalid.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from gkdist.core import Z_CAP, Family, QdParams, _r
from gkdist.errors import DomainError, NumericFailure

__all__ = [
    "Theory",
    "Status",
    "ValidityVerdict",
    "theoretical_validity",
    "is_valid",
    "compute_c_star",
    "safe_k_floor",
    "validity_grid",
    "DEFAULT_INITIAL_Z",
]

DEFAULT_INITIAL_Z = (-2.0, -1.0, 0.0, 1.0, 2.0)
_SCAN = np.arange(-10.0, 10.0 + 1e-9, 0.05)
_XTOL = 1e-10


class Theory(enum.Enum):
    VALID = "valid"
    INVALID = "invalid"
    UNKNOWN = "unknown"


class Status(enum.Enum):
    VALID_THEORETICAL = "valid_theoretical"
    INVALID_THEORETICAL = "invalid_theoretical"
    VALID_NUMERICAL = "valid_numerical"
    INVALID_NUMERICAL = "invalid_numerical"


@dataclass(frozen=True)
class ValidityVerdict:
    status: Status
    min_r: float
    argmin_z: float

    @property
    def valid(self) -> bool:
        return self.status in (Status.VALID_THEORETICAL, Status.VALID_NUMERICAL)


@functools.lru_cache(maxsize=None)
def compute_c_star(u_max: float = 20.0, tol: float = 1e-10) -> float:
    """Largest asymmetry constant for which every ``k >= 0`` / ``h >= 0`` is valid.

    Minimises ``1 / (u sech(u)^2 + tanh(u))`` over ``0 < u <= u_max``.
    """
    if not u_max > 0 or not tol > 0:
        raise DomainError("u_max and tol must be positive")

    def inv(u: float) -> float:
        return 1.0 / (u / math.cosh(u) ** 2 + math.tanh(u))

    res = minimize_scalar(inv, bounds=(0.0, float(u_max)), method="bounded", options={"xatol": tol})
    return float(min(res.fun, inv(u_max)))


def safe_k_floor(g: float) -> float:
    """Smallest ``k`` the quadratic rule deems safe for skewness ``g`` (c = 0.8)."""
    return max(-0.5, -0.045 - 0.01 * g * g)


def _canonical(g: float, c: float) -> tuple[float, float]:
    # Q(z; -g, c) == Q(z; g, -c)
    return (-g, -c) if c < 0 else (g, c)


def theoretical_validity(p: QdParams) -> Theory:
    g, c = _canonical(p.g, p.c)
    if p.is_gh and p.kh < 0:
        return Theory.INVALID
    if not p.is_gh and p.kh < -0.5:
        return Theory.INVALID
    if c > 1 and g != 0:
        return Theory.INVALID
    if p.kh >= 0 and c < compute_c_star():
        return Theory.VALID
    return Theory.UNKNOWN


def _local_min(f, z0: float) -> tuple[float, float]:
    """Minimise ``f`` near ``z0`` within ``[-Z_CAP, Z_CAP]``.

    Walks downhill with doubling steps to bracket a minimum (or reach the
    cap), then refines with bounded Brent.
    """
    z0 = float(np.clip(z0, -Z_CAP, Z_CAP))
    f0 = f(z0)
    step = 0.1
    if f(min(z0 + step, Z_CAP)) > f0 and f(max(z0 - step, -Z_CAP)) > f0:
        a, b = max(z0 - step, -Z_CAP), min(z0 + step, Z_CAP)
    else:
        direction = 1.0 if f(min(z0 + step, Z_CAP)) <= f(max(z0 - step, -Z_CAP)) else -1.0
        prev, cur, fcur = z0, z0, f0
        while True:
            nxt = float(np.clip(cur + direction * step, -Z_CAP, Z_CAP))
            fnxt = f(nxt)
            if fnxt > fcur or nxt == cur:
                break
            prev, cur, fcur = cur, nxt, fnxt
            step *= 2.0
        a, b = sorted((prev, nxt))
        if a == b:
            return cur, fcur
    res = minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": _XTOL, "maxiter": 500})
    if not res.success:
        raise NumericFailure(f"minimisation of R from z0={z0:g} did not converge: {res.message}")
    # bounded Brent never evaluates the end points
    best = min((res.fun, res.x), (f(a), a), (f(b), b))
    return float(best[1]), float(best[0])


def is_valid(
    p: QdParams,
    initial_z: Sequence[float] = DEFAULT_INITIAL_Z,
    use_theory: bool = True,
) -> ValidityVerdict:
    """Decide validity, via theory when decisive and numerics otherwise.

    A coarse scan of ``R`` on ``[-10, 10]`` seeds one extra optimiser start
    alongside ``initial_z``.  Pass ``use_theory=False`` to force the numerical
    test.
    """
    starts = list(initial_z)
    if not starts:
        raise DomainError("initial_z must be non-empty")
    if use_theory:
        verdict = theoretical_validity(p)
        if verdict is Theory.VALID:
            return ValidityVerdict(Status.VALID_THEORETICAL, math.nan, math.nan)
        if verdict is Theory.INVALID:
            return ValidityVerdict(Status.INVALID_THEORETICAL, math.nan, math.nan)

    g, kh, c, gh = p.g, p.kh, p.c, p.is_gh

    def f(z: float) -> float:
        return float(_r(z, g, kh, c, gh))

    with np.errstate(over="ignore"):
        scan = _r(_SCAN, g, kh, c, gh)
    i = int(np.argmin(scan))
    best_z, best_r = float(_SCAN[i]), float(scan[i])
    with np.errstate(over="ignore"):
        for z0 in [*starts, best_z]:
            z, r = _local_min(f, z0)
            if r < best_r:
                best_z, best_r = z, r
    status = Status.VALID_NUMERICAL if best_r > 0 else Status.INVALID_NUMERICAL
    return ValidityVerdict(status, best_r, best_z)


def validity_grid(
    g_values: Sequence[float],
    kh_values: Sequence[float],
    c: float = 0.8,
    family: Family | str = Family.GK,
    initial_z: Sequence[float] = DEFAULT_INITIAL_Z,
) -> list[tuple[float, float, ValidityVerdict]]:
    """Evaluate :func:`is_valid` over the Cartesian product of ``g`` and ``kh``."""
    family = Family.parse(family)
    out = []
    for kh in kh_values:
        for g in g_values:
            p = QdParams(family, 0.0, 1.0, float(g), float(kh), c)
            out.append((float(g), float(kh), is_valid(p, initial_z)))
    return out
