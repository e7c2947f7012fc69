"""
Simulating uniform order statistics and octile summaries.

The ``i``-th order statistic of ``n`` uniforms is ``S_i / S_{n+1}`` where
``S_j`` is the sum of the first ``j`` of ``n + 1`` IID Exp(1) spacings.
Only the partial sums at the requested indices are needed, and each block of
``m`` consecutive spacings sums to a Gamma(m) variable, so the cost depends on
the number of indices requested rather than on ``n``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.random import Generator

from gkdist.core import QdParams, quantile
from gkdist.errors import DegenerateSummaryError, DomainError

__all__ = [
    "round_half_away",
    "octile_indices",
    "uniform_orderstats",
    "simulate_octiles",
    "moment_summaries",
]


def round_half_away(x):
    """Round to the nearest integer, with halves rounded away from zero."""
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def octile_indices(n: int) -> np.ndarray:
    """One-based order-statistic indices ``r(i n / 8)`` for ``i = 1..7``."""
    if n < 1:
        raise DomainError(f"sample size must be positive, got {n}")
    return np.clip(round_half_away(np.arange(1, 8) * n / 8.0), 1, n)


def _check_indices(n: int, indices: np.ndarray) -> None:
    if n < 1:
        raise DomainError(f"sample size must be positive, got {n}")
    if indices.ndim != 1 or indices.size == 0:
        raise DomainError("indices must be a non-empty 1-d sequence")
    if indices[0] < 1 or indices[-1] > n or np.any(np.diff(indices) <= 0):
        raise DomainError("indices must be strictly increasing within [1, n]")


def uniform_orderstats(
    n: int,
    indices: Sequence[int],
    seed: int | Generator | None = None,
    size: int | None = None,
) -> np.ndarray:
    """Draw the order statistics ``U_(i)``, ``i`` in ``indices``, of ``n`` uniforms.

    With ``size`` given, returns a ``(size, len(indices))`` array of
    independent replicates.
    """
    idx = np.asarray(indices, dtype=np.int64)
    _check_indices(n, idx)
    rng = np.random.default_rng(seed)
    shapes = np.append(np.diff(idx, prepend=0), n + 1 - idx[-1]).astype(float)
    reps = 1 if size is None else int(size)
    blocks = rng.standard_gamma(shapes, size=(reps, shapes.size))
    sums = np.cumsum(blocks, axis=1)
    u = sums[:, :-1] / sums[:, -1:]
    return u[0] if size is None else u


def simulate_octiles(
    p: QdParams,
    n: int,
    seed: int | Generator | None = None,
    size: int | None = None,
) -> np.ndarray:
    """Simulate the octile order statistics of a sample of size ``n``.

    Draws the uniform order statistics at :func:`octile_indices` and maps
    them through the quantile function; no full sample is generated.
    """
    if n < 8:
        raise DomainError(f"octiles need at least 8 observations, got {n}")
    u = uniform_orderstats(n, octile_indices(n), seed, size)
    return quantile(u, p)


def moment_summaries(e) -> np.ndarray:
    """Robust moment estimates ``(S_A, S_B, S_g, S_k)`` from octiles.

    Accepts a length-7 vector or a ``(..., 7)`` array.
    """
    e = np.asarray(e, dtype=float)
    if e.shape[-1] != 7:
        raise DomainError(f"expected 7 octiles, got shape {e.shape}")
    if np.any(e[..., 5] == e[..., 1]):
        raise DegenerateSummaryError("octile spread E6 - E2 is zero")
    return _moments(e)


def _moments(e: np.ndarray) -> np.ndarray:
    # zero spreads give inf/nan here; callers decide whether that is an error
    e1, e2, e3, e4, e5, e6, e7 = np.moveaxis(e, -1, 0)
    s_b = e6 - e2
    with np.errstate(divide="ignore", invalid="ignore"):
        s_g = (e6 + e2 - 2.0 * e4) / s_b
        s_k = (e7 - e5 + e3 - e1) / s_b
    return np.stack([e4, s_b, s_g, s_k], axis=-1)
