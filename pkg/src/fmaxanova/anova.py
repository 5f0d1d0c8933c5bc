"""Pointwise F statistics and their globalizations (GPF integral, F_max).

All statistics are computed on the discretized sample, i.e. ``F_max`` is the
maximum over the stored grid points.  The batched kernel
:func:`pointwise_arrays` is shared by the observed statistic and by every
bootstrap replicate so that degeneracy handling is identical on both paths.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .funcdata import FunctionalSample, Grid

__all__ = [
    "DegenerateStatisticError",
    "PointwiseStats",
    "CovarianceEstimate",
    "pointwise_arrays",
    "pointwise_stats",
    "gpf_statistic",
    "fmax_statistic",
    "trapezoid",
    "pooled_covariance",
    "residual_curves",
]


class DegenerateStatisticError(ValueError):
    """The statistic is undefined for this sample (zero within-group variation)."""


@dataclass(frozen=True)
class PointwiseStats:
    ssr: np.ndarray
    sse: np.ndarray
    f: np.ndarray
    df1: int
    df2: int

    @property
    def degenerate(self) -> bool:
        """True if some grid point has SSE = 0 and SSR > 0."""
        return bool(np.isinf(self.f).any())


@dataclass(frozen=True)
class CovarianceEstimate:
    gamma_hat: np.ndarray
    gamma_w_hat: np.ndarray


def pointwise_arrays(y: np.ndarray, sizes) -> tuple:
    """Pointwise SSR, SSE and F for curves stacked along axis ``-2``.

    Parameters
    ----------
    y : ndarray, shape (..., n, M)
        Curves in group order; leading axes are treated as a batch.
    sizes : sequence of int
        Group sizes ``n_1, ..., n_k`` (consecutive blocks along axis ``-2``).

    Returns
    -------
    ssr, sse, f : ndarray, shape (..., M)
        ``f`` is ``+inf`` where SSE = 0 < SSR and ``0`` where SSE = SSR = 0.
    """
    sizes = [int(s) for s in sizes]
    k = len(sizes)
    n = sum(sizes)
    bounds = np.cumsum([0, *sizes])
    means = []
    sse = None
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        block = y[..., lo:hi, :]
        m = block.mean(axis=-2)
        resid = block - m[..., None, :]
        part = np.einsum("...jm,...jm->...m", resid, resid)
        sse = part if sse is None else sse + part
        means.append(m)
    grand = sum(ni * m for ni, m in zip(sizes, means)) / n
    ssr = sum(ni * (m - grand) ** 2 for ni, m in zip(sizes, means))
    df1, df2 = k - 1, n - k
    # sums of squares below the rounding floor of the group means count as zero
    floor = n * (16 * np.finfo(float).eps * np.max(np.abs(y), axis=-2)) ** 2
    zero_sse = sse <= floor
    zero_ssr = ssr <= floor
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (ssr / df1) / (sse / df2)
    f = np.where(zero_sse, np.where(zero_ssr, 0.0, np.inf), f)
    return ssr, sse, f


def pointwise_stats(s: FunctionalSample) -> PointwiseStats:
    """Pointwise between/within sums of squares and the F statistic at every grid point."""
    if s.n <= s.k:
        raise ValueError("pointwise F needs n > k")
    ssr, sse, f = pointwise_arrays(s.stacked(), s.sizes)
    return PointwiseStats(ssr=ssr, sse=sse, f=f, df1=s.k - 1, df2=s.n - s.k)


def trapezoid(f: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Trapezoidal integral of ``f`` over the last axis sampled at ``t``."""
    dt = np.diff(t)
    return np.sum(0.5 * (f[..., 1:] + f[..., :-1]) * dt, axis=-1)


def gpf_statistic(ps: PointwiseStats, grid: Grid) -> float:
    """Integral of the pointwise F over the grid interval (trapezoid rule).

    Raises
    ------
    DegenerateStatisticError
        If F is infinite anywhere (SSE = 0 with SSR > 0).
    """
    if ps.degenerate:
        raise DegenerateStatisticError("degenerate SSE: GPF integral is undefined")
    return float(trapezoid(ps.f, grid.points))


def fmax_statistic(ps: PointwiseStats) -> float:
    return float(np.max(ps.f))


def residual_curves(s: FunctionalSample) -> np.ndarray:
    """Curves minus their group mean, stacked in group order as ``(n, M)``."""
    return np.concatenate([c - c.mean(axis=0) for c in s.curves], axis=0)


def correlation_from_covariance(gamma: np.ndarray) -> np.ndarray:
    d = np.diag(gamma).copy()
    pos = d > 0
    scale = np.where(pos, 1.0 / np.sqrt(np.where(pos, d, 1.0)), 0.0)
    gw = gamma * scale[:, None] * scale[None, :]
    gw = np.clip(0.5 * (gw + gw.T), -1.0, 1.0)
    idx = np.flatnonzero(pos)
    gw[idx, idx] = 1.0
    return gw


def pooled_covariance(s: FunctionalSample) -> CovarianceEstimate:
    """Pooled within-group covariance matrix and its correlation version.

    Entries of the correlation matrix that involve a zero-variance grid point
    are set to 0.
    """
    if s.n <= s.k:
        raise ValueError("pooled covariance needs n > k")
    v = residual_curves(s)
    gamma = v.T @ v / (s.n - s.k)
    gamma = 0.5 * (gamma + gamma.T)
    return CovarianceEstimate(gamma_hat=gamma, gamma_w_hat=correlation_from_covariance(gamma))
