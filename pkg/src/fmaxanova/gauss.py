"""Seeded random streams and Gaussian sampling primitives.

Every unit of parallel work owns an :class:`RngStream` addressed by
``(seed, path)``; the generator is a Philox counter-based bit generator keyed
from a :class:`numpy.random.SeedSequence` with ``spawn_key=path``.  Output
therefore depends only on the address, never on scheduling.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RngStream",
    "MvnSampler",
    "mvn_factorize",
    "mvn_sample",
    "draw_innovation",
    "DEFAULT_SEED",
    "DroppedMassWarning",
]

DEFAULT_SEED = 0
_U64 = (1 << 64) - 1


class DroppedMassWarning(UserWarning):
    """A covariance needed substantial PSD repair."""


@dataclass(frozen=True)
class RngStream:
    """Address of an independent random stream.

    ``seed`` selects the experiment, ``stream_id`` the replicate; nested
    streams (e.g. bootstrap replicate ``b`` inside outer replication ``r``)
    are obtained with :meth:`substream`.
    """

    seed: int = DEFAULT_SEED
    stream_id: int = 0
    parent: tuple = ()

    def __post_init__(self):
        for v in (self.seed, self.stream_id, *self.parent):
            if not 0 <= int(v) <= _U64:
                raise ValueError("seed and stream ids must be 64-bit unsigned integers")

    @property
    def path(self) -> tuple:
        return (*self.parent, int(self.stream_id))

    def substream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id, self.path)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("expected an RngStream or numpy Generator")


@dataclass(frozen=True)
class MvnSampler:
    factor: np.ndarray  # (M, M), factor @ factor.T == repaired covariance
    dropped_mass: float

    @property
    def dim(self) -> int:
        return self.factor.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return self.factor @ self.factor.T


def mvn_factorize(cov, rel_tol: float = 1e-12) -> MvnSampler:
    """Factor a (possibly rank-deficient) covariance matrix.

    The matrix is symmetrized, eigen-decomposed, and eigenvalues below
    ``rel_tol * max eigenvalue`` are clamped to zero.  ``dropped_mass`` is
    the clamped negative mass relative to the total absolute spectrum.
    """
    a = np.array(cov, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("covariance must be a square matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("covariance has non-finite entries")
    a = 0.5 * (a + a.T)
    lam, vec = np.linalg.eigh(a)
    total = float(np.sum(np.abs(lam)))
    dropped = float(-np.sum(lam[lam < 0]) / total) if total > 0 else 0.0
    lam_max = float(lam.max(initial=0.0))
    keep = lam > rel_tol * lam_max
    root = np.where(keep, np.sqrt(np.where(keep, lam, 0.0)), 0.0)
    return MvnSampler(factor=vec * root[None, :], dropped_mass=dropped)


def mvn_sample(sampler: MvnSampler, rng, size: int | None = None) -> np.ndarray:
    """Draw ``L @ z`` with ``z`` standard normal; shape ``(M,)`` or ``(size, M)``."""
    gen = _as_generator(rng)
    if size is None:
        return sampler.factor @ gen.standard_normal(sampler.dim)
    z = gen.standard_normal((size, sampler.dim))
    return z @ sampler.factor.T


def draw_innovation(dist: str, rng, size=None):
    """Unit-variance innovations: ``"gauss"`` (N(0,1)) or ``"t4_scaled"`` (t_4 / sqrt 2).

    The t draw is exact: a normal divided by ``sqrt(chi2_4 / 4)``.
    """
    gen = _as_generator(rng)
    if dist == "gauss":
        return gen.standard_normal(size)
    if dist == "t4_scaled":
        z = gen.standard_normal(size)
        chi2 = gen.chisquare(4, size)
        return z / np.sqrt(chi2 / 4.0) / np.sqrt(2.0)
    raise ValueError(f"unknown innovation law {dist!r}")


def warn_if_dropped(sampler: MvnSampler, limit: float = 0.05) -> None:
    if sampler.dropped_mass >= limit:
        warnings.warn(
            f"covariance PSD repair dropped {sampler.dropped_mass:.3f} of the spectrum",
            DroppedMassWarning,
            stacklevel=3,
        )
