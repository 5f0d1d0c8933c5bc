"""Bootstrap calibration of the global tests.

Two calibrations are provided:

``npb``
    Nonparametric bootstrap.  Residual curves (curve minus its group mean)
    are resampled with replacement, the groups are refilled with the original
    sizes and the statistic is recomputed.  The bootstrap world satisfies the
    null hypothesis by construction.
``pb``
    Parametric bootstrap of the ``F_max`` limit: ``k - 1`` Gaussian vectors
    are drawn from the estimated correlation matrix and the replicate is the
    grid maximum of their mean square.

Replicate ``b`` always draws from its own stream, and replicates are processed
in fixed-size chunks, so results do not depend on the number of worker threads.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import anova
from .funcdata import FunctionalSample
from .gauss import DEFAULT_SEED, RngStream, mvn_factorize, mvn_sample, warn_if_dropped

__all__ = [
    "BootstrapConfig",
    "TestReport",
    "p_value",
    "critical_value",
    "npb_resample",
    "npb_replicates",
    "npb_calibrate",
    "pb_replicates",
    "pb_calibrate",
    "calibrate",
    "observed_statistic",
]

STATISTICS = ("fmax", "gpf")
METHODS = ("npb", "pb")
CHUNK = 32


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 10000
    method: str = "npb"
    seed: int = DEFAULT_SEED
    alpha: float = 0.05
    resample_within_group: bool = False
    threads: int = 1

    def __post_init__(self):
        if int(self.B) < 1:
            raise ValueError("B must be at least 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if int(self.threads) < 1:
            raise ValueError("threads must be at least 1")


@dataclass
class TestReport:
    statistic: str
    observed: float
    p_value: float
    critical_value: float
    alpha: float
    B: int
    method: str
    seed: int
    degenerate: bool = False
    resample_within_group: bool = False
    replicates: np.ndarray = field(default=None, repr=False)

    __test__ = False  # not a pytest class

    def reject(self) -> bool:
        return self.p_value <= self.alpha

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("replicates")
        for key in ("observed", "critical_value"):
            if not math.isfinite(d[key]):
                d[key] = None
        return d

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def replicates_csv(self) -> str:
        return "".join(f"{float(v)!r}\n" for v in self.replicates)


def p_value(observed: float, replicates) -> float:
    """Add-one bootstrap p-value ``(1 + #{rep >= observed}) / (B + 1)``."""
    reps = np.asarray(replicates)
    return (1 + int(np.count_nonzero(reps >= observed))) / (reps.size + 1)


def critical_value(replicates, alpha: float) -> float:
    """The ``ceil((1 - alpha)(B + 1))``-th order statistic, clamped to ``B``."""
    reps = np.sort(np.asarray(replicates))
    B = reps.size
    # guard the ceiling against binary fractions such as 0.95 * 501
    rank = math.ceil(round((1 - alpha) * (B + 1), 9))
    rank = min(max(rank, 1), B)
    return float(reps[rank - 1])


def _run_chunks(B: int, work: Callable[[int, int], dict], threads: int) -> dict:
    starts = list(range(0, B, CHUNK))
    spans = [(lo, min(lo + CHUNK, B)) for lo in starts]
    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda sp: work(*sp), spans))
    else:
        parts = [work(*sp) for sp in spans]
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


def _stream_factory(seed: int, base: RngStream | None) -> Callable[[int], RngStream]:
    if base is None:
        return lambda b: RngStream(seed, b)
    return base.substream


def _draw_indices(gen: np.random.Generator, sizes, within_group: bool) -> np.ndarray:
    n = sum(sizes)
    if not within_group:
        return gen.integers(0, n, size=n)
    out = []
    offset = 0
    for ni in sizes:
        out.append(offset + gen.integers(0, ni, size=ni))
        offset += ni
    return np.concatenate(out)


def npb_resample(s: FunctionalSample, rng, within_group: bool = False) -> FunctionalSample:
    """One bootstrap sample built from the residual curves.

    With the default pooled scheme, ``n`` curves are drawn with replacement
    from all residuals; the first ``n_1`` fill group 1, the next ``n_2``
    group 2, and so on.  ``within_group=True`` resamples each group's
    residuals separately.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    pool = anova.residual_curves(s)
    idx = _draw_indices(gen, s.sizes, within_group)
    return FunctionalSample.from_stacked(s.grid, s.labels, s.sizes, pool[idx])


def npb_replicates(
    s: FunctionalSample,
    B: int,
    seed: int = DEFAULT_SEED,
    *,
    base: RngStream | None = None,
    within_group: bool = False,
    threads: int = 1,
) -> dict:
    """NPB replicates of both global statistics.

    Replicate ``b`` uses ``RngStream(seed, b)``, or ``base.substream(b)`` when
    ``base`` is given.  Returns ``{"fmax": (B,), "gpf": (B,)}``.
    """
    pool = anova.residual_curves(s)
    sizes = s.sizes
    t = s.grid.points
    stream = _stream_factory(seed, base)

    def work(lo: int, hi: int) -> dict:
        idx = np.stack([_draw_indices(stream(b).generator(), sizes, within_group) for b in range(lo, hi)])
        _, _, f = anova.pointwise_arrays(pool[idx], sizes)
        return {"fmax": f.max(axis=-1), "gpf": anova.trapezoid(f, t)}

    return _run_chunks(int(B), work, threads)


def observed_statistic(s: FunctionalSample, stat: str) -> tuple:
    """Return ``(value, degenerate)`` for ``stat`` in ``{"fmax", "gpf"}``."""
    ps = anova.pointwise_stats(s)
    if stat == "fmax":
        return anova.fmax_statistic(ps), ps.degenerate
    if stat == "gpf":
        return anova.gpf_statistic(ps, s.grid), False
    raise ValueError(f"unknown statistic {stat!r}")


def _report(stat, observed, degenerate, reps, cfg: BootstrapConfig, method: str) -> TestReport:
    p = 1 / (reps.size + 1) if degenerate else p_value(observed, reps)
    return TestReport(
        statistic=stat,
        observed=float(observed),
        p_value=p,
        critical_value=critical_value(reps, cfg.alpha),
        alpha=cfg.alpha,
        B=int(cfg.B),
        method=method,
        seed=int(cfg.seed),
        degenerate=bool(degenerate),
        resample_within_group=bool(cfg.resample_within_group) if method == "npb" else False,
        replicates=reps,
    )


def npb_calibrate(s: FunctionalSample, stat: str, cfg: BootstrapConfig) -> TestReport:
    """NPB test of equal group mean functions using ``stat``.

    A degenerate observed ``F_max`` (infinite pointwise F) is reported with
    ``p_value = 1 / (B + 1)`` and ``degenerate=True``; a degenerate GPF raises
    :class:`~fmaxanova.anova.DegenerateStatisticError`.
    """
    if stat not in STATISTICS:
        raise ValueError(f"unknown statistic {stat!r}")
    observed, degenerate = observed_statistic(s, stat)
    reps = npb_replicates(
        s, cfg.B, cfg.seed, within_group=cfg.resample_within_group, threads=cfg.threads
    )[stat]
    return _report(stat, observed, degenerate, reps, cfg, "npb")


def pb_replicates(
    s: FunctionalSample,
    B: int,
    seed: int = DEFAULT_SEED,
    *,
    base: RngStream | None = None,
    threads: int = 1,
) -> np.ndarray:
    """Draws of ``max_t (k-1)^{-1} sum_i w_i(t)^2`` with ``w_i ~ N(0, corr_hat)``."""
    cov = anova.pooled_covariance(s)
    sampler = mvn_factorize(cov.gamma_w_hat)
    warn_if_dropped(sampler)
    km1 = s.k - 1
    stream = _stream_factory(seed, base)

    def work(lo: int, hi: int) -> dict:
        w = np.stack([mvn_sample(sampler, stream(b), size=km1) for b in range(lo, hi)])
        return {"fmax": np.max(np.sum(w * w, axis=1) / km1, axis=-1)}

    return _run_chunks(int(B), work, threads)["fmax"]


def pb_calibrate(s: FunctionalSample, cfg: BootstrapConfig) -> TestReport:
    """Parametric-bootstrap ``F_max`` test (large-sample calibration)."""
    observed, degenerate = observed_statistic(s, "fmax")
    reps = pb_replicates(s, cfg.B, cfg.seed, threads=cfg.threads)
    return _report("fmax", observed, degenerate, reps, cfg, "pb")


def calibrate(s: FunctionalSample, stat: str, cfg: BootstrapConfig) -> TestReport:
    """Dispatch on ``cfg.method``."""
    if cfg.method == "pb":
        if stat != "fmax":
            raise ValueError("pb supports fmax only")
        return pb_calibrate(s, cfg)
    return npb_calibrate(s, stat, cfg)
