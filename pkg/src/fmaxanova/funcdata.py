"""Discretized functional samples: data model, validation and file I/O.

A :class:`FunctionalSample` holds ``k`` labeled groups of curves observed on
one shared :class:`Grid`. It is the input of every test in the package.

Two on-disk formats are supported:

* CSV -- first column ``group``, remaining headers are the grid times, one row
  per curve.
* JSON -- ``{"grid": [...], "groups": [{"label": ..., "curves": [[...], ...]}]}``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "FunctionalDataError",
    "Grid",
    "FunctionalSample",
    "SampleStats",
    "load_sample",
    "save_sample",
    "sample_stats",
]


class FunctionalDataError(ValueError):
    """Raised when a functional sample is malformed."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid:
    """Strictly increasing observation times ``t_1 < ... < t_M``."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).ravel()
        if pts.size < 2:
            raise FunctionalDataError("grid needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise FunctionalDataError("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise FunctionalDataError("grid times must be strictly increasing")
        object.__setattr__(self, "points", _frozen(pts))

    @property
    def M(self) -> int:
        return self.points.size

    @property
    def a(self) -> float:
        return float(self.points[0])

    @property
    def b(self) -> float:
        return float(self.points[-1])

    @property
    def mesh(self) -> float:
        """Largest spacing between consecutive grid points."""
        return float(np.max(np.diff(self.points)))

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())


@dataclass(frozen=True)
class FunctionalSample:
    """``k`` groups of curves on a common grid.

    Parameters
    ----------
    grid : Grid
        Shared observation grid of length ``M``.
    labels : sequence of str
        Group labels in group order.
    curves : sequence of array_like
        One ``(n_i, M)`` matrix per group.
    """

    grid: Grid
    labels: tuple
    curves: tuple = field(repr=False)

    def __post_init__(self):
        grid = self.grid if isinstance(self.grid, Grid) else Grid(self.grid)
        object.__setattr__(self, "grid", grid)
        labels = tuple(str(lab) for lab in self.labels)
        if len(labels) != len(self.curves):
            raise FunctionalDataError("one label is needed per group")
        if len(labels) < 2:
            raise FunctionalDataError("need at least 2 groups")
        if len(set(labels)) != len(labels):
            raise FunctionalDataError("group labels must be unique")
        mats = []
        for lab, c in zip(labels, self.curves):
            m = np.array(c, dtype=float)
            if m.ndim != 2 or m.shape[1] != grid.M:
                raise FunctionalDataError(
                    f"group {lab!r}: curves must have exactly {grid.M} values each"
                )
            if m.shape[0] < 2:
                raise FunctionalDataError(f"group {lab!r} needs at least 2 curves")
            if not np.all(np.isfinite(m)):
                raise FunctionalDataError(f"group {lab!r} contains non-finite values")
            mats.append(_frozen(m))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "curves", tuple(mats))

    @property
    def k(self) -> int:
        return len(self.curves)

    @property
    def sizes(self) -> tuple:
        return tuple(c.shape[0] for c in self.curves)

    @property
    def n(self) -> int:
        return sum(self.sizes)

    @property
    def M(self) -> int:
        return self.grid.M

    def stacked(self) -> np.ndarray:
        """All curves as one ``(n, M)`` matrix in group order."""
        return np.concatenate(self.curves, axis=0)

    def map_curves(self, fn) -> "FunctionalSample":
        """Return a sample with ``fn`` applied to each group's curve matrix."""
        return FunctionalSample(self.grid, self.labels, tuple(fn(c) for c in self.curves))

    @classmethod
    def from_stacked(cls, grid, labels: Sequence[str], sizes: Sequence[int], y) -> "FunctionalSample":
        """Split an ``(n, M)`` matrix into consecutive groups of the given sizes."""
        y = np.asarray(y, dtype=float)
        bounds = np.cumsum([0, *sizes])
        if bounds[-1] != y.shape[0]:
            raise FunctionalDataError("group sizes do not add up to the number of curves")
        return cls(grid, tuple(labels), tuple(y[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])))


@dataclass(frozen=True)
class SampleStats:
    group_means: np.ndarray  # (k, M)
    grand_mean: np.ndarray  # (M,)


def sample_stats(s: FunctionalSample) -> SampleStats:
    """Group mean curves and the grand mean curve."""
    group_means = np.stack([c.mean(axis=0) for c in s.curves])
    grand_mean = s.stacked().mean(axis=0)
    return SampleStats(_frozen(group_means), _frozen(grand_mean))


# ---------------------------------------------------------------------------
# file I/O


def _parse_float(tok: str, where: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise FunctionalDataError(f"non-numeric cell {tok!r} at {where}") from None


def _from_rows(header: list, rows: Iterable[list]) -> FunctionalSample:
    if not header or header[0].strip().lower() != "group":
        raise FunctionalDataError("first CSV column must be 'group'")
    times = [_parse_float(h, f"header column {j + 2}") for j, h in enumerate(header[1:])]
    M = len(times)
    order: list = []
    buckets: dict = {}
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != M + 1:
            raise FunctionalDataError(
                f"ragged row at line {lineno}: expected {M + 1} cells, got {len(row)}"
            )
        label = row[0].strip()
        vals = [_parse_float(c, f"line {lineno}") for c in row[1:]]
        if label not in buckets:
            order.append(label)
            buckets[label] = []
        buckets[label].append(vals)
    try:
        grid = Grid(times)
    except FunctionalDataError as exc:
        raise FunctionalDataError(f"header times: {exc}") from None
    return FunctionalSample(grid, tuple(order), tuple(np.array(buckets[g]) for g in order))


def _from_json(doc: dict) -> FunctionalSample:
    try:
        grid = doc["grid"]
        groups = doc["groups"]
        labels = [g["label"] for g in groups]
        curves = [np.array(g["curves"], dtype=float) for g in groups]
    except (KeyError, TypeError, ValueError) as exc:
        raise FunctionalDataError(f"malformed sample JSON: {exc}") from None
    return FunctionalSample(Grid(grid), tuple(labels), tuple(curves))


def read_sample_text(text: str, format: str = "csv") -> FunctionalSample:
    if format == "csv":
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise FunctionalDataError("empty CSV file") from None
        return _from_rows(header, reader)
    if format == "json":
        return _from_json(json.loads(text))
    raise ValueError(f"unknown sample format {format!r}")


def _infer_format(path: Path, format: str | None) -> str:
    if format:
        return format
    return "json" if path.suffix.lower() == ".json" else "csv"


def load_sample(path, format: str | None = None) -> FunctionalSample:
    """Read and validate a sample file.

    ``format`` is ``"csv"`` or ``"json"``; inferred from the extension when
    omitted. Group order follows first appearance in the file.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return read_sample_text(text, _infer_format(path, format))


def _fmt(x: float) -> str:
    return repr(float(x))


def sample_to_text(s: FunctionalSample, format: str = "csv") -> str:
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", *(_fmt(t) for t in s.grid.points)])
        for lab, c in zip(s.labels, s.curves):
            for row in c:
                w.writerow([lab, *(_fmt(v) for v in row)])
        return buf.getvalue()
    if format == "json":
        doc = {
            "grid": s.grid.points.tolist(),
            "groups": [{"label": lab, "curves": c.tolist()} for lab, c in zip(s.labels, s.curves)],
        }
        return json.dumps(doc)
    raise ValueError(f"unknown sample format {format!r}")


def save_sample(s: FunctionalSample, path, format: str | None = None) -> None:
    """Write ``s`` to ``path``; values are written with round-trip precision."""
    path = Path(path)
    path.write_text(sample_to_text(s, _infer_format(path, format)), encoding="utf-8")
