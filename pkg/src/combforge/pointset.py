"""Metric analysis of finite point configurations.

Everything here is windowed: the sets of interest are infinite, so every
predicate is computed on an observation window and reported as evidence
(``windowed=True``), never as proof.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DuplicatePoint, InvalidParams, OutputCap, TooFewPoints
from .lattice import Region

_DUP_TOL = 1e-12
_DEFAULT_DIFF_CAP = 20_000_000


@dataclass(frozen=True)
class PointSet:
    """Finite point configuration plus the window it was observed in."""

    points: np.ndarray  # (N, dim)
    window: Region

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.points)


def make_pointset(points, window: Region, check_window: bool = True) -> PointSet:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.ndim != 2:
        raise InvalidParams("points must be an (N, dim) array")
    if pts.shape[1] != window.dim:
        raise InvalidParams("point dimension does not match window")
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    if len(pts) > 1:
        gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(gaps < _DUP_TOL):
            raise DuplicatePoint("coincident points within 1e-12")
    if check_window and len(pts) and not np.all(window.contains(pts, slack=1e-9)):
        raise InvalidParams("points fall outside the stated window")
    pts = pts.copy()
    pts.setflags(write=False)
    return PointSet(points=pts, window=window)


def pointset_from_csv(text: str, window: Region | None = None) -> PointSet:
    """Parse one point per row, n float columns, optional header row."""
    rows = []
    reader = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            rows.append([float(cell) for cell in row])
        except ValueError:
            if lineno == 1:
                continue  # header
            raise InvalidParams(f"CSV parse error at line {lineno}: {row!r}")
    if not rows:
        raise InvalidParams("no points in CSV")
    pts = np.array(rows, dtype=float)
    if window is None:
        lo = pts.min(axis=0) - 0.5
        hi = pts.max(axis=0) + 0.5
        window = Region.box(lo, hi)
    return make_pointset(pts, window)


def pointset_to_csv(ps: PointSet) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{i}" for i in range(ps.dim)])
    for p in ps.points:
        writer.writerow([format(v, ".17g") for v in p])
    return buf.getvalue()


def pointset_to_json(ps: PointSet) -> dict:
    return {
        "schema": "pointset-v1",
        "dim": ps.dim,
        "points": [list(p) for p in ps.points],
        "window": ps.window.to_json(),
    }


def pointset_from_json(data: dict) -> PointSet:
    return make_pointset(np.array(data["points"], dtype=float), Region.from_json(data["window"]))


@dataclass(frozen=True)
class UDReport:
    """Minimum pairwise distance and the pair realizing it."""

    min_distance: float
    is_ud: bool
    witness_pair: tuple
    threshold: float
    windowed: bool = True


def min_distance(ps: PointSet, threshold: float = 0.0) -> UDReport:
    """Exact minimum pairwise distance via spatial hashing.

    An initial estimate (minimum gap between lexicographic neighbors) sets the
    cell size; the closest pair then lies in adjacent cells, so the sweep is
    exact and matches brute force.
    """
    pts = ps.points
    n = len(pts)
    if n < 2:
        raise TooFewPoints("need at least two points")
    est = float(np.min(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
    best = est
    besti, bestj = 0, 1
    gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    k = int(np.argmin(gaps))
    besti, bestj = k, k + 1

    cell = best
    grid: dict[tuple, list] = {}
    keys = np.floor(pts / cell).astype(int)
    for idx in range(n):
        grid.setdefault(tuple(keys[idx]), []).append(idx)

    offsets = np.array(list(np.ndindex(*(3,) * ps.dim))) - 1
    for key, members in grid.items():
        neigh = []
        for off in offsets:
            bucket = grid.get(tuple(np.asarray(key) + off))
            if bucket:
                neigh.extend(bucket)
        for i in members:
            for j in neigh:
                if j <= i:
                    continue
                d = float(np.linalg.norm(pts[i] - pts[j]))
                if d < best:
                    best = d
                    besti, bestj = i, j
    return UDReport(
        min_distance=best,
        is_ud=best > threshold,
        witness_pair=(tuple(pts[besti]), tuple(pts[bestj])),
        threshold=threshold,
    )


def difference_set(
    ps: PointSet,
    max_radius: float,
    dedupe_tol: float | None = None,
    cap: int = _DEFAULT_DIFF_CAP,
) -> PointSet:
    """All pairwise differences with norm <= max_radius, deduplicated, plus 0."""
    if max_radius <= 0:
        raise InvalidParams("max_radius must be positive")
    if dedupe_tol is None:
        dedupe_tol = 1e-9 * max_radius
    pts = ps.points
    n = len(pts)
    if n * n > cap:
        raise OutputCap(f"{n * n} raw differences exceed cap {cap}")
    out: list[np.ndarray] = []
    block = max(1, int(2_000_000 // max(n, 1)))
    for start in range(0, n, block):
        diffs = pts[start:start + block, None, :] - pts[None, :, :]
        diffs = diffs.reshape(-1, ps.dim)
        keep = np.linalg.norm(diffs, axis=1) <= max_radius
        out.append(diffs[keep])
    diffs = np.vstack(out) if out else np.zeros((0, ps.dim))
    diffs = np.vstack([np.zeros((1, ps.dim)), diffs])

    order = np.lexsort(diffs.T[::-1])
    diffs = diffs[order]
    reps = _dedupe_sorted(diffs, dedupe_tol)
    if len(reps) > cap:
        raise OutputCap(f"{len(reps)} deduplicated differences exceed cap {cap}")
    window = Region.ball(np.zeros(ps.dim), max_radius)
    return make_pointset(reps, window, check_window=False)


def _dedupe_sorted(pts: np.ndarray, tol: float) -> np.ndarray:
    """Collapse points within tol of an already-kept representative.

    Points arrive lexicographically sorted; a hash grid of cell size tol
    keeps the first representative of each cluster.
    """
    if len(pts) == 0:
        return pts
    dim = pts.shape[1]
    grid: dict[tuple, list] = {}
    kept: list[np.ndarray] = []
    offsets = np.array(list(np.ndindex(*(3,) * dim))) - 1
    inv = 1.0 / tol
    for p in pts:
        key = tuple(np.floor(p * inv).astype(int))
        dup = False
        for off in offsets:
            for idx in grid.get(tuple(np.asarray(key) + off), ()):
                if np.linalg.norm(p - kept[idx]) <= tol:
                    dup = True
                    break
            if dup:
                break
        if not dup:
            grid.setdefault(key, []).append(len(kept))
            kept.append(p)
    return np.array(kept)


@dataclass(frozen=True)
class HypothesisReport:
    """Windowed uniform-discreteness evidence for a set and its difference set."""

    lambda_ud: bool
    diff_ud: bool
    d_lambda: float
    d_diff: float
    ud_threshold: float
    diff_radius: float
    windowed: bool = True


def hypothesis_check(
    ps: PointSet,
    ud_threshold: float,
    diff_radius: float,
    dedupe_tol: float | None = None,
    diff_cap: int = _DEFAULT_DIFF_CAP,
) -> HypothesisReport:
    """Check uniform discreteness of the set and of its windowed difference set."""
    if len(ps) < 2:
        d_lambda = float("inf")
    else:
        d_lambda = min_distance(ps).min_distance
    diffs = difference_set(ps, diff_radius, dedupe_tol=dedupe_tol, cap=diff_cap)
    if len(diffs) < 2:
        d_diff = float("inf")
    else:
        d_diff = min_distance(diffs).min_distance
    return HypothesisReport(
        lambda_ud=d_lambda > ud_threshold,
        diff_ud=d_diff > ud_threshold,
        d_lambda=d_lambda,
        d_diff=d_diff,
        ud_threshold=ud_threshold,
        diff_radius=diff_radius,
    )
