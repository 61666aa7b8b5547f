"""Full-rank lattices, crystals (finite unions of lattice cosets), and regions.

All types are immutable after construction; every operation is a pure
function. Arithmetic is floating point with one membership tolerance
(default ``1e-9 *`` a covering-radius bound) governing all containment
tests. The fundamental domain is the half-open cell G.[0,1)^n with boundary
clamping at 1e-15, so reduction is deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyShifts,
    InvalidParams,
    RegionTooLarge,
    SingularMatrix,
)

_CLAMP = 1e-15
_DEFAULT_POINT_CAP = 10_000_000


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    """Bounded region of R^n: a ball, an axis box, or a dual cube.

    The dual-cube kind is the set {x : |<g_i, x>| <= scale for all i} built
    from the rows g_i of ``gens``, optionally inflated by a Euclidean pad
    (applied per slab as pad*|g_i|, a superset of the true Minkowski sum).
    """

    kind: str
    center: np.ndarray | None = None
    radius: float | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    gens: np.ndarray | None = None
    scale: float | None = None
    pad: float = 0.0

    @classmethod
    def ball(cls, center, radius: float) -> "Region":
        if radius <= 0:
            raise InvalidParams("ball radius must be positive")
        return cls(kind="ball", center=_freeze(np.atleast_1d(center)), radius=float(radius))

    @classmethod
    def box(cls, lo, hi) -> "Region":
        lo = _freeze(np.atleast_1d(lo))
        hi = _freeze(np.atleast_1d(hi))
        if lo.shape != hi.shape or not np.all(lo < hi):
            raise InvalidParams("box needs lo < hi componentwise")
        return cls(kind="box", lo=lo, hi=hi)

    @classmethod
    def dual_cube(cls, gens, scale: float, pad: float = 0.0) -> "Region":
        gens = _freeze(np.atleast_2d(gens))
        if scale <= 0:
            raise InvalidParams("dual cube scale must be positive")
        return cls(kind="dual_cube", gens=gens, scale=float(scale), pad=float(pad))

    @property
    def dim(self) -> int:
        if self.kind == "ball":
            return len(self.center)
        if self.kind == "box":
            return len(self.lo)
        return self.gens.shape[1]

    def contains(self, pts: np.ndarray, slack: float = 0.0) -> np.ndarray:
        """Vectorized membership for an (N, n) array of points."""
        pts = np.atleast_2d(pts)
        if self.kind == "ball":
            d = np.linalg.norm(pts - self.center, axis=1)
            return d <= self.radius + slack
        if self.kind == "box":
            return np.all((pts >= self.lo - slack) & (pts <= self.hi + slack), axis=1)
        proj = np.abs(pts @ self.gens.T)
        lim = self.scale + self.pad * np.linalg.norm(self.gens, axis=1) + slack
        return np.all(proj <= lim, axis=1)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "ball":
            return self.center - self.radius, self.center + self.radius
        if self.kind == "box":
            return np.array(self.lo), np.array(self.hi)
        # |<g_i, x>| <= lim_i  =>  x = inv(gens) @ y over the cube |y_i| <= lim_i
        inv = np.linalg.inv(self.gens)
        lim = self.scale + self.pad * np.linalg.norm(self.gens, axis=1)
        extent = np.abs(inv) @ lim
        return -extent, extent

    def volume(self) -> float:
        if self.kind == "box":
            return float(np.prod(self.hi - self.lo))
        if self.kind == "ball":
            n = self.dim
            from math import gamma, pi
            return float(pi ** (n / 2) / gamma(n / 2 + 1) * self.radius ** n)
        lim = self.scale + self.pad * np.linalg.norm(self.gens, axis=1)
        return float(np.prod(2.0 * lim) / abs(np.linalg.det(self.gens)))

    def scaled(self, factor: float) -> "Region":
        if self.kind == "ball":
            return Region.ball(self.center, self.radius * factor)
        if self.kind == "box":
            mid = (self.lo + self.hi) / 2
            half = (self.hi - self.lo) / 2 * factor
            return Region.box(mid - half, mid + half)
        return Region.dual_cube(self.gens, self.scale * factor, self.pad * factor)

    def to_json(self) -> dict:
        if self.kind == "ball":
            return {"kind": "ball", "center": list(self.center), "radius": self.radius}
        if self.kind == "box":
            return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi)}
        return {
            "kind": "dual_cube",
            "gens": [list(row) for row in self.gens],
            "scale": self.scale,
            "pad": self.pad,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Region":
        kind = data["kind"]
        if kind == "ball":
            return cls.ball(np.array(data["center"]), data["radius"])
        if kind == "box":
            return cls.box(np.array(data["lo"]), np.array(data["hi"]))
        if kind == "dual_cube":
            return cls.dual_cube(np.array(data["gens"]), data["scale"], data.get("pad", 0.0))
        raise InvalidParams(f"unknown region kind {kind!r}")


# ---------------------------------------------------------------------------
# lattice bases
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatticeBasis:
    """Full-rank lattice G.Z^n with cached inverse and |det|."""

    generators: np.ndarray
    inverse: np.ndarray = field(repr=False)
    det_abs: float
    dim: int

    def contains(self, x, tol: float | None = None) -> bool:
        """Membership via nearest-point rounding of G^-1 x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        c = self.inverse @ x
        r = x - self.generators @ np.round(c)
        return float(np.linalg.norm(r)) <= (tol if tol is not None else self.membership_tol())

    def covering_radius_bound(self) -> float:
        """Upper bound: half the fundamental-cell diagonal."""
        return 0.5 * float(np.sum(np.linalg.norm(self.generators, axis=0)))

    def membership_tol(self) -> float:
        return 1e-9 * self.covering_radius_bound()

    def dual(self) -> "LatticeBasis":
        return make_lattice(np.linalg.inv(self.generators.T))

    def to_json(self) -> dict:
        return {
            "schema": "v1",
            "dim": self.dim,
            "generators": [list(row) for row in self.generators],
        }

    @classmethod
    def from_json(cls, data: dict) -> "LatticeBasis":
        return make_lattice(np.array(data["generators"], dtype=float))


def make_lattice(gens) -> LatticeBasis:
    """Build a lattice basis from an n x n generator matrix (columns generate)."""
    g = np.array(gens, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise InvalidParams("generator matrix must be square")
    if not np.all(np.isfinite(g)):
        raise InvalidParams("generator matrix must be finite")
    n = g.shape[0]
    det = abs(float(np.linalg.det(g)))
    norm = float(np.linalg.norm(g, 2))
    if det <= 1e-12 * max(norm, 1e-300) ** n:
        raise SingularMatrix(f"|det| = {det:.3e} below singularity tolerance")
    inv = np.linalg.inv(g)
    return LatticeBasis(generators=_freeze(g), inverse=_freeze(inv), det_abs=det, dim=n)


def dual(lat: LatticeBasis) -> LatticeBasis:
    """Dual lattice, generators (G^T)^-1."""
    return lat.dual()


def reduce_mod(lat: LatticeBasis, x) -> tuple[np.ndarray, np.ndarray]:
    """Split x = G k + r with G^-1 r in [0,1)^n (half-open cell, clamped)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    c = lat.inverse @ x
    k = np.floor(c)
    f = c - k
    snap = f >= 1.0 - _CLAMP
    f = np.where(snap, 0.0, f)
    k = np.where(snap, k + 1, k)
    near_zero = np.abs(f) < _CLAMP
    f = np.where(near_zero, 0.0, f)
    return k.astype(int), lat.generators @ f


def lattice_distance(lat: LatticeBasis, v) -> float:
    """Distance from v to the nearest lattice point."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    c = lat.inverse @ v
    return float(np.linalg.norm(v - lat.generators @ np.round(c)))


@dataclass(frozen=True)
class Crystal:
    """A lattice together with coset shifts reduced to the fundamental cell."""

    lattice: LatticeBasis
    shifts: tuple

    @property
    def dim(self) -> int:
        return self.lattice.dim

    @property
    def n_cosets(self) -> int:
        return len(self.shifts)

    def to_json(self) -> dict:
        return {
            "schema": "v1",
            "lattice": self.lattice.to_json(),
            "shifts": [list(s) for s in self.shifts],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Crystal":
        lat = LatticeBasis.from_json(data["lattice"])
        return make_crystal(lat, [np.array(s, dtype=float) for s in data["shifts"]])


def make_crystal(lat: LatticeBasis, shifts: Sequence, tol: float | None = None) -> Crystal:
    """Reduce, deduplicate (mod lattice) and sort coset shifts."""
    if len(shifts) == 0:
        raise EmptyShifts("a crystal needs at least one shift")
    if tol is None:
        tol = lat.membership_tol()
    reduced = []
    for s in shifts:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if s.shape != (lat.dim,):
            raise DimensionMismatch("shift dimension does not match lattice")
        _, r = reduce_mod(lat, s)
        if all(lattice_distance(lat, r - prev) > tol for prev in reduced):
            reduced.append(r)
    reduced.sort(key=tuple)
    return Crystal(lattice=lat, shifts=tuple(_freeze(r) for r in reduced))


def crystal_points(crys: Crystal, region: Region, cap: int = _DEFAULT_POINT_CAP) -> np.ndarray:
    """All crystal points inside the region, each once, lexicographically sorted.

    The enumeration box comes from mapping the region's bounding box through
    G^-1 per coset; candidates are then filtered by exact region membership.
    """
    lat = crys.lattice
    lo, hi = region.bounding_box()
    if region.dim != lat.dim:
        raise DimensionMismatch("region dimension does not match crystal")
    corners = np.array(list(np.ndindex(*(2,) * lat.dim)))
    box_pts = np.where(corners == 0, lo, hi)

    total_estimate = 0
    ranges = []
    for q in crys.shifts:
        c = (lat.inverse @ (box_pts - q).T).T
        kmin = np.ceil(c.min(axis=0) - 1e-9).astype(int)
        kmax = np.floor(c.max(axis=0) + 1e-9).astype(int)
        count = np.prod(np.maximum(kmax - kmin + 1, 0))
        total_estimate += int(count)
        ranges.append((kmin, kmax))
    if total_estimate > cap:
        raise RegionTooLarge(f"would enumerate ~{total_estimate} points (cap {cap})")

    chunks = []
    for q, (kmin, kmax) in zip(crys.shifts, ranges):
        if np.any(kmax < kmin):
            continue
        grids = np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(kmin, kmax)], indexing="ij")
        ks = np.stack([g.ravel() for g in grids], axis=1)
        pts = ks @ lat.generators.T + q
        keep = region.contains(pts)
        if np.any(keep):
            chunks.append(pts[keep])
    if not chunks:
        return np.zeros((0, lat.dim))
    pts = np.vstack(chunks)
    order = np.lexsort(pts.T[::-1])
    return pts[order]


def equivalent(l1: LatticeBasis, l2: LatticeBasis, tol: float = 1e-9) -> bool:
    """True iff both bases generate the same lattice (unimodular change)."""
    if l1.dim != l2.dim:
        raise DimensionMismatch("lattices live in different dimensions")
    m = l2.inverse @ l1.generators
    if not np.allclose(m, np.round(m), atol=tol):
        return False
    return abs(abs(np.linalg.det(np.round(m))) - 1.0) <= tol
