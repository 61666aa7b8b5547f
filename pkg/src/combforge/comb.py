"""Weighted Dirac combs: discrete supports carrying differential-operator weights.

A comb is a finite list of (point, operator) entries. The operator at p is a
complex polynomial in the partial derivatives, stored sparsely by multi-index.
Pairing against a test function phi uses the distributional convention

    <t, phi> = sum_p sum_i t_{p,i} (-1)^|i| (D^i phi)(p).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._mindex import mi_degree
from .errors import (
    DimensionMismatch,
    DuplicatePoint,
    EmptyOperator,
    InvalidParams,
    OrderTooLow,
)
from .lattice import Region

_DUP_TOL = 1e-12


@dataclass(frozen=True)
class DiffOperator:
    """Sparse operator sum_i c_i D^i; keys are derivative multi-indices."""

    terms: dict

    @classmethod
    def from_terms(cls, terms: dict) -> "DiffOperator":
        cleaned = {tuple(k): complex(v) for k, v in terms.items() if v != 0}
        if not cleaned:
            raise EmptyOperator("operator has no nonzero coefficients")
        return cls(terms=cleaned)

    @property
    def order(self) -> int:
        return max(mi_degree(i) for i in self.terms)

    @property
    def norm(self) -> float:
        return max(abs(c) for c in self.terms.values())

    def scaled(self, factor) -> "DiffOperator":
        return DiffOperator.from_terms({i: c * factor for i, c in self.terms.items()})

    def plus(self, other: "DiffOperator") -> dict:
        out = dict(self.terms)
        for i, c in other.terms.items():
            out[i] = out.get(i, 0j) + c
        return {i: c for i, c in out.items() if c != 0}


@dataclass(frozen=True)
class WeightedComb:
    """Finite windowed comb sum_p t_p(D) delta_p."""

    entries: tuple  # ((point ndarray, DiffOperator), ...)
    window: Region

    @property
    def dim(self) -> int:
        return self.window.dim

    @property
    def order(self) -> int:
        return max(op.order for _, op in self.entries)

    def points(self) -> np.ndarray:
        return np.array([p for p, _ in self.entries])

    def to_json(self) -> dict:
        return {
            "schema": "comb-v1",
            "dim": self.dim,
            "window": self.window.to_json(),
            "entries": [
                {
                    "point": list(p),
                    "ops": [
                        {"idx": list(i), "re": c.real, "im": c.imag}
                        for i, c in sorted(op.terms.items())
                    ],
                }
                for p, op in self.entries
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "WeightedComb":
        if data.get("schema") != "comb-v1":
            raise InvalidParams("expected schema comb-v1")
        window = Region.from_json(data["window"])
        entries = []
        for ent in data["entries"]:
            terms = {
                tuple(o["idx"]): complex(o["re"], o["im"]) for o in ent["ops"]
            }
            entries.append((np.array(ent["point"], dtype=float), terms))
        return make_comb(entries, window)


def make_comb(entries, window: Region) -> WeightedComb:
    """Normalize entries: strip zero coefficients, reject duplicates, sort."""
    if not entries:
        raise InvalidParams("comb needs at least one entry")
    normd = []
    for point, op in entries:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        if p.shape != (window.dim,):
            raise DimensionMismatch("entry point dimension does not match window")
        if not isinstance(op, DiffOperator):
            op = DiffOperator.from_terms(op)
        else:
            op = DiffOperator.from_terms(op.terms)
        p = p.copy()
        p.setflags(write=False)
        normd.append((p, op))
    normd.sort(key=lambda e: tuple(e[0]))
    for (p1, _), (p2, _) in zip(normd, normd[1:]):
        if np.linalg.norm(p1 - p2) < _DUP_TOL:
            raise DuplicatePoint(f"coincident comb points near {tuple(p1)}")
    return WeightedComb(entries=tuple(normd), window=window)


def unit_comb(points, window: Region) -> WeightedComb:
    """Order-0 comb with weight 1 at every point."""
    pts = np.atleast_2d(points)
    zero = (0,) * pts.shape[1]
    return make_comb([(p, {zero: 1.0}) for p in pts], window)


def weights_comb(points, weights, window: Region) -> WeightedComb:
    pts = np.atleast_2d(points)
    zero = (0,) * pts.shape[1]
    return make_comb(
        [(p, {zero: w}) for p, w in zip(pts, weights) if w != 0], window
    )


def evaluate(comb: WeightedComb, phi) -> complex:
    """Pair the comb against a test function (see module docstring for the sign)."""
    if phi.max_order < comb.order:
        raise OrderTooLow(
            f"test function supports order {phi.max_order}, comb has order {comb.order}"
        )
    re_parts: list[float] = []
    im_parts: list[float] = []
    for p, op in comb.entries:
        for i, c in sorted(op.terms.items()):
            val = c * (-1) ** mi_degree(i) * phi.deriv(i, p)
            re_parts.append(val.real)
            im_parts.append(val.imag)
    return complex(math.fsum(re_parts), math.fsum(im_parts))


def adjoint(comb: WeightedComb) -> WeightedComb:
    """t*(x) = conj(t)(-x): entry (p, {i: c}) -> (-p, {i: (-1)^|i| conj(c)})."""
    entries = []
    for p, op in comb.entries:
        terms = {i: (-1) ** mi_degree(i) * c.conjugate() for i, c in op.terms.items()}
        entries.append((-p, terms))
    window = _reflect_region(comb.window)
    return make_comb(entries, window)


def _reflect_region(region: Region) -> Region:
    if region.kind == "ball":
        return Region.ball(-region.center, region.radius)
    if region.kind == "box":
        return Region.box(-region.hi, -region.lo)
    return region


@dataclass(frozen=True)
class TemperednessReport:
    bounded: bool
    partial_sum: float
    exponent: float | None
    exponent_stderr: float | None
    shells_used: int
    windowed: bool = True


def temperedness_diagnostic(comb: WeightedComb, m: int, n_shells: int = 8) -> TemperednessReport:
    """Windowed evidence for sum_p (|p|+1)^-m ||t_p|| < infinity.

    Splits the window into radial shells and fits the exponent of the
    per-shell contribution against radius; decisively negative slope counts
    as bounded. Reported as evidence only.
    """
    if m < 0:
        raise InvalidParams("m must be non-negative")
    pts = comb.points()
    radii = np.linalg.norm(pts, axis=1)
    norms = np.array([op.norm for _, op in comb.entries])
    contrib = (radii + 1.0) ** (-m) * norms
    partial_sum = float(np.sum(contrib))

    rmax = float(radii.max())
    if rmax == 0 or len(pts) < 4:
        return TemperednessReport(True, partial_sum, None, None, 0)
    edges = np.linspace(0.0, rmax, n_shells + 1)
    mids, sums = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        mask = (radii > a) & (radii <= b)
        s = float(np.sum(contrib[mask]))
        if s > 0:
            mids.append((a + b) / 2)
            sums.append(s)
    if len(sums) < 3:
        return TemperednessReport(True, partial_sum, None, None, len(sums))
    x = np.log(np.array(mids))
    y = np.log(np.array(sums))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, _, _ = np.linalg.lstsq(A, y, rcond=None)
    slope = float(coef[0])
    dof = max(len(x) - 2, 1)
    resid_var = float(res[0]) / dof if len(res) else 0.0
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(resid_var / sxx) if sxx > 0 else 0.0
    bounded = slope + 2.0 * stderr < 0.0
    return TemperednessReport(bounded, partial_sum, slope, stderr, len(sums))
