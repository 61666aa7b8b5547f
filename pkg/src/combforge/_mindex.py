"""Multi-index arithmetic and a small complex multivariate polynomial.

Multi-indices are plain tuples of non-negative ints. The polynomial type is a
sparse dict {multi-index: complex}; it only needs the handful of operations
the comb machinery uses (product, derivative, affine substitution, jets).
"""
from __future__ import annotations

import math
from itertools import product as _cartesian

import numpy as np

MIndex = tuple


def mi_zero(dim: int) -> MIndex:
    return (0,) * dim


def mi_add(a: MIndex, b: MIndex) -> MIndex:
    return tuple(x + y for x, y in zip(a, b))


def mi_sub(a: MIndex, b: MIndex) -> MIndex:
    return tuple(x - y for x, y in zip(a, b))


def mi_leq(a: MIndex, b: MIndex) -> bool:
    return all(x <= y for x, y in zip(a, b))


def mi_degree(a: MIndex) -> int:
    return sum(a)


def mi_factorial(a: MIndex) -> int:
    out = 1
    for x in a:
        out *= math.factorial(x)
    return out


def mi_binom(a: MIndex, b: MIndex) -> int:
    """Componentwise product of binomial coefficients C(a_i, b_i)."""
    out = 1
    for x, y in zip(a, b):
        if y > x:
            return 0
        out *= math.comb(x, y)
    return out


def mi_falling(a: MIndex, b: MIndex) -> int:
    """Componentwise falling factorial a_i (a_i-1) ... (a_i-b_i+1)."""
    out = 1
    for x, y in zip(a, b):
        if y > x:
            return 0
        for j in range(y):
            out *= x - j
    return out


def mi_power(vec, a: MIndex) -> complex:
    out = 1.0 + 0.0j
    for v, e in zip(vec, a):
        if e:
            out *= v ** e
    return out


def iter_total(dim: int, max_total: int):
    """All multi-indices with |a| <= max_total, graded lexicographic order."""
    for total in range(max_total + 1):
        yield from _fixed_total(dim, total)


def _fixed_total(dim: int, total: int):
    if dim == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for rest in _fixed_total(dim - 1, total - head):
            yield (head,) + rest


def iter_box(caps: MIndex):
    """All multi-indices a <= caps componentwise."""
    return _cartesian(*(range(c + 1) for c in caps))


def mi_compositions(b: MIndex, parts: int):
    """All ways to write b as an ordered sum of `parts` multi-indices.

    Yields (split, multinomial) where split is a tuple of multi-indices and
    multinomial the product over axes of the multinomial coefficients.
    """
    per_axis = []
    for total in b:
        per_axis.append(list(_int_compositions(total, parts)))
    for combo in _cartesian(*per_axis):
        split = tuple(tuple(axis[p] for axis in combo) for p in range(parts))
        coeff = 1
        for total, axis in zip(b, combo):
            coeff *= _multinomial(total, axis)
        yield split, coeff


def _int_compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _int_compositions(total - head, parts - 1):
            yield (head,) + rest


def _multinomial(total: int, parts) -> int:
    out = math.factorial(total)
    for p in parts:
        out //= math.factorial(p)
    return out


class Poly:
    """Sparse complex polynomial in n variables: {multi-index: coefficient}."""

    __slots__ = ("dim", "coeffs")

    def __init__(self, dim: int, coeffs: dict | None = None):
        self.dim = dim
        self.coeffs = {}
        if coeffs:
            for a, c in coeffs.items():
                if c != 0:
                    self.coeffs[tuple(a)] = complex(c)

    @classmethod
    def constant(cls, dim: int, value) -> "Poly":
        return cls(dim, {mi_zero(dim): value})

    @classmethod
    def coordinate(cls, dim: int, axis: int) -> "Poly":
        idx = [0] * dim
        idx[axis] = 1
        return cls(dim, {tuple(idx): 1.0})

    def copy(self) -> "Poly":
        out = Poly(self.dim)
        out.coeffs = dict(self.coeffs)
        return out

    def __bool__(self) -> bool:
        return bool(self.coeffs)

    def degree(self) -> int:
        return max((mi_degree(a) for a in self.coeffs), default=0)

    def __add__(self, other: "Poly") -> "Poly":
        out = self.copy()
        for a, c in other.coeffs.items():
            v = out.coeffs.get(a, 0j) + c
            if v == 0:
                out.coeffs.pop(a, None)
            else:
                out.coeffs[a] = v
        return out

    def scale(self, factor) -> "Poly":
        if factor == 0:
            return Poly(self.dim)
        out = Poly(self.dim)
        out.coeffs = {a: c * factor for a, c in self.coeffs.items()}
        return out

    def __mul__(self, other: "Poly") -> "Poly":
        out = Poly(self.dim)
        for a, ca in self.coeffs.items():
            for b, cb in other.coeffs.items():
                key = mi_add(a, b)
                v = out.coeffs.get(key, 0j) + ca * cb
                if v == 0:
                    out.coeffs.pop(key, None)
                else:
                    out.coeffs[key] = v
        return out

    def diff(self, axis: int) -> "Poly":
        out = Poly(self.dim)
        for a, c in self.coeffs.items():
            if a[axis] == 0:
                continue
            b = list(a)
            b[axis] -= 1
            out.coeffs[tuple(b)] = c * a[axis]
        return out

    def diff_mi(self, b: MIndex) -> "Poly":
        out = self
        for axis, times in enumerate(b):
            for _ in range(times):
                out = out.diff(axis)
        return out

    def eval(self, x) -> complex:
        out = 0j
        for a, c in self.coeffs.items():
            out += c * mi_power(x, a)
        return out

    def eval_many(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate at an (N, dim) array of points."""
        out = np.zeros(len(pts), dtype=complex)
        for a, c in self.coeffs.items():
            term = np.full(len(pts), c, dtype=complex)
            for axis, e in enumerate(a):
                if e:
                    term = term * pts[:, axis] ** e
            out += term
        return out

    def shift_var(self, c) -> "Poly":
        """Return p(x + c) expanded in x."""
        out = Poly(self.dim)
        for a, coef in self.coeffs.items():
            for b in iter_box(a):
                key = tuple(b)
                rest = mi_sub(a, b)
                val = coef * mi_binom(a, b) * mi_power(c, rest)
                if val == 0:
                    continue
                v = out.coeffs.get(key, 0j) + val
                if v == 0:
                    out.coeffs.pop(key, None)
                else:
                    out.coeffs[key] = v
        return out

    def compose_affine(self, mat: np.ndarray, vec) -> "Poly":
        """Return p(mat @ y + vec) as a polynomial in y."""
        dim = self.dim
        axes = [Poly(dim, {mi_zero(dim): vec[i]}) for i in range(dim)]
        for i in range(dim):
            for jt in range(dim):
                if mat[i, jt] != 0:
                    axes[i] = axes[i] + Poly.coordinate(dim, jt).scale(mat[i, jt])
        out = Poly(dim)
        for a, coef in self.coeffs.items():
            term = Poly.constant(dim, coef)
            for axis, e in enumerate(a):
                for _ in range(e):
                    term = term * axes[axis]
            out = out + term
        return out

    def jet(self, center, max_order: int) -> dict:
        """Taylor coefficients {a: D^a p(center)/a!} up to total order max_order."""
        shifted = self.shift_var(center)
        return {a: c for a, c in shifted.coeffs.items() if mi_degree(a) <= max_order}


def jet_reciprocal(jet: dict, dim: int, max_order: int) -> dict:
    """Multiplicative inverse of a truncated Taylor series.

    jet maps multi-index -> coefficient with jet[0] != 0. Returns the jet of
    1/f to the same order.
    """
    zero = mi_zero(dim)
    f0 = jet[zero]
    inv = {zero: 1.0 / f0}
    for a in iter_total(dim, max_order):
        if a == zero:
            continue
        acc = 0j
        for b in iter_box(a):
            if b == a:
                continue
            fa = jet.get(mi_sub(a, b))
            if fa:
                acc += inv[b] * fa
        inv[a] = -acc / f0
    return inv


def jet_product(j1: dict, j2: dict, dim: int, max_order: int) -> dict:
    out = {}
    for a, ca in j1.items():
        for b, cb in j2.items():
            key = mi_add(a, b)
            if mi_degree(key) > max_order:
                continue
            out[key] = out.get(key, 0j) + ca * cb
    return out
