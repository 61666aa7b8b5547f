"""Test functions with on-demand partial derivatives.

The library covers what the comb machinery pairs against: Gaussian packets
(with closed-form Fourier partners under the exp(-2*pi*i <xi,x>) kernel),
separable sine/sinc powers, and the crystal-adapted product functions used
for coefficient extraction.

Derivatives are symbolic per factor, never finite differences: sine factors
evaluated at (snapped) integer arguments produce exact floating zeros, which
the vanishing checks downstream assert literally.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from ._mindex import (
    Poly,
    jet_product,
    jet_reciprocal,
    mi_compositions,
    mi_degree,
    mi_zero,
    iter_total,
)
from .errors import DegenerateShifts, InvalidParams, OrderOverflow, OrderTooLow

TAU = 2.0 * math.pi
J = 2j * math.pi  # transform kernel constant: exp(-J <xi, x>)

_SNAP_TOL = 1e-9


class TestFunction:
    """Base: evaluator of D^b phi(x) up to ``max_order``."""

    dim: int
    max_order: int
    fourier_partner: "TestFunction | None" = None

    def deriv(self, b, x) -> complex:
        raise NotImplementedError

    def value(self, x) -> complex:
        return self.deriv(mi_zero(self.dim), x)

    def deriv_many(self, b, pts: np.ndarray) -> np.ndarray:
        return np.array([self.deriv(b, p) for p in np.atleast_2d(pts)])

    def values(self, pts: np.ndarray) -> np.ndarray:
        return self.deriv_many(mi_zero(self.dim), pts)

    def conj_reflect(self) -> "TestFunction":
        """The function x -> conj(phi(-x))."""
        return _ConjReflect(self)

    def _check_order(self, b) -> None:
        if mi_degree(b) > self.max_order:
            raise OrderTooLow(f"derivative {b} beyond max_order {self.max_order}")


class _ConjReflect(TestFunction):
    def __init__(self, base: TestFunction):
        self.base = base
        self.dim = base.dim
        self.max_order = base.max_order

    def deriv(self, b, x) -> complex:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        sign = (-1) ** mi_degree(b)
        return sign * self.base.deriv(b, -x).conjugate()


class GaussianPacket(TestFunction):
    """amplitude * exp(-J<modulation, xi>) * exp(-pi*width*|xi - center|^2).

    Self-Fourier for width 1 and zero center/modulation; the general packet's
    partner is again a packet, so transform identities can be checked in
    closed form.
    """

    def __init__(self, dim: int, width: float = 1.0, center=None, modulation=None,
                 amplitude: complex = 1.0, max_order: int = 64):
        if width <= 0:
            raise InvalidParams("width must be positive")
        self.dim = dim
        self.width = float(width)
        self.center = np.zeros(dim) if center is None else np.atleast_1d(np.asarray(center, float))
        self.modulation = (
            np.zeros(dim) if modulation is None else np.atleast_1d(np.asarray(modulation, float))
        )
        self.amplitude = complex(amplitude)
        self.max_order = max_order
        # log-derivative dQ_i = -2*pi*s*(xi_i - mu_i) - J c_i
        self._dq = []
        for i in range(dim):
            p = Poly.coordinate(dim, i).scale(-TAU * self.width)
            p = p + Poly.constant(dim, TAU * self.width * self.center[i] - J * self.modulation[i])
            self._dq.append(p)
        self._hermite: dict[tuple, Poly] = {mi_zero(dim): Poly.constant(dim, 1.0)}

    def _h(self, b: tuple) -> Poly:
        cached = self._hermite.get(b)
        if cached is not None:
            return cached
        axis = next(i for i, v in enumerate(b) if v > 0)
        prev = list(b)
        prev[axis] -= 1
        hp = self._h(tuple(prev))
        out = hp.diff(axis) + hp * self._dq[axis]
        self._hermite[b] = out
        return out

    def _log_value(self, x: np.ndarray) -> complex:
        d = x - self.center
        return -math.pi * self.width * float(d @ d) - J * float(self.modulation @ x)

    def deriv(self, b, x) -> complex:
        b = tuple(b)
        self._check_order(b)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.amplitude * self._h(b).eval(x) * np.exp(self._log_value(x))

    def deriv_many(self, b, pts: np.ndarray) -> np.ndarray:
        b = tuple(b)
        self._check_order(b)
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = pts - self.center
        q = -math.pi * self.width * np.sum(d * d, axis=1) - J * (pts @ self.modulation)
        return self.amplitude * self._h(b).eval_many(pts) * np.exp(q)

    def values(self, pts: np.ndarray) -> np.ndarray:
        return self.deriv_many(mi_zero(self.dim), pts)

    @property
    def fourier_partner(self) -> "GaussianPacket":
        s = self.width
        amp = self.amplitude * s ** (-self.dim / 2) * np.exp(-J * float(self.center @ self.modulation))
        return GaussianPacket(
            self.dim,
            width=1.0 / s,
            center=-self.modulation,
            modulation=self.center,
            amplitude=amp,
            max_order=self.max_order,
        )

    def conj_reflect(self) -> "GaussianPacket":
        return GaussianPacket(
            self.dim,
            width=self.width,
            center=-self.center,
            modulation=self.modulation,
            amplitude=self.amplitude.conjugate(),
            max_order=self.max_order,
        )

    def __repr__(self) -> str:
        return (f"GaussianPacket(dim={self.dim}, width={self.width}, "
                f"center={tuple(self.center)}, modulation={tuple(self.modulation)})")


# ---------------------------------------------------------------------------
# 1D profiles for product functions
# ---------------------------------------------------------------------------

def _snap(u: float, tol: float) -> tuple[float, int | None]:
    m = round(u)
    if abs(u - m) < tol:
        return float(m), int(m)
    return float(u), None


def _sin_base_table(u: float, order: int, snapped: int | None) -> np.ndarray:
    """Derivatives of sin(pi u) to ``order``; exact +-0/+-1 at snapped integers."""
    if snapped is not None:
        s = 0.0
        c = 1.0 if snapped % 2 == 0 else -1.0
    else:
        m = math.floor(u + 0.5)
        f = u - m
        sign = 1.0 if m % 2 == 0 else -1.0
        s = sign * math.sin(math.pi * f)
        c = sign * math.cos(math.pi * f)
    cycle = (s, c, -s, -c)
    return np.array([math.pi ** d * cycle[d % 4] for d in range(order + 1)])


def _leibniz_power(base: np.ndarray, k: int) -> np.ndarray:
    """Derivative table of f^k from the table of f (exact zeros propagate)."""
    order = len(base) - 1
    out = base.copy()
    for _ in range(k - 1):
        nxt = np.zeros_like(out)
        for d in range(order + 1):
            acc = 0.0
            for c in range(d + 1):
                acc += math.comb(d, c) * out[c] * base[d - c]
            nxt[d] = acc
        out = nxt
    return out


class SinPiPower:
    """u -> sin(pi u)^k with derivative tables."""

    def __init__(self, k: int, snap_tol: float = _SNAP_TOL):
        self.k = k
        self.snap_tol = snap_tol

    def derivs(self, u: float, order: int) -> np.ndarray:
        u, snapped = _snap(u, self.snap_tol)
        base = _sin_base_table(u, order, snapped)
        return _leibniz_power(base, self.k)

    def value_many(self, us: np.ndarray) -> np.ndarray:
        m = np.round(us)
        f = us - m
        f = np.where(np.abs(f) < self.snap_tol, 0.0, f)
        sign = np.where(m.astype(int) % 2 == 0, 1.0, -1.0)
        return (sign * np.sin(np.pi * f)) ** self.k


def _sinc_base_table(u: float, order: int, snapped: int | None) -> np.ndarray:
    """Derivatives of sinc(pi u) = sin(pi u)/(pi u) to ``order``."""
    if abs(u) < 0.25:
        # termwise-differentiated Taylor series, exact at u = 0
        out = np.zeros(order + 1)
        for d in range(order + 1):
            acc = 0.0
            for r in range((d + 1) // 2, (d + 60) // 2):
                e = 2 * r - d
                if e < 0:
                    continue
                term = (
                    (-1) ** r
                    * math.pi ** (2 * r)
                    / math.factorial(2 * r + 1)
                    * math.perm(2 * r, d)
                )
                acc += term * (u ** e if e else 1.0)
            out[d] = acc
        return out
    sin_tab = _sin_base_table(u, order, snapped)
    inv = np.array(
        [(-1) ** e * math.factorial(e) / (math.pi * u ** (e + 1)) for e in range(order + 1)]
    )
    out = np.zeros(order + 1)
    for d in range(order + 1):
        acc = 0.0
        for c in range(d + 1):
            acc += math.comb(d, c) * sin_tab[c] * inv[d - c]
        out[d] = acc
    return out


class SincPiPower:
    """u -> (sin(pi u)/(pi u))^k, value 1 at 0; exact zeros at other integers."""

    def __init__(self, k: int, snap_tol: float = _SNAP_TOL):
        self.k = k
        self.snap_tol = snap_tol

    def derivs(self, u: float, order: int) -> np.ndarray:
        u, snapped = _snap(u, self.snap_tol)
        base = _sinc_base_table(u, order, snapped)
        return _leibniz_power(base, self.k)

    def value_many(self, us: np.ndarray) -> np.ndarray:
        m = np.round(us)
        f = us - m
        exact_int = np.abs(f) < self.snap_tol
        safe = np.where(np.abs(us) < 1e-300, 1.0, us)
        vals = np.where(
            exact_int,
            np.where(np.abs(m) < 0.5, 1.0, 0.0),
            np.sin(np.pi * safe) / (np.pi * safe),
        )
        return vals ** self.k


# ---------------------------------------------------------------------------
# product test functions
# ---------------------------------------------------------------------------

class ProductTestFunction(TestFunction):
    """Product of an optional base function, an optional polynomial factor
    (in coordinates centered at ``origin``), and 1D profiles of linear forms
    u_r = <h_r, xi> - offset_r.

    Derivatives distribute over the factor list by the generalized Leibniz
    rule; each factor contributes its own closed-form derivative.
    """

    def __init__(self, dim: int, linear_factors, base: TestFunction | None = None,
                 poly: Poly | None = None, origin=None, max_order: int = 8):
        self.dim = dim
        self.linear_factors = [
            (np.atleast_1d(np.asarray(h, float)), float(off), prof)
            for h, off, prof in linear_factors
        ]
        self.base = base
        self.poly = poly
        self.origin = np.zeros(dim) if origin is None else np.atleast_1d(np.asarray(origin, float))
        self.max_order = max_order
        if base is not None and base.max_order < max_order:
            raise OrderTooLow("base window supports fewer derivatives than requested")

    def with_poly(self, poly: Poly) -> "ProductTestFunction":
        return ProductTestFunction(
            self.dim, self.linear_factors, base=self.base, poly=poly,
            origin=self.origin, max_order=self.max_order,
        )

    def deriv(self, b, x) -> complex:
        b = tuple(b)
        self._check_order(b)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        order = mi_degree(b)

        parts = []  # each: dict multi-index -> contribution, or callable
        if self.base is not None:
            parts.append(("base", None))
        if self.poly is not None:
            parts.append(("poly", None))
        tables = []
        for h, off, prof in self.linear_factors:
            u = float(h @ x) - off
            tables.append(prof.derivs(u, order))
            parts.append(("linear", len(tables) - 1))
        if not parts:
            return 1.0 + 0j

        xc = x - self.origin
        total = 0j
        for split, coeff in mi_compositions(b, len(parts)):
            term = complex(coeff)
            for (kind, idx), bp in zip(parts, split):
                if term == 0:
                    break
                if kind == "base":
                    term *= self.base.deriv(bp, x)
                elif kind == "poly":
                    term *= self.poly.diff_mi(bp).eval(xc)
                else:
                    h, off, prof = self.linear_factors[idx]
                    d = mi_degree(bp)
                    hpow = 1.0
                    for hv, e in zip(h, bp):
                        if e:
                            hpow *= hv ** e
                    term *= hpow * tables[idx][d]
            total += term
        return total

    def values(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.ones(len(pts), dtype=complex)
        if self.base is not None:
            out = out * self.base.values(pts)
        if self.poly is not None:
            out = out * self.poly.eval_many(pts - self.origin)
        for h, off, prof in self.linear_factors:
            out = out * prof.value_many(pts @ h - off)
        return out


class TranslatedWindow(TestFunction):
    """phi(x - shift) for a library window phi."""

    def __init__(self, base: TestFunction, shift):
        self.base = base
        self.dim = base.dim
        self.max_order = base.max_order
        self.shift = np.atleast_1d(np.asarray(shift, dtype=float))

    def deriv(self, b, x) -> complex:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.base.deriv(b, x - self.shift)

    def values(self, pts: np.ndarray) -> np.ndarray:
        return self.base.values(np.atleast_2d(pts) - self.shift)


def separable_sinc(dim: int, power: int, max_order: int = 8) -> ProductTestFunction:
    """Product over axes of sinc(pi x_i)^power."""
    eye = np.eye(dim)
    factors = [(eye[i], 0.0, SincPiPower(power)) for i in range(dim)]
    return ProductTestFunction(dim, factors, max_order=max_order)


# ---------------------------------------------------------------------------
# crystal-adapted probes
# ---------------------------------------------------------------------------

def make_psi_k(
    dual_gens: np.ndarray,
    shifts,
    target: int,
    order: int,
    window: TestFunction,
    snap_tol: float = _SNAP_TOL,
    target_jet=None,
    derivative_budget: int = 64,
) -> ProductTestFunction:
    """Build the coefficient-extraction probe for one coset of a dual crystal.

    The probe is window(xi - eta_k) times sin^(order+1)(pi <h_i, xi - eta_j>)
    over the other cosets j and sinc^(order+1)(pi <h_i, xi - eta_k>) on the
    target coset, where the columns h_i of ``dual_gens`` pair integrally with
    the crystal lattice. A polynomial jet factor normalizes the Taylor
    expansion at eta_k to the requested monomial (default: value 1, vanishing
    derivatives through ``order``), which polynomial multiplication achieves
    without enlarging the transform's support.
    """
    H = np.atleast_2d(np.asarray(dual_gens, dtype=float))
    etas = [np.atleast_1d(np.asarray(e, dtype=float)) for e in shifts]
    n = H.shape[0]
    K = len(etas)
    m = int(order)
    if not 0 <= target < K:
        raise InvalidParams("target index out of range")
    if (m + 1) * n * K > derivative_budget:
        raise OrderOverflow(f"(order+1)*n*K = {(m + 1) * n * K} exceeds budget {derivative_budget}")
    if abs(window.value(np.zeros(n)) - 1.0) > 1e-9:
        raise InvalidParams("window must satisfy psi(0) = 1")
    if window.max_order < m:
        raise OrderTooLow("window does not support the requested derivative order")

    eta_k = etas[target]
    factors = []
    for j, eta in enumerate(etas):
        if j == target:
            continue
        for i in range(n):
            h = H[:, i]
            factors.append((h, float(h @ eta), SinPiPower(m + 1, snap_tol)))
    for i in range(n):
        h = H[:, i]
        factors.append((h, float(h @ eta_k), SincPiPower(m + 1, snap_tol)))

    raw = ProductTestFunction(
        n, factors, base=TranslatedWindow(window, eta_k), origin=eta_k, max_order=m,
    )

    # Taylor jet of the raw product at eta_k, to order m
    jet = {}
    for b in iter_total(n, m):
        jet[b] = raw.deriv(b, eta_k) / math.prod(math.factorial(v) for v in b)
    center_val = jet[mi_zero(n)]
    if abs(center_val) < 1e-12:
        raise DegenerateShifts(
            "sine factors vanish at the target shift; probe cannot be normalized"
        )
    goal = {tuple(target_jet if target_jet is not None else mi_zero(n)): 1.0}
    corr = jet_product(goal, jet_reciprocal(jet, n, m), n, m)
    w_poly = Poly(n, corr)
    return raw.with_poly(w_poly)


# ---------------------------------------------------------------------------
# validation helper
# ---------------------------------------------------------------------------

def derivative_consistency(f: TestFunction, points, h: float = 1e-5) -> float:
    """Worst relative mismatch between first derivatives and central differences."""
    worst = 0.0
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        for axis in range(f.dim):
            e = np.zeros(f.dim)
            e[axis] = h
            fd = (f.value(x + e) - f.value(x - e)) / (2 * h)
            b = [0] * f.dim
            b[axis] = 1
            exact = f.deriv(tuple(b), x)
            scale = max(abs(exact), abs(fd), 1e-8)
            worst = max(worst, abs(fd - exact) / scale)
    return worst
