"""Poisson-form combs and their symbolic Fourier transform.

A Poisson comb over a lattice L is a finite sum of terms

    exp(-J<eta, x>) P(x, D) sum_{p in L+q} delta_p,      J = 2*pi*i,

with P a polynomial in both multiplications and derivatives, kept in normal
order (all multiplications left of all derivatives). The Fourier transform
maps such a comb to one over the dual lattice, exactly, by operator calculus:

    multiplication by x_a  ->  -J^-1 D_sigma_a
    D_x_a                  ->   J sigma_a
    modulation by eta      ->  support shift by -eta
    coset shift q          ->  modulation by q, and 1/|det G| from the
                               classical summation identity.

Pushing the transformed operator through the output shift and modulation
contributes binomial cross terms (sigma -> sigma + eta, D -> D - J q) and the
scalar exp(J<q, eta>); all are expanded back into normal order. Coefficients
carry powers of 2*pi as an integer grade so the double-transform-equals-
reflection identity holds to rounding error, not quadrature error.

Pairing against test functions truncates the lattice sum at a radius and
certifies the discarded tail against shell decay.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._mindex import (
    iter_box,
    mi_add,
    mi_binom,
    mi_degree,
    mi_falling,
    mi_power,
    mi_sub,
    mi_zero,
    mi_compositions,
)
from .errors import InvalidParams, OrderTooLow, TailBoundViolated
from .lattice import Crystal, LatticeBasis, Region, make_crystal, crystal_points, reduce_mod
from .testfun import J, TestFunction

_MERGE_DECIMALS = 9


# ---------------------------------------------------------------------------
# coefficients with 2*pi grading
# ---------------------------------------------------------------------------

class TauCoeff:
    """Complex coefficient split over integer powers of 2*pi: sum_g c_g (2pi)^g."""

    __slots__ = ("grades",)

    def __init__(self, grades: dict | None = None):
        self.grades = {}
        if grades:
            for g, c in grades.items():
                if c != 0:
                    self.grades[int(g)] = complex(c)

    @classmethod
    def of(cls, value, grade: int = 0) -> "TauCoeff":
        return cls({grade: value})

    def __add__(self, other: "TauCoeff") -> "TauCoeff":
        out = dict(self.grades)
        for g, c in other.grades.items():
            v = out.get(g, 0j) + c
            if v == 0:
                out.pop(g, None)
            else:
                out[g] = v
        return TauCoeff(out)

    def __mul__(self, other) -> "TauCoeff":
        if not isinstance(other, TauCoeff):
            other = TauCoeff.of(other)
        out: dict[int, complex] = {}
        for g1, c1 in self.grades.items():
            for g2, c2 in other.grades.items():
                g = g1 + g2
                v = out.get(g, 0j) + c1 * c2
                if v == 0:
                    out.pop(g, None)
                else:
                    out[g] = v
        return TauCoeff(out)

    def scale_grade(self, shift: int) -> "TauCoeff":
        return TauCoeff({g + shift: c for g, c in self.grades.items()})

    def to_complex(self) -> complex:
        return sum(c * (2.0 * math.pi) ** g for g, c in self.grades.items()) + 0j

    def __bool__(self) -> bool:
        return bool(self.grades)

    def __repr__(self) -> str:
        return f"TauCoeff({self.grades!r})"


# ---------------------------------------------------------------------------
# polynomial differential operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolyDiffOperator:
    """Normal-ordered sum c_{ab} x^a D^b; terms maps (a, b) -> TauCoeff."""

    terms: dict

    @classmethod
    def from_terms(cls, terms: dict) -> "PolyDiffOperator":
        cleaned = {}
        for (a, b), c in terms.items():
            if not isinstance(c, TauCoeff):
                c = TauCoeff.of(c)
            if c:
                cleaned[(tuple(a), tuple(b))] = c
        return cls(terms=cleaned)

    @classmethod
    def identity(cls, dim: int) -> "PolyDiffOperator":
        z = mi_zero(dim)
        return cls.from_terms({(z, z): 1.0})

    def is_zero(self) -> bool:
        return not self.terms

    def x_degree(self) -> int:
        return max((mi_degree(a) for a, _ in self.terms), default=0)

    def d_order(self) -> int:
        return max((mi_degree(b) for _, b in self.terms), default=0)

    def plus(self, other: "PolyDiffOperator") -> "PolyDiffOperator":
        out = dict(self.terms)
        for key, c in other.terms.items():
            v = out.get(key)
            out[key] = c if v is None else v + c
        return PolyDiffOperator.from_terms(out)

    def scaled(self, factor) -> "PolyDiffOperator":
        return PolyDiffOperator.from_terms(
            {key: c * factor for key, c in self.terms.items()}
        )

    def to_numeric(self) -> dict:
        return {key: c.to_complex() for key, c in self.terms.items()}

    def reflected(self) -> "PolyDiffOperator":
        """P(-x, -D)."""
        return PolyDiffOperator.from_terms(
            {key: c * ((-1.0) ** (mi_degree(key[0]) + mi_degree(key[1])))
             for key, c in self.terms.items()}
        )

    def shift_derivative(self, ell: np.ndarray) -> "PolyDiffOperator":
        """Substitute D -> D + J*ell (used when reducing phases mod the dual)."""
        out: dict = {}
        for (a, b), coef in self.terms.items():
            for c in iter_box(b):
                c = tuple(c)
                rest = mi_sub(b, c)
                factor = TauCoeff.of(
                    mi_binom(b, c) * (1j ** mi_degree(rest)) * mi_power(ell, rest),
                    grade=mi_degree(rest),
                )
                add = coef * factor
                if not add:
                    continue
                key = (a, c)
                prev = out.get(key)
                out[key] = add if prev is None else prev + add
        return PolyDiffOperator.from_terms(out)

    def to_json(self) -> list:
        rows = []
        for (a, b), coef in sorted(self.terms.items()):
            for g, c in sorted(coef.grades.items()):
                rows.append(
                    {"a": list(a), "b": list(b), "re": c.real, "im": c.imag, "tau_grade": g}
                )
        return rows

    @classmethod
    def from_json(cls, rows: list) -> "PolyDiffOperator":
        terms: dict = {}
        for row in rows:
            key = (tuple(row["a"]), tuple(row["b"]))
            add = TauCoeff({int(row.get("tau_grade", 0)): complex(row["re"], row["im"])})
            prev = terms.get(key)
            terms[key] = add if prev is None else prev + add
        return cls.from_terms(terms)


# ---------------------------------------------------------------------------
# Poisson combs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoissonComb:
    """Lattice plus (phase, shift, operator) terms, phases and shifts reduced."""

    lattice: LatticeBasis
    terms: tuple  # ((eta, q, PolyDiffOperator), ...)

    @property
    def dim(self) -> int:
        return self.lattice.dim

    def to_json(self) -> dict:
        return {
            "schema": "pcomb-v1",
            "lattice": self.lattice.to_json(),
            "terms": [
                {"eta": list(eta), "q": list(q), "op": op.to_json()}
                for eta, q, op in self.terms
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "PoissonComb":
        if data.get("schema") != "pcomb-v1":
            raise InvalidParams("expected schema pcomb-v1")
        lat = LatticeBasis.from_json(data["lattice"])
        terms = [
            (np.array(t["eta"], float), np.array(t["q"], float),
             PolyDiffOperator.from_json(t["op"]))
            for t in data["terms"]
        ]
        return make_poisson_comb(lat, terms)


def make_poisson_comb(lattice: LatticeBasis, terms) -> PoissonComb:
    """Normalize: shifts mod L, phases mod L* (with the operator adjustment),
    merge coincident (phase, shift) pairs, drop zero operators, sort."""
    dual = lattice.dual()
    normd: dict[tuple, list] = {}
    for eta, q, op in terms:
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        q = np.atleast_1d(np.asarray(q, dtype=float))
        if not isinstance(op, PolyDiffOperator):
            op = PolyDiffOperator.from_terms(op)
        if eta.shape != (lattice.dim,) or q.shape != (lattice.dim,):
            raise InvalidParams("term dimension does not match lattice")
        _, q_red = reduce_mod(lattice, q)
        _, eta_red = reduce_mod(dual, eta)
        ell = eta - eta_red
        if np.linalg.norm(ell) > 0:
            # exp(-J<eta,x>) = exp(-J<eta_red,x>) exp(-J<ell,x>) and the inner
            # exponential is constant exp(-J<ell,q>) on L+q after commuting
            # through P, which shifts the derivative argument by J*ell.
            phase = np.exp(-J * float(ell @ q_red))
            op = op.shift_derivative(ell).scaled(phase)
        if op.is_zero():
            continue
        key = (tuple(np.round(eta_red, _MERGE_DECIMALS)),
               tuple(np.round(q_red, _MERGE_DECIMALS)))
        slot = normd.get(key)
        if slot is None:
            normd[key] = [eta_red, q_red, op]
        else:
            slot[2] = slot[2].plus(op)
    out = []
    for key in sorted(normd):
        eta_red, q_red, op = normd[key]
        if op.is_zero():
            continue
        eta_red = eta_red.copy()
        eta_red.setflags(write=False)
        q_red = q_red.copy()
        q_red.setflags(write=False)
        out.append((eta_red, q_red, op))
    return PoissonComb(lattice=lattice, terms=tuple(out))


def scalar_comb(lattice: LatticeBasis, eta=None, q=None, weight=1.0) -> PoissonComb:
    """Single-term order-0 comb; convenience for fixtures."""
    n = lattice.dim
    eta = np.zeros(n) if eta is None else eta
    q = np.zeros(n) if q is None else q
    z = mi_zero(n)
    op = PolyDiffOperator.from_terms({(z, z): weight})
    return make_poisson_comb(lattice, [(eta, q, op)])


# ---------------------------------------------------------------------------
# the transform
# ---------------------------------------------------------------------------

def _substitute(op: PolyDiffOperator) -> dict:
    """Map x^a D^b -> (-J^-1 D)^a (J sigma)^b and re-normal-order.

    Returns {(A, B): TauCoeff} with sigma^A D^B in normal order, using
    D^a o sigma^b = sum_c binom(a,c) falling(b,c) sigma^(b-c) D^(a-c).
    The scalar is i^(|a|+|b|) tau^(|b|-|a|) since -J^-1 = i/tau, J = i*tau.
    """
    out: dict = {}
    for (a, b), coef in op.terms.items():
        da, db = mi_degree(a), mi_degree(b)
        scalar = TauCoeff.of(1j ** (da + db), grade=db - da)
        base = coef * scalar
        caps = tuple(min(x, y) for x, y in zip(a, b))
        for c in iter_box(caps):
            c = tuple(c)
            k = mi_binom(a, c) * mi_falling(b, c)
            if k == 0:
                continue
            key = (mi_sub(b, c), mi_sub(a, c))
            add = base * TauCoeff.of(k)
            prev = out.get(key)
            out[key] = add if prev is None else prev + add
    return out


def fourier_comb(pc: PoissonComb) -> PoissonComb:
    """Exact transform onto the dual lattice (see module docstring)."""
    dual = pc.lattice.dual()
    det_inv = 1.0 / pc.lattice.det_abs
    out_terms = []
    for eta, q, op in pc.terms:
        sub = _substitute(op)
        # sigma -> sigma + eta, D -> D - J q, both binomially
        expanded: dict = {}
        for (A, B), coef in sub.items():
            for A2 in iter_box(A):
                A2 = tuple(A2)
                restA = mi_sub(A, A2)
                fA = mi_binom(A, A2) * mi_power(eta, restA)
                if fA == 0:
                    continue
                for B2 in iter_box(B):
                    B2 = tuple(B2)
                    restB = mi_sub(B, B2)
                    fB = mi_binom(B, B2) * ((-1j) ** mi_degree(restB)) * mi_power(q, restB)
                    if fB == 0:
                        continue
                    add = coef * TauCoeff.of(fA * fB, grade=mi_degree(restB))
                    key = (A2, B2)
                    prev = expanded.get(key)
                    expanded[key] = add if prev is None else prev + add
        scalar = det_inv * np.exp(-J * float(q @ eta))
        new_op = PolyDiffOperator.from_terms(expanded).scaled(scalar)
        out_terms.append((q.copy(), -eta, new_op))
    return make_poisson_comb(dual, out_terms)


def reflect_comb(pc: PoissonComb) -> PoissonComb:
    """The comb of t(-x): points negated, operators P(-x, -D)."""
    out = [(-eta, -q, op.reflected()) for eta, q, op in pc.terms]
    return make_poisson_comb(pc.lattice, out)


def comb_coefficient_deviation(pc1: PoissonComb, pc2: PoissonComb) -> float:
    """Max absolute coefficient difference between canonicalized combs."""
    def as_map(pc):
        out = {}
        for eta, q, op in pc.terms:
            key = (tuple(np.round(eta, 8)), tuple(np.round(q, 8)))
            out[key] = op.to_numeric()
        return out

    m1, m2 = as_map(pc1), as_map(pc2)
    worst = 0.0
    for key in set(m1) | set(m2):
        t1 = m1.get(key, {})
        t2 = m2.get(key, {})
        for term_key in set(t1) | set(t2):
            worst = max(worst, abs(t1.get(term_key, 0j) - t2.get(term_key, 0j)))
    return worst


# ---------------------------------------------------------------------------
# pairing against test functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairReport:
    value: complex
    trunc_radius: float
    tail_estimate: float
    points_used: int


def pair_report(pc: PoissonComb, psi: TestFunction, trunc_radius: float,
                tail_tol: float = 1e-12) -> PairReport:
    """Pair the comb against psi over lattice points within trunc_radius.

    The contribution of exp(-J<eta,x>) P(x,D) delta_p to <t, psi> is

        sum_{ab} c_ab (-1)^|b| D^b [ x^a exp(-J<eta,x>) psi(x) ] (p),

    expanded by the trinomial Leibniz rule. The discarded tail is estimated
    from the decay ratio of the two outermost shells; a ratio that fails to
    certify tail < tail_tol * max(1, |value|) raises TailBoundViolated.
    """
    if psi.dim != pc.dim:
        raise InvalidParams("test function dimension mismatch")
    needed = max((op.d_order() for _, _, op in pc.terms), default=0)
    if psi.max_order < needed:
        raise OrderTooLow("test function does not support the comb's operator order")

    shell_w = max(float(np.max(np.linalg.norm(pc.lattice.generators, axis=0))), 1e-9)
    region = Region.ball(np.zeros(pc.dim), trunc_radius)
    total = 0j
    n_pts = 0
    s_last = 0.0
    s_prev = 0.0
    for eta, q, op in pc.terms:
        crys = make_crystal(pc.lattice, [q])
        pts = crystal_points(crys, region)
        if len(pts) == 0:
            continue
        n_pts += len(pts)
        radii = np.linalg.norm(pts, axis=1)
        phases = np.exp(-J * (pts @ eta))
        per_point = np.zeros(len(pts), dtype=complex)
        for (a, b), coef in op.to_numeric().items():
            sign = (-1.0) ** mi_degree(b)
            for (b0, b1, b2), multi in mi_compositions(b, 3):
                fall = mi_falling(a, b0)
                if fall == 0:
                    continue
                mono = np.ones(len(pts))
                rest = mi_sub(a, b0)
                for axis, e in enumerate(rest):
                    if e:
                        mono = mono * pts[:, axis] ** e
                mod = mi_power(-J * eta, b1)
                dpsi = psi.deriv_many(b2, pts)
                per_point = per_point + coef * sign * multi * fall * mod * mono * dpsi
        per_point = per_point * phases
        total += complex(np.sum(per_point))
        mags = np.abs(per_point)
        s_last += float(np.sum(mags[radii > trunc_radius - shell_w]))
        s_prev += float(
            np.sum(mags[(radii > trunc_radius - 2 * shell_w) & (radii <= trunc_radius - shell_w)])
        )

    if s_last == 0.0:
        tail = 0.0
    elif s_prev > 0.0 and s_last < s_prev:
        ratio = s_last / s_prev
        tail = s_last * ratio / (1.0 - ratio)
    else:
        tail = math.inf
    scale = max(1.0, abs(total))
    if tail > tail_tol * scale:
        raise TailBoundViolated(
            f"tail estimate {tail:.3e} exceeds {tail_tol:.1e} * scale at radius {trunc_radius}"
        )
    return PairReport(value=total, trunc_radius=trunc_radius, tail_estimate=tail,
                      points_used=n_pts)


def pair(pc: PoissonComb, psi: TestFunction, trunc_radius: float,
         tail_tol: float = 1e-12) -> complex:
    return pair_report(pc, psi, trunc_radius, tail_tol).value


# ---------------------------------------------------------------------------
# transform verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransformRow:
    label: str
    lhs: complex
    rhs: complex
    abs_dev: float
    rel_dev: float


@dataclass(frozen=True)
class TransformReport:
    rows: tuple
    passed: bool
    tol: float
    trunc_radius: float

    def max_abs_dev(self) -> float:
        return max((r.abs_dev for r in self.rows), default=0.0)


def verify_transform(pc: PoissonComb, test_set, trunc_radius: float,
                     tol: float = 1e-9, tail_tol: float = 1e-12) -> TransformReport:
    """Check <F(t), psi> = <t, F(psi)> for every psi with a closed-form partner."""
    transformed = fourier_comb(pc)
    rows = []
    for idx, psi in enumerate(test_set):
        partner = psi.fourier_partner
        if partner is None:
            raise InvalidParams("test function lacks a closed-form Fourier partner")
        lhs = pair(transformed, psi, trunc_radius, tail_tol)
        rhs = pair(pc, partner, trunc_radius, tail_tol)
        dev = abs(lhs - rhs)
        rows.append(TransformRow(
            label=getattr(psi, "label", None) or f"psi[{idx}] {psi!r}",
            lhs=lhs, rhs=rhs, abs_dev=dev,
            rel_dev=dev / max(abs(rhs), 1e-300),
        ))
    passed = all(r.abs_dev < tol for r in rows)
    return TransformReport(rows=tuple(rows), passed=passed, tol=tol,
                           trunc_radius=trunc_radius)


# ---------------------------------------------------------------------------
# order-0 weight synthesis (used by fitting fixtures and the CLI)
# ---------------------------------------------------------------------------

def synthesize_weights(pc: PoissonComb, points: np.ndarray) -> np.ndarray:
    """Evaluate the comb's scalar weight at given support points.

    Only derivative-free combs have pointwise weights: w(p) =
    sum_terms exp(-J<eta,p>) P(p) over terms whose coset contains p.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tol = pc.lattice.membership_tol()
    out = np.zeros(len(pts), dtype=complex)
    for eta, q, op in pc.terms:
        if op.d_order() > 0:
            raise InvalidParams("comb has derivative terms; no pointwise weights")
        c = (pc.lattice.inverse @ (pts - q).T).T
        on_coset = np.linalg.norm(
            (pts - q) - (np.round(c) @ pc.lattice.generators.T), axis=1
        ) <= tol
        if not np.any(on_coset):
            continue
        numeric = op.to_numeric()
        vals = np.zeros(len(pts), dtype=complex)
        for (a, _), coef in numeric.items():
            mono = np.full(len(pts), coef, dtype=complex)
            for axis, e in enumerate(a):
                if e:
                    mono = mono * pts[:, axis] ** e
            vals += mono
        out += on_coset * np.exp(-J * (pts @ eta)) * vals
    return out
