"""Regularized autocorrelation of weighted combs and windowed diffraction.

The regularized autocorrelation of a comb t with regularizer phi is the comb
on the difference set of supp(t) whose coefficients come from the convolution
pairing of (phi t) with the adjoint comb. For order-0 combs with weights w
this is

    a_r = sum_{q : q, q+r in support} phi(q+r) w_{q+r} conj(w_q),

i.e. phi attaches to the left (unconjugated) convolution factor. For operator
combs the operators compose by polynomial multiplication after phi is folded
into the left factor by the Leibniz rule.

Positivity of the windowed diffraction is only as exact as the regularizer is
flat across the window; wide regularizers (band-limited-surrogate regime)
push the defect below reporting tolerances.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._mindex import iter_box, mi_add, mi_binom, mi_degree, mi_sub, mi_zero
from .comb import DiffOperator, WeightedComb, make_comb
from .errors import AllCandidatesDegenerate, InvalidParams, OrderTooLow, OutputCap
from .lattice import Region
from .testfun import J, TestFunction


@dataclass(frozen=True)
class AutocorrComb:
    """Autocorrelation coefficients supported on the windowed difference set."""

    base: WeightedComb
    regularizer_id: str
    diff_radius: float


def _multiply_by_function(op: DiffOperator, phi: TestFunction, p: np.ndarray) -> dict:
    """Coefficients of phi(x) * t_p(D) delta_p as an operator at p.

    phi D^b delta_p = sum_{c <= b} binom(b,c) (-1)^|c| (D^c phi)(p) D^(b-c) delta_p.
    """
    out: dict = {}
    for b, coef in op.terms.items():
        for c in iter_box(b):
            c = tuple(c)
            val = (
                coef
                * mi_binom(b, c)
                * (-1) ** mi_degree(c)
                * phi.deriv(c, p)
            )
            if val == 0:
                continue
            key = mi_sub(b, c)
            out[key] = out.get(key, 0j) + val
    return {k: v for k, v in out.items() if v != 0}


def autocorr(t: WeightedComb, phi: TestFunction, diff_radius: float,
             cap: int = 5_000_000, dedupe_tol: float | None = None) -> AutocorrComb:
    """Autocorrelation comb of t, truncated to differences within diff_radius."""
    if diff_radius <= 0:
        raise InvalidParams("diff_radius must be positive")
    if phi.max_order < 2 * t.order:
        raise OrderTooLow("regularizer must support twice the comb order")
    if dedupe_tol is None:
        dedupe_tol = 1e-9 * diff_radius

    pts = t.points()
    n = len(pts)
    ops = [op for _, op in t.entries]

    # left factor (phi t) at p, right factor t* at -q with operator
    # sum_i (-1)^|i| conj(t_{q,i}) D^i
    left = [_multiply_by_function(op, phi, p) for (p, _), op in zip(t.entries, ops)]
    right = [
        {i: (-1) ** mi_degree(i) * c.conjugate() for i, c in op.terms.items()}
        for op in ops
    ]

    tree = cKDTree(pts)
    pairs = tree.query_pairs(diff_radius, output_type="ndarray")
    if 2 * len(pairs) + n > cap:
        raise OutputCap(f"{2 * len(pairs) + n} difference terms exceed cap {cap}")

    acc: dict[tuple, dict] = {}

    def accumulate(r_vec: np.ndarray, op_p: dict, op_q: dict):
        key = tuple(np.round(r_vec / dedupe_tol).astype(np.int64))
        slot = acc.get(key)
        if slot is None:
            slot = {"r": r_vec, "terms": {}}
            acc[key] = slot
        terms = slot["terms"]
        for i1, c1 in op_p.items():
            for i2, c2 in op_q.items():
                k = mi_add(i1, i2)
                terms[k] = terms.get(k, 0j) + c1 * c2

    for idx in range(n):
        accumulate(pts[idx] * 0.0, left[idx], right[idx])
    for ia, ib in pairs:
        accumulate(pts[ia] - pts[ib], left[ia], right[ib])
        accumulate(pts[ib] - pts[ia], left[ib], right[ia])

    entries = []
    for key in sorted(acc):
        slot = acc[key]
        terms = {k: v for k, v in slot["terms"].items() if v != 0}
        if terms:
            entries.append((slot["r"], terms))
    if not entries:
        raise InvalidParams("autocorrelation is identically zero")
    window = Region.ball(np.zeros(t.dim), diff_radius)
    base = make_comb(entries, window)
    return AutocorrComb(base=base, regularizer_id=repr(phi), diff_radius=diff_radius)


def windowed_amplitude(t: WeightedComb, sigma) -> complex:
    """Window-normalized exponential sum of the comb's order-0 weights at sigma.

    Operator entries contribute only their order-0 coefficient; their higher
    terms are outside this surrogate and are silently truncated (the order-0
    component is what a scalar diffraction experiment sees).
    """
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    vol = t.window.volume()
    zero = mi_zero(t.dim)
    total = 0j
    for p, op in t.entries:
        w = op.terms.get(zero)
        if w is None:
            continue
        total += w * np.exp(-J * float(sigma @ p))
    return total / vol


@dataclass(frozen=True)
class SpectrumSamples:
    """Spectral samples: points with complex amplitude and intensity."""

    points: np.ndarray
    amplitudes: np.ndarray
    window_size: float
    min_real: float
    max_abs_imag: float

    @property
    def intensities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        dim = self.points.shape[1]
        writer.writerow([f"sigma{i}" for i in range(dim)] + ["re", "im", "intensity"])
        for p, a in zip(self.points, self.amplitudes):
            writer.writerow(
                [format(v, ".17g") for v in p]
                + [format(a.real, ".17g"), format(a.imag, ".17g"),
                   format(abs(a) ** 2, ".17g")]
            )
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "schema": "spectrum-v1",
            "points": [list(p) for p in self.points],
            "re": [a.real for a in self.amplitudes],
            "im": [a.imag for a in self.amplitudes],
            "window_size": self.window_size,
            "min_real": self.min_real,
            "max_abs_imag": self.max_abs_imag,
        }


def diffraction_of_autocorr(ac: AutocorrComb, sigma_list) -> SpectrumSamples:
    """Evaluate the transform of the autocorrelation comb at given dual points.

    The value at sigma is sum over entries of a_{r,b} (J sigma)^b e^{-J<sigma,r>};
    for order-0 autocorrelations this is the plain exponential sum. The report
    carries the minimum real part and maximum |imag| over the sample set for
    positivity checks.
    """
    sigmas = np.atleast_2d(np.asarray(sigma_list, dtype=float))
    rs = ac.base.points()
    vals = np.zeros(len(sigmas), dtype=complex)
    for (r, op), _ in zip(ac.base.entries, range(len(ac.base.entries))):
        phases = np.exp(-J * (sigmas @ r))
        for b, c in op.terms.items():
            if mi_degree(b) == 0:
                vals += c * phases
            else:
                mono = np.ones(len(sigmas), dtype=complex)
                for axis, e in enumerate(b):
                    if e:
                        mono = mono * (J * sigmas[:, axis]) ** e
                vals += c * mono * phases
    return SpectrumSamples(
        points=sigmas,
        amplitudes=vals,
        window_size=ac.base.window.volume(),
        min_real=float(np.min(vals.real)) if len(vals) else 0.0,
        max_abs_imag=float(np.max(np.abs(vals.imag))) if len(vals) else 0.0,
    )


def select_lambda(families, trials: int = 512, seed: int = 42,
                  min_abs: float = 1e-12) -> np.ndarray:
    """Pick a real weight vector keeping every coefficient polynomial nonzero.

    Each family is a dict {multi-index k: coefficient} describing the
    polynomial sum_k lambda^k c_k at one spectral point. Returns the sampled
    lambda maximizing the minimum |polynomial| over the families; raises if
    even the best draw leaves some family below min_abs.
    """
    families = list(families)
    if not families:
        raise InvalidParams("need at least one coefficient family")
    dim = len(next(iter(families[0])))
    for fam in families:
        if not fam or all(c == 0 for c in fam.values()):
            raise AllCandidatesDegenerate("a family has no nonzero coefficients")
    rng = np.random.default_rng(seed)
    best_lam = None
    best_score = -1.0
    for _ in range(trials):
        lam = rng.uniform(-1.0, 1.0, dim)
        score = math.inf
        for fam in families:
            val = 0j
            for k, c in fam.items():
                term = c
                for axis, e in enumerate(k):
                    if e:
                        term = term * lam[axis] ** e
                val += term
            score = min(score, abs(val))
            if score <= best_score:
                break
        if score > best_score:
            best_score = score
            best_lam = lam
    if best_lam is None or best_score < min_abs:
        raise AllCandidatesDegenerate(
            f"best minimum |sum| = {best_score:.3e} below {min_abs:.1e}"
        )
    return best_lam
