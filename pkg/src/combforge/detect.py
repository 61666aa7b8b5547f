"""Inverse problems: recover lattice+coset structure from points, and recover
phase/polynomial weight structure from samples on a crystal.

Detection scores candidate translations on a shrunk window (a true period
scores an exact zero on noise-free data), generates the period lattice from
accepted candidates, and coset-decomposes the points. Weight recovery fits
minimal linear recurrences along each generator direction (Hankel nullspace),
matches the per-direction multipliers into phase vectors, and fits polynomial
amplitudes per coset by least squares.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.spatial import cKDTree

from ._mindex import Poly, iter_box
from .errors import (
    IllConditioned,
    InvalidParams,
    RecurrenceNotFound,
    RootsOffCircle,
    TooFewPoints,
    WindowTooSmall,
)
from .fourier import PoissonComb, PolyDiffOperator, make_poisson_comb
from .lattice import Crystal, LatticeBasis, crystal_points, make_crystal, make_lattice, reduce_mod
from .pointset import PointSet
from .testfun import TAU


@dataclass(frozen=True)
class DetectionReport:
    verdict: str  # "crystal" | "non_crystal_evidence" | "inconclusive"
    lattice: LatticeBasis | None
    shifts: tuple
    coverage_residual: float
    period_candidates_tested: int
    accepted_periods: tuple = ()

    def crystal(self) -> Crystal:
        if self.lattice is None:
            raise InvalidParams("no crystal in report")
        return make_crystal(self.lattice, list(self.shifts))


@dataclass
class DetectOptions:
    membership_tol: float | None = None   # point-coincidence tolerance
    max_cosets: int = 8
    score_tol: float = 0.02               # accepted mismatch fraction for a period
    shrink: float | None = None           # window shrink per candidate; default |v|
    max_candidates: int = 400
    min_periods_across: int = 3
    max_denominator: int = 24


def _window_extent(ps: PointSet) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = ps.window.bounding_box()
    return np.asarray(lo, float), np.asarray(hi, float)


def _score_period(ps: PointSet, tree: cKDTree, v: np.ndarray, tol: float) -> float:
    """Symmetric-difference fraction between P and P+v on the shrunk window.

    Comparing on the window shrunk by |v| removes boundary artifacts: a true
    period then scores exactly zero on noise-free data.
    """
    pts = ps.points
    vn = float(np.linalg.norm(v))
    core = ps.window.contains(pts, slack=-vn)
    n_core = int(np.sum(core))
    if n_core == 0:
        return 1.0
    mism = 0
    d, _ = tree.query(pts[core] + v, k=1)
    mism += int(np.sum(d > tol))
    d, _ = tree.query(pts[core] - v, k=1)
    mism += int(np.sum(d > tol))
    return mism / (2.0 * n_core)


def _hnf_merge(gens: np.ndarray, coeff: np.ndarray, max_den: int) -> np.ndarray | None:
    """Adjoin a vector with rational coordinates `coeff` (in the current basis)
    to the lattice: returns new generator matrix or None if not near-rational."""
    fracs = []
    den = 1
    for c in coeff:
        f = Fraction(float(c)).limit_denominator(max_den)
        if abs(float(f) - c) > 1e-6:
            return None
        fracs.append(f)
        den = den * f.denominator // math.gcd(den, f.denominator)
    cols = [den * np.eye(len(coeff), dtype=np.int64)[:, i] for i in range(len(coeff))]
    cols.append(np.array([int(f * den) for f in fracs], dtype=np.int64))
    H = _hermite_normal_form(np.stack(cols, axis=1))
    return gens @ (H / den)


def _hermite_normal_form(M: np.ndarray) -> np.ndarray:
    """Column-style HNF of an integer matrix with full row rank (small sizes)."""
    M = M.astype(np.int64).copy()
    n, m = M.shape
    col = 0
    for row in range(n):
        piv = None
        for c in range(col, m):
            if M[row, c] != 0:
                piv = c
                break
        if piv is None:
            continue
        M[:, [col, piv]] = M[:, [piv, col]]
        # eliminate other columns via gcd steps
        for c in range(col + 1, m):
            while M[row, c] != 0:
                qd = M[row, c] // M[row, col]
                M[:, c] -= qd * M[:, col]
                if M[row, c] != 0:
                    M[:, [col, c]] = M[:, [c, col]]
        if M[row, col] < 0:
            M[:, col] = -M[:, col]
        col += 1
    return M[:, :col]


def detect_crystal(ps: PointSet, opts: DetectOptions | None = None) -> DetectionReport:
    """Decide whether the windowed point set is a (windowed) lattice crystal."""
    opts = opts or DetectOptions()
    pts = ps.points
    n_pts, dim = pts.shape
    if n_pts < 2 * (dim + 1):
        raise TooFewPoints(f"need at least {2 * (dim + 1)} points")
    lo, hi = _window_extent(ps)
    extent = float(np.min(hi - lo))
    tol = opts.membership_tol if opts.membership_tol is not None else 1e-9 * extent

    tree = cKDTree(pts)

    # candidate periods: shortest pairwise differences (deduplicated, one sign)
    k_near = min(n_pts, max(2 * opts.max_cosets + 6, 12))
    dists, idxs = tree.query(pts, k=k_near)
    cand: dict[tuple, np.ndarray] = {}
    for i in range(n_pts):
        for dd, jj in zip(dists[i][1:], idxs[i][1:]):
            if not np.isfinite(dd):
                continue
            v = pts[jj] - pts[i]
            first = np.nonzero(np.abs(v) > 1e-12)[0]
            if len(first) and v[first[0]] < 0:
                v = -v
            key = tuple(np.round(v / max(tol, 1e-12)).astype(np.int64))
            if key not in cand:
                cand[key] = v
    candidates = sorted(cand.values(), key=lambda v: (np.linalg.norm(v), tuple(v)))
    candidates = candidates[: opts.max_candidates]

    accepted: list[np.ndarray] = []
    basis: np.ndarray | None = None
    lat: LatticeBasis | None = None
    tested = 0

    def in_current(v: np.ndarray) -> bool:
        if lat is None:
            return False
        c = lat.inverse @ v
        return bool(np.linalg.norm(v - lat.generators @ np.round(c)) <= 10 * tol)

    for v in candidates:
        if basis is not None and lat is not None:
            # periods longer than the current cell diagonal cannot refine the
            # lattice: their remainder mod the lattice is a shorter period
            # already scanned
            diam = float(np.sum(np.linalg.norm(basis, axis=0)))
            if np.linalg.norm(v) > diam + 10 * tol and len(accepted) >= dim:
                break
        if in_current(v):
            continue
        tested += 1
        score = _score_period(ps, tree, v, tol)
        if score > opts.score_tol:
            continue
        accepted.append(v)
        if basis is None:
            basis = v[:, None]
        else:
            trial = np.hstack([basis, v[:, None]])
            if np.linalg.matrix_rank(trial, tol=1e-9 * max(1.0, extent)) > basis.shape[1]:
                basis = trial
            elif basis.shape[1] == dim:
                merged = _hnf_merge(basis, np.linalg.solve(basis, v), opts.max_denominator)
                if merged is not None:
                    basis = merged
            else:
                continue
        if basis.shape[1] == dim:
            lat = make_lattice(basis)

    if lat is None or basis is None or basis.shape[1] < dim:
        return DetectionReport(
            verdict="non_crystal_evidence",
            lattice=None,
            shifts=(),
            coverage_residual=1.0,
            period_candidates_tested=tested,
            accepted_periods=tuple(tuple(v) for v in accepted),
        )

    # window must hold a few periods along each accepted generator
    for i in range(dim):
        g = lat.generators[:, i]
        span = float(np.abs(g) @ (hi - lo)) / max(float(g @ g), 1e-300)
        if span < opts.min_periods_across:
            raise WindowTooSmall(
                f"window spans {span:.1f} < {opts.min_periods_across} periods along a generator"
            )

    # coset decomposition
    reps: list[np.ndarray] = []
    counts: list[int] = []
    assign_tol = max(10 * tol, 1e-9)
    for p in pts:
        _, r = reduce_mod(lat, p)
        hit = False
        for k, rep in enumerate(reps):
            d = r - rep
            c = lat.inverse @ d
            if np.linalg.norm(d - lat.generators @ np.round(c)) <= assign_tol:
                counts[k] += 1
                hit = True
                break
        if not hit:
            reps.append(r)
            counts.append(1)
    order = np.argsort(-np.asarray(counts), kind="stable")
    reps = [reps[i] for i in order]
    counts = [counts[i] for i in order]
    kept = reps[: opts.max_cosets]
    explained = sum(counts[: opts.max_cosets])
    residual = 1.0 - explained / n_pts
    verdict = "crystal" if len(reps) <= opts.max_cosets and residual == 0.0 else (
        "non_crystal_evidence" if residual > 0.25 else "inconclusive"
    )
    shifts = make_crystal(lat, kept, tol=assign_tol).shifts if kept else ()
    return DetectionReport(
        verdict=verdict,
        lattice=lat,
        shifts=shifts,
        coverage_residual=residual,
        period_candidates_tested=tested,
        accepted_periods=tuple(tuple(v) for v in accepted),
    )


# ---------------------------------------------------------------------------
# exponential-polynomial weight recovery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpPolyFit:
    """Recovered weight structure: per (phase, coset) an ambient polynomial."""

    terms: tuple        # ((eta tuple, coset index, Poly), ...)
    residual: float
    roots_on_circle: bool
    multipliers: tuple  # per-direction root/multiplicity lists
    order_used: tuple   # recurrence order per direction


def _index_grid(crystal: Crystal, window, pts: np.ndarray) -> list[dict]:
    """Group points per coset as {integer index tuple: row number}."""
    lat = crystal.lattice
    per_coset = []
    tol = max(lat.membership_tol(), 1e-9)
    for q in crystal.shifts:
        c = (lat.inverse @ (pts - q).T).T
        k = np.round(c)
        on = np.linalg.norm((pts - q) - k @ lat.generators.T, axis=1) <= 10 * tol
        per_coset.append({tuple(int(v) for v in k[i]): i for i in np.nonzero(on)[0]})
    return per_coset


def _minimal_recurrence(seqs: list[np.ndarray], max_order: int, tol: float):
    """Smallest-order common annihilator of the 1D sequences (Hankel nullspace)."""
    scale = max(max((float(np.max(np.abs(s))) for s in seqs if len(s)), default=1.0), 1e-300)
    for order in range(1, max_order + 1):
        rows = []
        for s in seqs:
            m = len(s) - order
            for i in range(m):
                rows.append(s[i:i + order + 1])
        if len(rows) < order + 1:
            continue
        H = np.array(rows) / scale
        _, sv, vh = np.linalg.svd(H, full_matrices=True)
        if sv[0] == 0:
            continue
        smallest = sv[-1] if len(sv) >= H.shape[1] else 0.0
        if smallest / sv[0] < tol:
            return vh[-1].conj(), order
    raise RecurrenceNotFound(f"no recurrence of order <= {max_order} fits")


def _cluster_roots(roots: np.ndarray, tol: float = 1e-5) -> list[tuple[complex, int]]:
    used = np.zeros(len(roots), bool)
    out = []
    roots = sorted(roots, key=lambda r: (round(abs(r), 6), round(float(np.angle(r)), 6)))
    for i, r in enumerate(roots):
        if used[i]:
            continue
        group = [r]
        used[i] = True
        for jdx in range(i + 1, len(roots)):
            if not used[jdx] and abs(roots[jdx] - r) < tol * max(1.0, abs(r)):
                group.append(roots[jdx])
                used[jdx] = True
        out.append((complex(np.mean(group)), len(group)))
    return out


def fit_exp_poly(crystal: Crystal, window, weights, max_degree: int,
                 max_order: int | None = None, rec_tol: float = 1e-8,
                 prune_tol: float = 1e-7) -> ExpPolyFit:
    """Fit weights on crystal_points(crystal, window) as exponential polynomials.

    weights must align with the lexicographic order of crystal_points. The
    default recurrence budget is dim * cosets * (max_degree + 1).
    """
    pts = crystal_points(crystal, window)
    weights = np.asarray(weights, dtype=complex)
    if len(weights) != len(pts):
        raise InvalidParams("weights must align with crystal_points(crystal, window)")
    lat = crystal.lattice
    dim = lat.dim
    if max_order is None:
        max_order = dim * crystal.n_cosets * (max_degree + 1)

    grids = _index_grid(crystal, window, pts)

    # per-direction minimal recurrences over all lattice lines of all cosets
    per_dir: list[list[tuple[complex, int]]] = []
    orders: list[int] = []
    for axis in range(dim):
        seqs = []
        for grid in grids:
            lines: dict[tuple, list] = {}
            for k, row in grid.items():
                key = k[:axis] + k[axis + 1:]
                lines.setdefault(key, []).append((k[axis], row))
            for key, members in sorted(lines.items()):
                members.sort()
                ks = [m[0] for m in members]
                if len(ks) < 2:
                    continue
                if ks[-1] - ks[0] + 1 != len(ks):
                    # use the longest contiguous run
                    best_run, run = [], []
                    for kk, row in members:
                        if run and kk != run[-1][0] + 1:
                            if len(run) > len(best_run):
                                best_run = run
                            run = []
                        run.append((kk, row))
                    if len(run) > len(best_run):
                        best_run = run
                    members = best_run
                seqs.append(np.array([weights[row] for _, row in members]))
        min_needed = max_degree + 2
        if not seqs or max(len(s) for s in seqs) < min_needed:
            raise WindowTooSmall(
                f"need >= {min_needed} points per lattice line along direction {axis}"
            )
        coeffs, order = _minimal_recurrence(seqs, max_order, rec_tol)
        roots = np.roots(coeffs[::-1]) if order >= 1 else np.array([])
        per_dir.append(_cluster_roots(roots))
        orders.append(order)

    # candidate phases: cartesian product of per-direction roots
    cand_roots = [[]]
    for axis in range(dim):
        cand_roots = [c + [rm] for c in cand_roots for rm in per_dir[axis]]

    on_circle = all(
        abs(abs(mu) - 1.0) < 1e-6 for dirs in per_dir for mu, _ in dirs
    )

    # least-squares polynomial amplitudes per coset in index coordinates
    col_meta = []
    for combo in cand_roots:
        mus = np.array([mu for mu, _ in combo])
        caps = tuple(m - 1 for _, m in combo)
        for a in iter_box(caps):
            col_meta.append((tuple(mus), tuple(a), caps))

    terms = []
    worst_resid = 0.0
    for ci, grid in enumerate(grids):
        if not grid:
            continue
        ks = np.array(sorted(grid.keys()))
        rows = [grid[tuple(k)] for k in ks]
        w = weights[rows]
        design = np.zeros((len(ks), len(col_meta)), dtype=complex)
        for col, (mus, a, _) in enumerate(col_meta):
            vals = np.ones(len(ks), dtype=complex)
            for axis in range(dim):
                vals = vals * np.asarray(mus[axis], complex) ** ks[:, axis]
                if a[axis]:
                    vals = vals * ks[:, axis].astype(float) ** a[axis]
            design[:, col] = vals
        amps, _, rank, sv = np.linalg.lstsq(design, w, rcond=None)
        if rank < design.shape[1] and sv[0] / max(sv[-1], 1e-300) > 1e12:
            raise IllConditioned("amplitude design matrix is rank deficient")
        resid = float(np.max(np.abs(design @ amps - w))) if len(w) else 0.0
        worst_resid = max(worst_resid, resid)

        # collect per-(phase combo) polynomials in index coords, prune tiny
        scale = max(float(np.max(np.abs(w))), 1e-300)
        by_combo: dict[tuple, Poly] = {}
        for amp, (mus, a, _) in zip(amps, col_meta):
            if abs(amp) <= prune_tol * scale:
                continue
            p = by_combo.setdefault(mus, Poly(dim))
            p.coeffs[a] = p.coeffs.get(a, 0j) + amp
        q = crystal.shifts[ci]
        to_index = np.asarray(lat.inverse)
        offset = -to_index @ np.asarray(q)
        for mus, poly_k in sorted(by_combo.items(), key=lambda kv: tuple(np.angle(kv[0]))):
            if not poly_k:
                continue
            # eta from per-direction multipliers mu_i = exp(-J <eta, g_i>)
            v = np.array([(-np.angle(mu) / TAU) % 1.0 for mu in mus])
            eta = np.linalg.solve(lat.generators.T, v)
            _, eta = reduce_mod(lat.dual(), eta)
            poly_x = poly_k.compose_affine(to_index, offset)
            terms.append((tuple(eta), ci, poly_x))

    return ExpPolyFit(
        terms=tuple(terms),
        residual=worst_resid,
        roots_on_circle=on_circle,
        multipliers=tuple(tuple(d) for d in per_dir),
        order_used=tuple(orders),
    )


def to_poisson_comb(crystal: Crystal, fit: ExpPolyFit) -> PoissonComb:
    """Assemble the derivative-free Poisson comb from a unit-circle fit."""
    if not fit.roots_on_circle:
        raise RootsOffCircle("recurrence multipliers are off the unit circle")
    lat = crystal.lattice
    dim = lat.dim
    pc_terms = []
    for eta, ci, poly in fit.terms:
        op_terms = {}
        zero = (0,) * dim
        for a, c in poly.coeffs.items():
            op_terms[(a, zero)] = c
        if not op_terms:
            continue
        pc_terms.append(
            (np.array(eta, float), np.asarray(crystal.shifts[ci], float),
             PolyDiffOperator.from_terms(op_terms))
        )
    if not pc_terms:
        raise InvalidParams("fit has no surviving terms")
    return make_poisson_comb(lat, pc_terms)
