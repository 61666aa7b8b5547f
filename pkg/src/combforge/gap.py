"""Spectral coefficient extraction on dual-space crystals.

A probe targets one coset shift of a crystal in dual space. Its test function
vanishes to the probe order at every other crystal point (exactly, through
the snapped sine factors), carries a prescribed Taylor jet at the target, and
has a Fourier transform supported in a computable budget region: a scaled
dual cube plus the window's spectral radius. Pairing a dual comb against the
probe therefore reads off a single weight coefficient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._mindex import iter_total, mi_degree, mi_factorial, mi_zero
from .comb import WeightedComb, evaluate
from .errors import GridTooCoarse, InvalidParams, OrderTooLow, SupportMismatch
from .lattice import Crystal, Region, crystal_points, lattice_distance
from .testfun import GaussianPacket, TestFunction, make_psi_k

# window sizing: Gaussian whose transform holds all but ~2e-9 of its mass
# inside B(rho) (argument sqrt(18) in the per-axis erfc bound)
_WINDOW_SHAPE = 18.0


def spectral_window(dim: int, rho: float, max_order: int = 16) -> GaussianPacket:
    """Gaussian window whose transform is concentrated in the ball B(rho)."""
    if rho <= 0:
        raise InvalidParams("rho must be positive")
    width = 2.0 * math.pi * rho * rho / _WINDOW_SHAPE
    return GaussianPacket(dim, width=width, max_order=max_order)


@dataclass(frozen=True)
class GapProbe:
    """Probe for one coset of a dual-space crystal."""

    crystal: Crystal
    target: int
    order: int
    rho: float
    window: TestFunction
    psi: TestFunction
    support_budget: Region

    @classmethod
    def build(cls, crystal: Crystal, target: int, order: int, rho: float,
              window: TestFunction | None = None) -> "GapProbe":
        """Assemble the probe.

        The support budget is the dual cube {x: |<g_i, x>| <= (order+1) K / 2}
        over the crystal's lattice generators g_i, inflated by rho; the sine
        and sinc factors place the transform exactly on that set, so the
        budget is tight up to the window's spectral tail.
        """
        if window is None:
            window = spectral_window(crystal.dim, rho, max_order=max(order, 2) + 2)
        dual_gens = crystal.lattice.dual().generators
        psi = make_psi_k(dual_gens, crystal.shifts, target, order, window)
        budget = Region.dual_cube(
            crystal.lattice.generators.T,
            scale=(order + 1) * crystal.n_cosets / 2.0,
            pad=rho,
        )
        return cls(crystal=crystal, target=target, order=order, rho=rho,
                   window=window, psi=psi, support_budget=budget)

    def variant(self, jet) -> TestFunction:
        """Probe whose Taylor jet at the target is the monomial (xi-eta)^jet."""
        dual_gens = self.crystal.lattice.dual().generators
        return make_psi_k(dual_gens, self.crystal.shifts, self.target,
                          self.order, self.window, target_jet=tuple(jet))


@dataclass(frozen=True)
class VanishingReport:
    passed: bool
    points_checked: int
    max_offtarget_abs: float
    target_value_error: float
    max_target_deriv: float


def verify_vanishing(probe: GapProbe, test_window: Region) -> VanishingReport:
    """Check the probe's derivative pattern on every crystal point in the window.

    Off-target points must give exact floating zeros for all derivatives up to
    the probe order (the sine factors are evaluated with integer snapping);
    the target must give value 1 to 1e-12 with derivatives 1..order below 1e-9.
    """
    pts = crystal_points(probe.crystal, test_window)
    eta = np.asarray(probe.crystal.shifts[probe.target], dtype=float)
    dim = probe.crystal.dim
    max_off = 0.0
    val_err = 0.0
    max_tgt = 0.0
    n_checked = 0
    for sigma in pts:
        is_target = bool(np.linalg.norm(sigma - eta) < 1e-9)
        n_checked += 1
        for b in iter_total(dim, probe.order):
            v = probe.psi.deriv(b, sigma)
            if is_target:
                if mi_degree(b) == 0:
                    val_err = max(val_err, abs(v - 1.0))
                else:
                    max_tgt = max(max_tgt, abs(v))
            else:
                max_off = max(max_off, abs(v))
    passed = max_off == 0.0 and val_err <= 1e-12 and max_tgt <= 1e-9
    return VanishingReport(
        passed=passed,
        points_checked=n_checked,
        max_offtarget_abs=max_off,
        target_value_error=val_err,
        max_target_deriv=max_tgt,
    )


@dataclass(frozen=True)
class SupportReport:
    passed: bool
    outside_energy_fraction: float
    quadrature_error_bound: float
    grid_shape: tuple
    x_step: float


def verify_support(probe: GapProbe, grid_extent: float, grid_step: float,
                   budget: Region | None = None,
                   energy_tol: float = 1e-6) -> SupportReport:
    """Fraction of the transform's L2 energy outside the budget region.

    The transform of the probe is approximated on a regular grid via the FFT
    of dense samples; the grid must resolve rho (step < rho/4). The reported
    quadrature bound covers the sampled function's mass beyond the sampling
    box.
    """
    if grid_step >= probe.rho / 4.0:
        raise GridTooCoarse(f"grid step {grid_step} must be < rho/4 = {probe.rho / 4.0}")
    if budget is None:
        budget = probe.support_budget
    dim = probe.crystal.dim

    # sampling extent: window decay scale plus generous slack
    window_width = getattr(probe.window, "width", 2 * math.pi * probe.rho ** 2 / _WINDOW_SHAPE)
    sigma_xi = 1.0 / math.sqrt(2.0 * math.pi * window_width)
    shifts = np.array(probe.crystal.shifts)
    xi_extent = 10.0 * sigma_xi + float(np.max(np.abs(shifts))) + 2.0
    delta = min(1.0 / (2.0 * grid_extent), 0.125)
    n_cover = xi_extent * 2.0 / delta
    n_step = 1.0 / (grid_step * delta)
    n_fft = 1 << max(int(math.ceil(math.log2(max(n_cover, n_step)))), 4)

    axis = (np.arange(n_fft) - n_fft // 2) * delta
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    vals = probe.psi.values(pts).reshape([n_fft] * dim)

    edge_mass = float(np.max(np.abs(vals[0]))) if dim == 1 else float(
        np.max(np.abs(np.take(vals, 0, axis=0)))
    )

    # F(psi)(x) = sum delta^n psi(xi_g) exp(-2 pi i <xi_g, x>) on the fft grid
    spec = np.fft.fftn(np.fft.ifftshift(vals)) * (delta ** dim)
    freqs = np.fft.fftfreq(n_fft, d=delta)
    xs = np.fft.fftshift(freqs)
    spec = np.fft.fftshift(spec)
    xgrids = np.meshgrid(*([xs] * dim), indexing="ij")
    xpts = np.stack([g.ravel() for g in xgrids], axis=1)
    energy = np.abs(spec.ravel()) ** 2

    total = float(np.sum(energy))
    inside = budget.contains(xpts)
    outside = float(np.sum(energy[~inside]))
    fraction = outside / total if total > 0 else 0.0
    quad_bound = edge_mass * (2 * xi_extent) ** dim / max(total, 1e-300)
    return SupportReport(
        passed=fraction < energy_tol + quad_bound,
        outside_energy_fraction=fraction,
        quadrature_error_bound=quad_bound,
        grid_shape=(n_fft,) * dim,
        x_step=float(xs[1] - xs[0]),
    )


def extract_coefficient(t_hat: WeightedComb, probe: GapProbe, index=None) -> complex:
    """Read one weight coefficient of a dual comb supported on the probe crystal.

    With the default index the result is the order-0 coefficient at the target
    shift; a derivative multi-index extracts that operator coefficient through
    the monomial-jet probe variant (the higher-coefficient extraction trick).
    """
    dim = probe.crystal.dim
    index = mi_zero(dim) if index is None else tuple(index)
    if mi_degree(index) > probe.order:
        raise OrderTooLow("requested coefficient order exceeds probe order")
    if t_hat.order > probe.order:
        raise OrderTooLow("comb order exceeds probe order")
    lat = probe.crystal.lattice
    tol = max(lat.membership_tol(), 1e-9)
    for p, _ in t_hat.entries:
        ok = any(
            lattice_distance(lat, p - np.asarray(q)) <= tol
            for q in probe.crystal.shifts
        )
        if not ok:
            raise SupportMismatch(f"comb point {tuple(p)} is off the probe crystal")
    psi = probe.psi if mi_degree(index) == 0 else probe.variant(index)
    raw = evaluate(t_hat, psi)
    return raw * (-1) ** mi_degree(index) / mi_factorial(index)
