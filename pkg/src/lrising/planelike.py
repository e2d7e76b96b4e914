"""Planelike minimizers: interfaces, widths, monotonicity checks, the M search,
density and clean-ball scans, energy growth and the defect-kernel sweep."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage, special
from scipy.signal import fftconvolve

from .hamiltonian import (Configuration, PeriodicBoundary, as_sites, default_radius,
                          interaction_energy, restricted_hamiltonian)
from .kernels import AppendixB, CouplingSpec, FieldSpec, PowerLike, Truncated
from .lattice import Cube, Direction, QuotientLattice, SlabSpec, box_sites, site_keys
from .solver import minimal_minimizer, restricted_instance, solve_constrained



def _units(d):
    e = np.eye(d, dtype=np.int64)
    return np.concatenate([e, -e])


def _direction(omega) -> Direction:
    return omega if isinstance(omega, Direction) else Direction(tuple(omega))


def _window(u: Configuration, window=None) -> np.ndarray:
    if window is not None:
        return as_sites(window, u.d)
    if isinstance(u.closure, PeriodicBoundary):
        q, slab = u.closure.q, u.closure.slab
        return q.fundamental_domain(SlabSpec(slab.A - 1, slab.B + 1))
    return u.sites


# --- interface ------------------------------------------------------------

def interface(u: Configuration, window=None) -> np.ndarray:
    """Sites i with u_i = +1 and a nearest neighbour at -1 (neighbours via the closure)."""
    W = _window(u, window)
    if len(W) == 0:
        return W
    vals = u.value_at(W)
    plus = W[vals > 0]
    if len(plus) == 0:
        return plus
    hit = np.zeros(len(plus), dtype=bool)
    for e in _units(u.d):
        hit |= u.value_at(plus + e) < 0
    out = plus[hit]
    return out[np.argsort(site_keys(out), kind="stable")]


def interface_width(u: Configuration, omega, window=None):
    """(width, empty): spread of the l1-normalized heights over the interface."""
    w = _direction(omega)
    I = interface(u, window)
    if len(I) == 0:
        return 0.0, True
    dots = w.dot(I)
    return float(Fraction(int(dots.max() - dots.min()), w.norm_l1)), False


# --- monotonicity ---------------------------------------------------------

def default_shifts(d: int, tau: int, reach: int = 2) -> np.ndarray:
    r = range(-reach, reach + 1)
    return tau * np.array(list(itertools.product(r, repeat=d)), dtype=np.int64)


def birkhoff_check(u: Configuration, omega, tau: int, k_samples=None, window=None):
    """T_k u <= u when w.k <= 0 and T_k u >= u when w.k >= 0, on the window.

    Returns (ok, violations) with violations a list of (k, site, (T_k u)_i, u_i).
    """
    w = _direction(omega)
    ks = default_shifts(u.d, tau) if k_samples is None else np.asarray(k_samples, dtype=np.int64).reshape(-1, u.d)
    if np.any(ks % tau):
        raise ValueError("shifts must lie in tau Z^d")
    W = _window(u, window)
    base = u.value_at(W)
    bad = []
    for k in ks:
        shifted = u.value_at(W - k)  # (T_k u)_i = u_{i-k}
        wk = int(w.dot(k))
        viol = np.zeros(len(W), dtype=bool)
        if wk <= 0:
            viol |= shifted > base
        if wk >= 0:
            viol |= shifted < base
        for i in np.nonzero(viol)[0]:
            bad.append((tuple(int(x) for x in k), tuple(int(x) for x in W[i]), int(shifted[i]), int(base[i])))
    return len(bad) == 0, bad


def patterns_equal(u: Configuration, v: Configuration, sites) -> bool:
    sites = as_sites(sites, u.d)
    return bool(np.array_equal(u.value_at(sites), v.value_at(sites)))


def doubling_check(omega, tau: int, slab, spec: CouplingSpec, field: Optional[FieldSpec] = None,
                   m_list: Sequence[int] = (1, 2), rho: Optional[int] = None):
    """u_{m,w}^{A,B} = u_w^{A,B} as spin patterns for every m in m_list.

    Returns (ok, solutions) with solutions keyed by m.
    """
    slab = slab if isinstance(slab, SlabSpec) else SlabSpec(*slab)
    sols = {m: solve_constrained(omega, tau, m, slab, spec, field, rho) for m in sorted(set(m_list) | {1})}
    ref = sols[1].config
    ok = True
    for m, sol in sols.items():
        q = QuotientLattice.build(omega, tau, m)
        sites = q.fundamental_domain(SlabSpec(slab.A - tau, slab.B + tau))
        ok &= patterns_equal(sol.config, ref, sites)
    return ok, sols


# --- the M search ----------------------------------------------------------

@dataclass
class WidthReport:
    omega: Direction
    tau: int
    M_used: float
    width: float
    unconstrained: bool
    M_over_tau: float
    stable_next: bool = False
    config: Optional[Configuration] = dc_field(default=None, repr=False)
    history: list = dc_field(default_factory=list)

    def as_dict(self):
        return dict(omega=list(self.omega.omega), tau=self.tau, M_used=self.M_used, width=self.width,
                    unconstrained=self.unconstrained, M_over_tau=self.M_over_tau, stable_next=self.stable_next)


def check_mu(spec: CouplingSpec, field: Optional[FieldSpec], tau: int, d: int):
    if field is None:
        return
    mu0 = spec.lam * float(tau) ** (-d)
    if field.mu > mu0 * (1 + 1e-12):
        raise ValueError(f"mu exceeds lambda*tau^-d: mu = {field.mu:g} > mu0 = {mu0:g}")


def default_schedule(tau: int, steps: int = 7):
    return [tau * 2 ** k for k in range(steps)]


def unconstrained_search(omega, tau: int, spec: CouplingSpec, field: Optional[FieldSpec] = None,
                         M_schedule=None, m: int = 1, rho: Optional[int] = None) -> WidthReport:
    """First M in the schedule with u_w^M = u_w^{M+tau} on F[-tau, M+2tau]."""
    w = _direction(omega)
    check_mu(spec, field, tau, w.d)
    schedule = default_schedule(tau) if M_schedule is None else list(M_schedule)
    q = QuotientLattice.build(w, tau, m)
    cache = {}

    def solve(M):
        if M not in cache:
            cache[M] = solve_constrained(w, tau, m, SlabSpec(0, M), spec, field, rho).config
        return cache[M]

    history = []
    last = None
    for M in schedule:
        uM, uN = solve(M), solve(M + tau)
        common = q.fundamental_domain(SlabSpec(-tau, M + 2 * tau))
        same = patterns_equal(uM, uN, common)
        width, _ = interface_width(uM, w, q.fundamental_domain(SlabSpec(-1, M + 1)))
        history.append(dict(M=float(M), width=width, equal_next=same))
        last = (M, uM, width)
        if same:
            stable = patterns_equal(uM, solve(M + 2 * tau), q.fundamental_domain(SlabSpec(-tau, M + 3 * tau)))
            return WidthReport(w, tau, float(M), width, True, float(M) / tau, stable, uM, history)
    M, uM, width = last
    return WidthReport(w, tau, float(M), width, False, float(M) / tau, False, uM, history)


def translation_check(omega, tau: int, slab: SlabSpec, spec: CouplingSpec, k, field=None, rho=None) -> bool:
    """T_k u^{A,B} = u^{A + w.k/|w|, B + w.k/|w|} for k in tau Z^d."""
    w = _direction(omega)
    k = np.asarray(k, dtype=np.int64)
    if np.any(k % tau):
        raise ValueError("k must lie in tau Z^d")
    dh = Fraction(int(w.dot(k)), w.norm_l1)
    u = solve_constrained(w, tau, 1, slab, spec, field, rho).config
    v = solve_constrained(w, tau, 1, slab.shifted(dh), spec, field, rho).config
    q = QuotientLattice.build(w, tau, 1)
    sites = q.fundamental_domain(SlabSpec(slab.A + dh - tau, slab.B + dh + tau))
    return patterns_equal(u.shifted(k), v, sites)


# --- local statistics -----------------------------------------------------

@dataclass
class DensityReport:
    ell_values: list
    minority_counts: list
    fitted_cbar: float
    fitted_exponent: float

    def as_dict(self):
        return dict(ell_values=self.ell_values, minority_counts=self.minority_counts,
                    fitted_cbar=self.fitted_cbar, fitted_exponent=self.fitted_exponent)


def _on_interface(u: Configuration, q) -> np.ndarray:
    q = np.asarray(q, dtype=np.int64).reshape(-1)
    if u.value_at(q[None, :])[0] < 0 or not np.any(u.value_at(q[None, :] + _units(len(q))) < 0):
        raise ValueError("q is not on the interface of u")
    return q


def loglog_fit(x, y):
    """Least squares of log y = log c + e log x; returns (c, e, r2)."""
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    if len(x) < 3:
        raise ValueError("a fit needs at least 3 points")
    A = np.stack([np.ones_like(x), x], 1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss if ss > 0 else 1.0
    return float(math.exp(coef[0])), float(coef[1]), r2


def minority_count(u: Configuration, q, ell: int) -> int:
    vals = u.value_at(Cube(tuple(int(x) for x in q), ell).sites())
    plus = int(np.sum(vals > 0))
    return min(plus, len(vals) - plus)


def density_estimate(u: Configuration, q, ell_list) -> DensityReport:
    q = _on_interface(u, q)
    ells = [int(l) for l in ell_list]
    counts = [minority_count(u, q, l) for l in ells]
    pts = [(l, c) for l, c in zip(ells, counts) if l > 0 and c > 0]
    if len(pts) >= 3:
        c, e, _ = loglog_fit(*zip(*pts))
    else:
        c, e = float("nan"), float("nan")
    return DensityReport(ells, counts, c, e)


def clean_ball(u: Configuration, q, ell: int):
    """Largest monochromatic cubes Q_r(c) of each phase inside Q_ell(q).

    Returns (q_minus, q_plus, kappa) with kappa = (r + 1)/ell for the smaller
    of the two phase radii r; a cube of side 2r + 1 is monochromatic.
    """
    q = _on_interface(u, q)
    d = len(q)
    cube = Cube(tuple(int(x) for x in q), ell)
    shape = cube.shape
    vals = u.value_at(cube.sites()).reshape(shape)
    centers, radii = {}, {}
    for phase in (-1, 1):
        mono = np.pad(vals == phase, 1, constant_values=False)
        dist = ndimage.distance_transform_cdt(mono, metric="chessboard")
        dist = dist[(slice(1, -1),) * d]
        r = int(dist.max()) - 1
        if r < 0:
            centers[phase], radii[phase] = None, -1
            continue
        flat = int(np.argmax(dist))
        idx = np.array(np.unravel_index(flat, shape))
        centers[phase] = tuple(int(x) for x in np.asarray(cube.lo) + idx)
        radii[phase] = r
    r = min(radii.values())
    return centers[-1], centers[1], (r + 1) / ell


# --- isoperimetry ---------------------------------------------------------

def linf_full_sum(d: int, s: float) -> float:
    """sum_{k != 0} |k|_inf^{-d-s}, exact through zeta values."""
    total = 0.0
    for j in range(d):
        if (d - j) % 2 == 1:
            total += 2.0 * math.comb(d, j) * 2.0 ** j * float(special.zeta(d + s - j))
    return total


def isoperimetric_constant(d: int, s: float) -> float:
    return 2.0 ** (-s) / s


def isoperimetric_check(Gamma, d: int = 2, s: float = 0.5):
    """(lhs, rhs): lhs = sum_{i in Gamma, j outside} |i-j|_inf^{-d-s}, rhs = c |Gamma|^{(d-s)/d}.

    The sum is exact: the full lattice sum minus the self-correlation of Gamma.
    """
    G = as_sites(Gamma, d)
    if len(G) == 0:
        raise ValueError("Gamma must be nonempty")
    if len(G) > 10 ** 4:
        raise ValueError("Gamma is limited to 10^4 sites")
    G = np.unique(G, axis=0)
    n = len(G)
    lo = G.min(axis=0)
    shape = tuple(int(x) for x in G.max(axis=0) - lo + 1)
    ind = np.zeros(shape)
    ind[tuple((G - lo).T)] = 1.0
    corr = np.rint(fftconvolve(ind, ind[(slice(None, None, -1),) * d], mode="full"))
    grids = np.meshgrid(*[np.arange(-(n_ - 1), n_) for n_ in shape], indexing="ij")
    r = np.max(np.abs(np.stack(grids)), axis=0).astype(float)
    with np.errstate(divide="ignore"):
        f = np.where(r > 0, r ** (-(d + s)), 0.0)
    inner = math.fsum((corr * f)[corr > 0].tolist())
    lhs = n * linf_full_sum(d, s) - inner
    rhs = isoperimetric_constant(d, s) * n ** ((d - s) / d)
    return lhs, rhs


# --- energy growth --------------------------------------------------------

@dataclass
class GrowthReport:
    ell_values: list
    energies: list
    inner_energies: list
    slope: float
    lower_slope: float
    r2: float

    def as_dict(self):
        return dict(ell_values=self.ell_values, energies=self.energies, inner_energies=self.inner_energies,
                    slope=self.slope, lower_slope=self.lower_slope, r2=self.r2)


def energy_growth(omega, spec: CouplingSpec, field: Optional[FieldSpec] = None, ell_list=(8, 16, 32, 64),
                  q=None, solve_radius: int = 8, eval_radius: Optional[int] = None) -> GrowthReport:
    """Slope of log H_{Q_l(q)}(u) against log l for the minimizer u on Q_l(q)
    with half-space data outside, and the slope of I_{Q_l, Q_l}(u)."""
    w = _direction(omega)
    ells = sorted(int(l) for l in ell_list)
    if len(ells) < 3:
        raise ValueError("a fit needs at least 3 values of ell")
    outer = Configuration.half_space(w, 0)
    q = np.zeros(w.d, dtype=np.int64) if q is None else np.asarray(q, dtype=np.int64)
    rho_s = solve_radius if spec.support is None else min(solve_radius, spec.support + 1)
    H, I = [], []
    for ell in ells:
        cube = Cube(tuple(int(x) for x in q), ell)
        inst = restricted_instance(outer, cube, spec, field, rho=rho_s)
        u = minimal_minimizer(inst).config
        if not len(interface(u, cube.sites())):
            raise ValueError("the interface misses the cube")
        rho_e = eval_radius or max(default_radius(spec), 4 * ell)
        if spec.support is not None:
            rho_e = min(rho_e, spec.support + 1)
        H.append(restricted_hamiltonian(u, cube, spec, field, rho=rho_e).total)
        I.append(interaction_energy(u, cube, cube, spec))
    _, e, r2 = loglog_fit(ells, H)
    _, e_low, _ = loglog_fit(ells, I)
    return GrowthReport(ells, H, I, e, e_low, r2)


# --- defect kernel sweep --------------------------------------------------

@dataclass
class SweepReport:
    rows: list
    slope: float
    r2: float
    bounded_below: bool

    def as_dict(self):
        return dict(rows=self.rows, slope=self.slope, r2=self.r2, bounded_below=self.bounded_below)


def appendixB_sweep(tau_list, Lambda: float = 100.0, s: float = 0.5, omega=(1, 2),
                    truncation: Optional[int] = None, M_schedule=None, floor: float = 1 / 8,
                    mapper=map) -> SweepReport:
    """Width of the planelike minimizer for the defect kernel across tau.

    truncation defaults to tau (l1 radius); the slab search follows unconstrained_search.
    ``mapper`` runs the independent tau cells (e.g. an executor's map).
    """
    def cell(tau):
        spec = AppendixB(int(tau), float(Lambda), float(s))
        R = int(tau) if truncation is None else int(truncation)
        spec = Truncated(spec, R)
        sched = M_schedule(tau) if callable(M_schedule) else M_schedule
        rep = unconstrained_search(omega, int(tau), spec, None, sched)
        return dict(tau=int(tau), width=rep.width, width_over_tau=rep.width / tau,
                    M_used=rep.M_used, unconstrained=rep.unconstrained)

    rows = list(mapper(cell, list(tau_list)))
    taus = np.array([r["tau"] for r in rows], dtype=float)
    widths = np.array([r["width"] for r in rows])
    if len(rows) >= 2:
        slope, icpt = np.polyfit(taus, widths, 1)
        pred = slope * taus + icpt
        ss = float(np.sum((widths - widths.mean()) ** 2))
        r2 = 1.0 - float(np.sum((widths - pred) ** 2)) / ss if ss > 0 else 0.0
    else:
        slope, r2 = float("nan"), float("nan")
    bounded = all(r["width_over_tau"] >= floor for r in rows)
    return SweepReport(rows, float(slope), float(r2), bounded)
