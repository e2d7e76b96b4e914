"""Continuum side: pixel sets, L_K, Per_K, the energy K_K, coarea, extensions,
the Hamiltonian-perimeter identity and Gamma-convergence experiments.

Every continuum integral over a pair of cells Q_{eps/2}(eps i) x Q_{eps/2}(eps j)
equals eps^{d-s} J^(eps)_ij, so all sums below reuse the J^(eps) tables of
kernels.discretize.  Pairs are truncated at |i - j|_inf < rho, the same rule
the discrete Hamiltonian uses, and the omitted mass is bounded analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import engine
from .hamiltonian import Configuration, ExplicitConstant, default_radius, restricted_hamiltonian
from .kernels import ContinuumKernel, DiscretizedCoupling, discretize, residue_index
from .lattice import Cube, box_sites, offsets, site_keys

IDENTITY_RTOL = 1e-9


def _spec(K: ContinuumKernel, eps: float, levels: int = 3) -> DiscretizedCoupling:
    return _SPECS.setdefault((id(K), float(eps), levels), (K, discretize(K, eps, levels)))[1]


_SPECS: dict = {}


def default_outer(eps: float, Omega: Cube) -> int:
    """Outer radius in cells: eight times the cell diameter of Omega."""
    return int(8 * (2 * Omega.half_side + 1)) + 1


# --- pixel data -----------------------------------------------------------

class PiecewiseConstantFunction:
    """One value in [-1, 1] per cell on a box; other cells via ``outside``."""

    def __init__(self, eps: float, lo, values, outside=None, closure=None):
        values = np.asarray(values, dtype=float)
        if np.any(np.abs(values) > 1 + 1e-15):
            raise ValueError("values must lie in [-1, 1]")
        self.eps = float(eps)
        self.lo = np.asarray(lo, dtype=np.int64)
        self.values = values
        self.d = values.ndim
        self.closure = closure
        if outside is None:
            outside = 0.0
        if callable(outside):
            self._outside = outside
        else:
            c = float(outside)
            self._outside = lambda sites: np.full(len(sites), c)

    @property
    def shape(self):
        return self.values.shape

    def value_at(self, sites) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.d)
        rel = sites - self.lo
        inside = np.all((rel >= 0) & (rel < np.asarray(self.shape)), axis=1)
        out = np.empty(len(sites))
        if np.any(inside):
            out[inside] = self.values[tuple(rel[inside].T)]
        if np.any(~inside):
            out[~inside] = self._outside(sites[~inside])
        return out

    def materialize(self, lo, shape) -> np.ndarray:
        return self.value_at(box_sites(lo, shape)).reshape(tuple(shape))

    def levels(self, cells=None) -> np.ndarray:
        v = self.values.reshape(-1) if cells is None else self.value_at(cells)
        return np.unique(v)

    def to_configuration(self) -> Configuration:
        if not np.all(np.isin(self.values, (-1.0, 1.0))):
            raise ValueError("only +-1 functions come from configurations")
        closure = self.closure if self.closure is not None else ExplicitConstant(-1)
        return Configuration.from_grid(self.lo, self.values.astype(np.int8), closure)


class _Negated:
    def __init__(self, inner):
        self.inner = inner

    def values(self, sites):
        return (-self.inner.values(sites)).astype(np.int8)

    def shifted(self, k):
        return _Negated(self.inner.shifted(k))

    def __eq__(self, other):
        return isinstance(other, _Negated) and self.inner == other.inner


class PixelSet:
    """E = union of the closed cells {i : u_i = +1} at resolution eps."""

    def __init__(self, eps: float, config: Configuration):
        if not eps > 0:
            raise ValueError("resolution must be positive")
        self.eps = float(eps)
        self.config = config
        self.d = config.d

    @classmethod
    def from_cells(cls, eps, cells, d=2):
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, d)
        if len(cells) and len(np.unique(site_keys(cells))) != len(cells):
            raise ValueError("cells must be distinct")
        return cls(eps, Configuration(cells, np.ones(len(cells), dtype=np.int8), ExplicitConstant(-1)))

    @property
    def finite(self) -> bool:
        return isinstance(self.config.closure, ExplicitConstant) and self.config.closure.value == -1

    @property
    def cells(self) -> np.ndarray:
        """Cells of E inside the stored window (all of E when finite)."""
        return self.config.sites[self.config.spins > 0]

    def bbox(self):
        c = self.cells
        if len(c) == 0:
            return None
        return c.min(axis=0), c.max(axis=0)

    def contains(self, sites) -> np.ndarray:
        return self.config.value_at(sites) > 0

    def complement(self) -> "PixelSet":
        u = self.config
        return PixelSet(self.eps, Configuration(u.sites, -u.spins, _Negated(u.closure)))

    def indicator(self, window: Cube) -> PiecewiseConstantFunction:
        """chi_E - chi_{R^d minus E}."""
        vals = self.config.materialize(window.lo, window.shape).astype(float)
        u = self.config
        return PiecewiseConstantFunction(self.eps, window.lo, vals,
                                         lambda s: u.value_at(s).astype(float), closure=u.closure)


def extension(u: Configuration, eps: float, window: Optional[Cube] = None) -> PiecewiseConstantFunction:
    """The cellwise extension: the cell of site i carries u_i."""
    if window is None:
        bb = u.bbox()
        if bb is None:
            raise ValueError("a window is needed for a configuration without window sites")
        lo, shape = bb
    else:
        lo, shape = np.asarray(window.lo), window.shape
    vals = u.materialize(lo, shape).astype(float)
    return PiecewiseConstantFunction(eps, lo, vals, lambda s: u.value_at(s).astype(float), closure=u.closure)


def excursion_set(u: Configuration, eps: float) -> PixelSet:
    """E(u, eps) = {u-bar = 1}."""
    return PixelSet(eps, u)


# --- L_K and Per_K --------------------------------------------------------

def _cell_sum(A: np.ndarray, member: Callable, spec, rho: int) -> float:
    """sum_{i in A, 0 < |delta|_inf < rho, i + delta in B} J(i, i + delta)."""
    if len(A) == 0:
        return 0.0
    T = spec.table(rho)
    offs = offsets(A.shape[1], rho)
    live = np.nonzero(np.any(T != 0, axis=0))[0]
    live = live[np.any(offs[live] != 0, axis=1)]
    res = residue_index(A, spec.period)
    parts = []
    step = max(1, 2_000_000 // max(1, len(A)))
    for c0 in range(0, len(live), step):
        ks = live[c0:c0 + step]
        nb = (A[:, None, :] + offs[ks][None, :, :]).reshape(-1, A.shape[1])
        hit = member(nb).reshape(len(A), len(ks))
        parts.append(float(np.sum(T[res][:, ks] * hit)))
    return math.fsum(parts)


def _reach(A, B) -> int:
    pts = np.concatenate([A, B])
    return int(np.max(pts.max(axis=0) - pts.min(axis=0))) + 1


def L_K(A: PixelSet, B: PixelSet, K: ContinuumKernel, rho: Optional[int] = None, levels: int = 3) -> float:
    """int_A int_B K for cell-disjoint pixel sets; at least one must be finite."""
    if A.eps != B.eps:
        raise ValueError("pixel sets must share the resolution")
    if not A.finite and B.finite:
        A, B = B, A
    if not A.finite:
        raise ValueError("at least one pixel set must be finite")
    cells = A.cells
    if len(cells) == 0:
        return 0.0
    if np.any(B.contains(cells)):
        raise ValueError("pixel sets overlap")
    eps = A.eps
    spec = _spec(K, eps, levels)
    if rho is None:
        if not B.finite:
            raise ValueError("a truncation radius is required for an infinite set")
        Bc = B.cells
        if len(Bc) == 0:
            return 0.0
        rho = _reach(cells, Bc)
    return eps ** (K.d - K.s) * _cell_sum(cells, B.contains, spec, int(rho))


def _omega_membership(Omega: Cube):
    lo = np.asarray(Omega.lo)
    hi = lo + np.asarray(Omega.shape)

    def inside(sites):
        return np.all((sites >= lo) & (sites < hi), axis=1)

    return inside


@dataclass(frozen=True)
class PerimeterReport:
    perimeter: float
    terms: tuple
    quarter_energy: float
    tail_bound: float

    def as_dict(self):
        return dict(perimeter=self.perimeter, terms=list(self.terms), quarter_energy=self.quarter_energy,
                    tail_bound=self.tail_bound)


def Per_K(E: PixelSet, Omega: Cube, K: ContinuumKernel, rho: Optional[int] = None, levels: int = 3,
          report: bool = False):
    """K-perimeter of E in the union of the cells of Omega (three-term form).

    The value is cross-checked against K_energy(chi_E - chi_{E^c}; Omega)/4.
    """
    if Omega.d != E.d:
        raise ValueError("Omega and E have different dimensions")
    eps = E.eps
    rho = default_outer(eps, Omega) if rho is None else int(rho)
    spec = _spec(K, eps, levels)
    inside = _omega_membership(Omega)
    cells = Omega.sites()
    inE = E.contains(cells)
    EO, OE = cells[inE], cells[~inE]
    scale = eps ** (K.d - K.s)
    t1 = scale * _cell_sum(EO, lambda s: inside(s) & ~E.contains(s), spec, rho)
    t2 = scale * _cell_sum(EO, lambda s: ~inside(s) & ~E.contains(s), spec, rho)
    t3 = scale * _cell_sum(OE, lambda s: ~inside(s) & E.contains(s), spec, rho)
    per = math.fsum([t1, t2, t3])
    kr = K_energy(E.indicator(Omega), Omega, K, rho=rho, levels=levels, report=True)
    quarter = kr.total / 4.0
    if abs(per - quarter) > IDENTITY_RTOL * max(abs(per), 1e-300):
        raise AssertionError(f"Per_K = {per!r} differs from K_K/4 = {quarter!r}")
    if report:
        return PerimeterReport(per, (t1, t2, t3), quarter, kr.tail_bound / 4.0)
    return per


# --- the energy K_K -------------------------------------------------------

@dataclass(frozen=True)
class EnergyParts:
    inner: float   # K(u; Omega, Omega)
    outer: float   # K(u; Omega, R^d minus Omega), truncated
    total: float   # inner + 2 outer
    tail_bound: float
    rho: int

    def as_dict(self):
        return dict(inner=self.inner, outer=self.outer, total=self.total, tail_bound=self.tail_bound, rho=self.rho)


def _abs_pair_sums(vals, a_mask, b_mask, T, rho, lo, p):
    """sum_{i in a, j in b, 0 < |i-j|_inf < rho} J |u_i - u_j|, offset by offset."""
    d = vals.ndim
    offs = offsets(d, rho)
    rg = engine.residue_grid(lo, vals.shape, p) if p > 1 else None
    parts = []
    for k in np.nonzero(np.any(T != 0, axis=0))[0]:
        sa, sb = engine._slices(offs[k], vals.shape)
        if sa is None:
            continue
        w = np.abs(vals[sa] - vals[sb]) * (a_mask[sa] & b_mask[sb])
        if not w.any():
            continue
        coef = T[0, k] if p == 1 else T[rg[sa], k]
        parts.append(float(np.sum(coef * w)))
    return math.fsum(parts)


def _binary_pair_sums(vals, a_mask, b_mask, T, rho, lo, p):
    """Same sum for +-1 valued u through the bilinear engine."""
    plus = vals > 0
    s1 = engine.pair_sum(T, rho, lo, a_mask & plus, b_mask & ~plus, p)
    s2 = engine.pair_sum(T, rho, lo, a_mask & ~plus, b_mask & plus, p)
    return 2.0 * (s1 + s2)


def K_energy(u: PiecewiseConstantFunction, Omega: Cube, K: ContinuumKernel, rho: Optional[int] = None,
             levels: int = 3, method: str = "auto", report: bool = False):
    """K_K(u; Omega) = K(Omega, Omega) + 2 K(Omega, R^d minus Omega) over the cells of Omega."""
    eps = u.eps
    rho = default_outer(eps, Omega) if rho is None else int(rho)
    spec = _spec(K, eps, levels)
    T = spec.table(rho)
    lo = np.asarray(Omega.lo) - (rho - 1)
    shape = tuple(int(n) + 2 * (rho - 1) for n in Omega.shape)
    vals = u.materialize(lo, shape)
    a = np.zeros(shape, dtype=bool)
    a[tuple(slice(rho - 1, rho - 1 + n) for n in Omega.shape)] = True
    if method == "auto":
        method = "binary" if np.all(np.isin(vals, (-1.0, 1.0))) else "direct"
    fn = _binary_pair_sums if method == "binary" else _abs_pair_sums
    scale = eps ** (K.d - K.s)
    inner = scale * fn(vals, a, a, T, rho, lo, spec.period)
    outer = scale * fn(vals, a, ~a, T, rho, lo, spec.period)
    total = inner + 2.0 * outer
    # omitted pairs are at Euclidean distance >= (rho - 1) eps; |u(x) - u(y)| <= 2
    vol = (eps * (2 * Omega.half_side + 1)) ** K.d
    tail = 4.0 * vol * K.sphere_tail((rho - 1) * eps) if rho > 1 else math.inf
    if report:
        return EnergyParts(inner, outer, total, tail, rho)
    return total


def K_energy_pair(u: PiecewiseConstantFunction, A, B, K: ContinuumKernel, levels: int = 3,
                  method: str = "direct") -> float:
    """K_K(u; A, B) for finite cell sets A and B (no truncation)."""
    A = A.sites() if isinstance(A, Cube) else np.asarray(A, dtype=np.int64).reshape(-1, u.d)
    B = B.sites() if isinstance(B, Cube) else np.asarray(B, dtype=np.int64).reshape(-1, u.d)
    if len(A) == 0 or len(B) == 0:
        return 0.0
    rho = _reach(A, B)
    spec = _spec(K, u.eps, levels)
    T = spec.table(rho)
    pts = np.concatenate([A, B])
    lo = pts.min(axis=0)
    shape = tuple(int(x) for x in pts.max(axis=0) - lo + 1)
    vals = u.materialize(lo, shape)
    am = np.zeros(shape, dtype=bool)
    bm = np.zeros(shape, dtype=bool)
    am[tuple((A - lo).T)] = True
    bm[tuple((B - lo).T)] = True
    fn = _binary_pair_sums if method == "binary" else _abs_pair_sums
    return u.eps ** (K.d - K.s) * fn(vals, am, bm, T, rho, lo, spec.period)


def coarea_check(u: PiecewiseConstantFunction, Omega: Cube, K: ContinuumKernel, levels: int = 3):
    """(lhs, rhs) with lhs = K(u; Omega, Omega) and
    rhs = sum_j (t_{j+1} - t_j) K(chi_{u > t_j}; Omega, Omega)."""
    cells = Omega.sites()
    t = u.levels(cells)
    if not np.all(np.isfinite(t)):
        raise ValueError("values must be finite")
    lhs = K_energy_pair(u, Omega, Omega, K, levels, method="direct")
    parts = []
    for j in range(len(t) - 1):
        chi = PiecewiseConstantFunction(u.eps, u.lo, (u.values > t[j]).astype(float),
                                        lambda s, tj=t[j]: (u.value_at(s) > tj).astype(float))
        e = _chi_energy(chi, Omega, K, levels)
        parts.append((t[j + 1] - t[j]) * e)
    rhs = math.fsum(parts)
    if abs(lhs - rhs) > IDENTITY_RTOL * max(lhs, 1e-300):
        raise AssertionError(f"coarea identity fails: {lhs!r} vs {rhs!r}")
    return lhs, rhs


def _chi_energy(chi, Omega, K, levels):
    """K(chi; Omega, Omega) for a 0/1 function: 2 S(chi, 1 - chi) via the engine."""
    cells = Omega.sites()
    rho = _reach(cells, cells)
    spec = _spec(K, chi.eps, levels)
    T = spec.table(rho)
    lo = np.asarray(Omega.lo)
    vals = chi.materialize(lo, Omega.shape)
    one = vals > 0.5
    return chi.eps ** (K.d - K.s) * 2.0 * engine.pair_sum(T, rho, lo, one, ~one, spec.period)


# --- the bridge to the lattice -------------------------------------------

@dataclass(frozen=True)
class IdentityReport:
    lhs: float
    rhs: float
    gap: float
    perimeter: float
    factor4_gap: float

    def as_dict(self):
        return dict(lhs=self.lhs, rhs=self.rhs, gap=self.gap, perimeter=self.perimeter, factor4_gap=self.factor4_gap)


def hamiltonian_perimeter_identity(u: Configuration, eps: float, ell: int, K: ContinuumKernel,
                                   R: Optional[float] = None, rho: Optional[int] = None,
                                   levels: int = 3) -> IdentityReport:
    """eps^{d-s} H^(eps)_{Q_ell}(u) against K_K(u-bar; Q_R), R = (ell + 1/2) eps,
    plus Per_K(E(u, eps); Q_R) against eps^{d-s} H / 4."""
    if R is not None and abs(R - (ell + 0.5) * eps) > 1e-12 * max(1.0, abs(R)):
        raise ValueError(f"R must equal (ell + 1/2) eps = {(ell + 0.5) * eps!r}")
    spec = _spec(K, eps, levels)
    Omega = Cube(tuple([0] * u.d), int(ell))
    rho = default_radius(spec) if rho is None else int(rho)
    H = restricted_hamiltonian(u, Omega, spec, None, rho=rho).total
    lhs = eps ** (K.d - K.s) * H
    rhs = K_energy(extension(u, eps, Omega), Omega, K, rho=rho, levels=levels, method="direct")
    per = Per_K(excursion_set(u, eps), Omega, K, rho=rho, levels=levels)
    return IdentityReport(lhs, rhs, abs(lhs - rhs), per, abs(per - lhs / 4.0))


# --- recovery sequences and the Gamma experiment ------------------------

def _sample_offsets(n: int, d: int, eps: float) -> np.ndarray:
    """n^d points per cell on a grid that includes the cell faces (symmetric)."""
    k = (np.arange(n) - (n - 1) / 2.0) / (n - 1) if n > 1 else np.zeros(1)
    grids = np.meshgrid(*([k * eps] * d), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def _inf_values(pred, sites, eps, n):
    offs = _sample_offsets(n, sites.shape[1], eps)
    out = np.empty(len(sites))
    step = max(1, 1_000_000 // len(offs))
    for c0 in range(0, len(sites), step):
        X = eps * sites[c0:c0 + step, None, :].astype(float) + offs[None, :, :]
        ok = np.asarray(pred(X), dtype=bool)
        out[c0:c0 + step] = np.where(ok.all(axis=1), 1.0, -1.0)
    return out


def _center_values(pred, sites, eps):
    X = eps * sites.astype(float)
    return np.where(np.asarray(pred(X), dtype=bool), 1.0, -1.0)


def pixelize_inf(pred: Callable, eps: float, window: Cube, samples: int = 8) -> PiecewiseConstantFunction:
    """Cell value -1 as soon as one sample of the closed cell leaves E, else +1."""
    sites = window.sites()
    vals = _inf_values(pred, sites, eps, samples).reshape(window.shape)
    return PiecewiseConstantFunction(eps, window.lo, vals, lambda s: _inf_values(pred, s, eps, samples))


def pixelize_center(pred: Callable, eps: float, window: Cube) -> PiecewiseConstantFunction:
    vals = _center_values(pred, window.sites(), eps).reshape(window.shape)
    return PiecewiseConstantFunction(eps, window.lo, vals, lambda s: _center_values(pred, s, eps))


def symmetric_difference(u: PiecewiseConstantFunction, pred: Callable, Omega: Cube, samples: int = 16) -> float:
    """|{u = 1} symmetric-difference E| inside the cells of Omega (midpoint sampling)."""
    eps = u.eps
    n = samples
    k = (np.arange(n) + 0.5) / n - 0.5
    grids = np.meshgrid(*([k * eps] * u.d), indexing="ij")
    offs = np.stack([g.reshape(-1) for g in grids], axis=1)
    sites = Omega.sites()
    vals = u.value_at(sites) > 0
    parts = []
    step = max(1, 1_000_000 // len(offs))
    for c0 in range(0, len(sites), step):
        X = eps * sites[c0:c0 + step, None, :].astype(float) + offs[None, :, :]
        inE = np.asarray(pred(X), dtype=bool)
        parts.append(float(np.sum(inE != vals[c0:c0 + step, None])))
    return math.fsum(parts) * eps ** u.d / len(offs)


def half_plane(x):
    return x[..., -1] < 0


def disk(radius=0.5, center=None):
    def pred(x):
        c = np.zeros(x.shape[-1]) if center is None else np.asarray(center, dtype=float)
        z = x - c
        return np.sum(z * z, axis=-1) < radius * radius
    return pred


def square(half=0.5):
    def pred(x):
        return np.all(np.abs(x) < half, axis=-1)
    return pred


def omega_cells(R0: float, eps: float, d: int) -> Cube:
    """Cells meeting the open cube (-R0, R0)^d."""
    ell = int(math.ceil(R0 / eps + 0.5 - 1e-12)) - 1
    return Cube(tuple([0] * d), max(ell, 0))


@dataclass
class GammaRow:
    name: str
    eps: float
    energy: float
    symdiff: float
    symdiff_fraction: float
    reference: float
    relative_gap: float
    tail_bound: float

    def as_dict(self):
        return dict(name=self.name, eps=self.eps, energy=self.energy, symdiff=self.symdiff,
                    symdiff_fraction=self.symdiff_fraction, reference=self.reference,
                    relative_gap=self.relative_gap, tail_bound=self.tail_bound)


def gamma_energy(u: PiecewiseConstantFunction, Omega: Cube, K: ContinuumKernel, outer: float, levels: int = 3):
    rho = int(math.ceil(outer / u.eps)) + 1
    return K_energy(u, Omega, K, rho=rho, levels=levels, method="binary", report=True)


def gamma_experiment(sets: dict, eps_schedule, K: ContinuumKernel, R0: float = 1.0, outer: float = 2.0,
                     ref_eps: Optional[float] = None, samples: int = 8, levels: int = 3) -> list:
    """G^(eps)(u_eps; Omega_eps) for the infimum pixelization of each test set.

    Omega_eps is the union of cells meeting (-R0, R0)^d; pairs are kept up to
    l_inf distance ``outer``.  The reference is the center pixelization at
    ref_eps (default half the finest eps).
    """
    eps_list = [float(e) for e in eps_schedule]
    ref_eps = min(eps_list) / 2 if ref_eps is None else float(ref_eps)
    rows = []
    for name, pred in sets.items():
        Om = omega_cells(R0, ref_eps, K.d)
        frame = Cube(Om.center, Om.half_side)
        ref = gamma_energy(pixelize_center(pred, ref_eps, frame), Om, K, outer, levels).total
        for eps in eps_list:
            Om = omega_cells(R0, eps, K.d)
            u = pixelize_inf(pred, eps, Om, samples)
            e = gamma_energy(u, Om, K, outer, levels)
            sd = symmetric_difference(u, pred, Om)
            vol = (eps * (2 * Om.half_side + 1)) ** K.d
            rows.append(GammaRow(name, eps, e.total, sd, sd / vol, ref, abs(e.total - ref) / ref, e.tail_bound))
    return rows
