"""Configurations with closure rules and the energies I, B, H and G."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from . import engine
from .kernels import CouplingSpec, FieldSpec, residue_index, sigma
from .lattice import (Cube, Direction, QuotientLattice, SlabSpec, box_sites,
                      compare_level, offsets, site_keys)


# --- closures -----------------------------------------------------------

@dataclass(frozen=True)
class ExplicitConstant:
    value: int

    def __post_init__(self):
        if self.value not in (-1, 1):
            raise ValueError("constant closure must be +1 or -1")

    def values(self, sites):
        return np.full(len(sites), self.value, dtype=np.int8)

    def shifted(self, k):
        return self


@dataclass(frozen=True)
class PlanelikeBoundary:
    """+1 where the height is <= below, -1 where it is >= above."""

    omega: Direction
    below: Fraction
    above: Fraction

    def __post_init__(self):
        if not isinstance(self.omega, Direction):
            object.__setattr__(self, "omega", Direction(tuple(self.omega)))
        object.__setattr__(self, "below", Fraction(self.below))
        object.__setattr__(self, "above", Fraction(self.above))
        if self.above < self.below:
            raise ValueError("above level must not be below the below level")

    def values(self, sites):
        dots = self.omega.dot(sites)
        n1 = self.omega.norm_l1
        plus = compare_level(dots, n1, self.below) <= 0
        minus = compare_level(dots, n1, self.above) >= 0
        if np.any(~plus & ~minus):
            raise ValueError("site between the boundary levels is undetermined by the closure")
        return np.where(plus, 1, -1).astype(np.int8)

    def shifted(self, k):
        dh = Fraction(int(self.omega.dot(np.asarray(k))), self.omega.norm_l1)
        return PlanelikeBoundary(self.omega, self.below + dh, self.above + dh)


class PeriodicBoundary:
    """+1 below the slab, -1 above it, and L_{m,w}-periodic inside it."""

    def __init__(self, q: QuotientLattice, slab: SlabSpec, reps, spins):
        self.q = q
        self.slab = slab
        reps = np.asarray(reps, dtype=np.int64).reshape(-1, q.d)
        spins = np.asarray(spins, dtype=np.int8).reshape(-1)
        keys = site_keys(reps)
        order = np.argsort(keys, kind="stable")
        self.reps = reps[order]
        self.spins = spins[order]
        self.keys = keys[order]

    def __eq__(self, other):
        return (isinstance(other, PeriodicBoundary) and self.q == other.q and self.slab == other.slab
                and np.array_equal(self.keys, other.keys) and np.array_equal(self.spins, other.spins))

    def compatible(self, other) -> bool:
        return (isinstance(other, PeriodicBoundary) and self.q == other.q and self.slab == other.slab
                and np.array_equal(self.keys, other.keys))

    def values(self, sites):
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.q.d)
        dots = self.q.direction.dot(sites)
        n1 = self.q.direction.norm_l1
        out = np.where(compare_level(dots, n1, self.slab.A) < 0, 1, -1).astype(np.int8)
        inside = (compare_level(dots, n1, self.slab.A) >= 0) & (compare_level(dots, n1, self.slab.B) <= 0)
        if np.any(inside):
            rk = site_keys(self.q.representative(sites[inside]))
            pos = np.searchsorted(self.keys, rk)
            pos = np.minimum(pos, len(self.keys) - 1)
            if len(self.keys) == 0 or np.any(self.keys[pos] != rk):
                raise ValueError("representative missing from the periodic data")
            out[inside] = self.spins[pos]
        return out

    def shifted(self, k):
        k = np.asarray(k, dtype=np.int64)
        dh = Fraction(int(self.q.direction.dot(k)), self.q.direction.norm_l1)
        slab = self.slab.shifted(dh)
        return PeriodicBoundary(self.q, slab, self.q.representative(self.reps + k), self.spins)


# --- configurations -------------------------------------------------------

class Configuration:
    """Spins on a finite window plus a closure rule for every other site."""

    def __init__(self, sites, spins, closure):
        sites = np.asarray(sites, dtype=np.int64)
        spins = np.asarray(spins, dtype=np.int8).reshape(-1)
        d = closure_dim(closure, sites)
        sites = sites.reshape(-1, d)
        if len(sites) != len(spins):
            raise ValueError("one spin per window site is required")
        if np.any((spins != 1) & (spins != -1)):
            raise ValueError("spins must be +1 or -1")
        keys = site_keys(sites)
        order = np.argsort(keys, kind="stable")
        if len(keys) > 1 and np.any(np.diff(keys[order]) == 0):
            raise ValueError("duplicate window sites")
        self.sites = sites[order]
        self.spins = spins[order]
        self.keys = keys[order]
        self.closure = closure
        self.d = d

    # constructors
    @classmethod
    def from_grid(cls, lo, grid, closure):
        grid = np.asarray(grid)
        return cls(box_sites(lo, grid.shape), grid.reshape(-1), closure)

    @classmethod
    def constant(cls, value, d=2):
        return cls(np.zeros((0, d), dtype=np.int64), [], ExplicitConstant(value))

    @classmethod
    def periodic(cls, q: QuotientLattice, slab: SlabSpec, reps, spins):
        cl = PeriodicBoundary(q, slab, reps, spins)
        return cls(cl.reps, cl.spins, cl)

    @classmethod
    def half_space(cls, omega, level=0, window: Optional[Cube] = None, d=None):
        """+1 iff height <= level."""
        omega = omega if isinstance(omega, Direction) else Direction(tuple(omega))
        cl = PlanelikeBoundary(omega, level, level)
        if window is None:
            return cls(np.zeros((0, omega.d), dtype=np.int64), [], cl)
        s = window.sites()
        return cls(s, cl.values(s), cl)

    def value_at(self, sites) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.d)
        if len(self.keys) == 0:
            return self.closure.values(sites)
        qk = site_keys(sites)
        pos = np.minimum(np.searchsorted(self.keys, qk), len(self.keys) - 1)
        hit = self.keys[pos] == qk
        out = np.empty(len(sites), dtype=np.int8)
        out[hit] = self.spins[pos[hit]]
        if np.any(~hit):
            out[~hit] = self.closure.values(sites[~hit])
        return out

    def materialize(self, lo, shape) -> np.ndarray:
        return self.value_at(box_sites(lo, shape)).reshape(tuple(shape))

    def bbox(self):
        if len(self.sites) == 0:
            return None
        lo = self.sites.min(axis=0)
        hi = self.sites.max(axis=0)
        return lo, hi - lo + 1

    def shifted(self, k):
        k = np.asarray(k, dtype=np.int64)
        cl = self.closure.shifted(k)
        if isinstance(cl, PeriodicBoundary):
            return Configuration(cl.reps, cl.spins, cl)
        return Configuration(self.sites + k, self.spins, cl)

    def flipped(self, flips) -> "Configuration":
        """Copy with the given sites flipped (sites outside the window join it)."""
        flips = np.asarray(flips, dtype=np.int64).reshape(-1, self.d)
        if isinstance(self.closure, PeriodicBoundary):
            raise ValueError("flip periodic configurations through their representatives")
        fk = site_keys(flips)
        extra = flips[~np.isin(fk, self.keys)]
        sites = np.concatenate([self.sites, extra])
        spins = np.concatenate([self.spins, self.closure.values(extra)]) if len(extra) else self.spins.copy()
        new = Configuration(sites, spins, self.closure)
        pos = np.searchsorted(new.keys, fk)
        new.spins[pos] = -new.spins[pos]
        return new

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return (np.array_equal(self.keys, other.keys) and np.array_equal(self.spins, other.spins)
                and self.closure == other.closure)

    __hash__ = None


def closure_dim(closure, sites) -> int:
    if isinstance(closure, PlanelikeBoundary):
        return closure.omega.d
    if isinstance(closure, PeriodicBoundary):
        return closure.q.d
    sites = np.asarray(sites)
    if sites.ndim == 2:
        return sites.shape[1]
    raise ValueError("cannot infer the dimension of the configuration")


def _combine(u: Configuration, v: Configuration, op) -> Configuration:
    if not np.array_equal(u.keys, v.keys):
        raise ValueError("configurations live on different windows")
    if isinstance(u.closure, PeriodicBoundary):
        if not u.closure.compatible(v.closure):
            raise ValueError("incompatible periodic closures")
        return Configuration.periodic(u.closure.q, u.closure.slab, u.closure.reps,
                                      op(u.closure.spins, v.closure.spins))
    if u.closure != v.closure:
        raise ValueError("incompatible closures")
    return Configuration(u.sites, op(u.spins, v.spins), u.closure)


def min_config(u, v):
    return _combine(u, v, np.minimum)


def max_config(u, v):
    return _combine(u, v, np.maximum)


# --- site sets ------------------------------------------------------------

class Complement:
    """Z^d minus a finite set (None means all of Z^d)."""

    def __init__(self, inner=None):
        self.inner = inner


ALL = Complement(None)


def as_sites(S, d=None) -> np.ndarray:
    if isinstance(S, Cube):
        return S.sites()
    arr = np.asarray(S, dtype=np.int64)
    if arr.size == 0:
        return arr.reshape(0, d if d else 2)
    return arr.reshape(-1, arr.shape[-1])


def _mask(sites, lo, shape) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    if len(sites):
        idx = tuple((sites - np.asarray(lo)).T)
        m[idx] = True
    return m


def default_radius(spec: CouplingSpec) -> int:
    rho = max(8 * spec.period, 32)
    if spec.support is not None:
        rho = min(rho, spec.support + 1)
    return rho


@dataclass(frozen=True)
class EnergyReport:
    interaction: float
    magnetic: float
    total: float
    tail_bound: float
    pair_count: int

    def as_dict(self):
        return dict(interaction=self.interaction, magnetic=self.magnetic, total=self.total,
                    tail_bound=self.tail_bound, pair_count=self.pair_count)


def _tail(spec, rho, n):
    if spec.support is not None and spec.support < rho:
        return 0.0
    return 4.0 * n * sigma(spec, rho)


def _frame(sites, rho, extra=None):
    pts = sites if extra is None or len(extra) == 0 else np.concatenate([sites, extra])
    lo = pts.min(axis=0) - (rho - 1)
    hi = pts.max(axis=0) + (rho - 1)
    return lo, tuple(int(x) for x in hi - lo + 1)


def interaction_energy(u: Configuration, Gamma, Omega, spec: CouplingSpec, rho: Optional[int] = None,
                       report: bool = False):
    """I_{Gamma,Omega}(u) = sum_{i in Gamma, j in Omega} J_ij (1 - u_i u_j)."""
    G = as_sites(Gamma, u.d)
    if len(G) == 0:
        return EnergyReport(0.0, 0.0, 0.0, 0.0, 0) if report else 0.0
    rho = default_radius(spec) if rho is None else int(rho)
    if isinstance(Omega, Complement):
        lo, shape = _frame(G, rho)
        b = np.ones(shape, dtype=bool)
        if Omega.inner is not None:
            inner = as_sites(Omega.inner, u.d)
            inside = np.all((inner >= lo) & (inner < lo + np.asarray(shape)), axis=1)
            b &= ~_mask(inner[inside], lo, shape)
        tail = _tail(spec, rho, len(G))
    else:
        W = as_sites(Omega, u.d)
        if len(W) == 0:
            return EnergyReport(0.0, 0.0, 0.0, 0.0, 0) if report else 0.0
        span = np.concatenate([G, W])
        reach = int(np.max(span.max(axis=0) - span.min(axis=0))) + 1
        if spec.support is not None:
            reach = min(reach, spec.support + 1)
        rho = max(reach, 1)
        lo, shape = _frame(G, rho, W)
        b = _mask(W, lo, shape)
        tail = 0.0
    a = _mask(G, lo, shape)
    val = _cross(u, spec, rho, lo, shape, a, b)
    if report:
        return EnergyReport(val, 0.0, val, tail, len(G) * ((2 * rho - 1) ** u.d - 1))
    return val


def _cross(u, spec, rho, lo, shape, a, b):
    """sum_{i in a, j in b} J (1 - u_i u_j) = 2 [S(a+, b-) + S(a-, b+)]."""
    grid = u.materialize(lo, shape)
    plus = grid > 0
    T = spec.table(rho)
    p = spec.period
    s1 = engine.pair_sum(T, rho, lo, a & plus, b & ~plus, p)
    s2 = engine.pair_sum(T, rho, lo, a & ~plus, b & plus, p)
    return 2.0 * (s1 + s2)


def magnetic_energy(u: Configuration, Gamma, field: FieldSpec) -> float:
    G = as_sites(Gamma, u.d)
    if len(G) == 0 or field.is_zero:
        return 0.0
    return math.fsum((field.values(G) * u.value_at(G)).tolist())


def restricted_hamiltonian(u: Configuration, Gamma, spec: CouplingSpec, field: Optional[FieldSpec] = None,
                           rho: Optional[int] = None) -> EnergyReport:
    """H_Gamma = I_{Gamma,Gamma} + 2 I_{Gamma, Z^d minus Gamma} + B_Gamma."""
    G = as_sites(Gamma, u.d)
    if len(G) == 0:
        return EnergyReport(0.0, 0.0, 0.0, 0.0, 0)
    rho = default_radius(spec) if rho is None else int(rho)
    lo, shape = _frame(G, rho)
    a = _mask(G, lo, shape)
    grid = u.materialize(lo, shape)
    plus = grid > 0
    T = spec.table(rho)
    p = spec.period
    inner = 4.0 * engine.pair_sum(T, rho, lo, a & plus, a & ~plus, p)
    out = ~a
    cross = 2.0 * (engine.pair_sum(T, rho, lo, a & plus, out & ~plus, p)
                   + engine.pair_sum(T, rho, lo, a & ~plus, out & plus, p))
    inter = inner + 2.0 * cross
    mag = magnetic_energy(u, G, field) if field is not None else 0.0
    return EnergyReport(inter, mag, inter + mag, _tail(spec, rho, len(G)),
                        len(G) * ((2 * rho - 1) ** u.d - 1))


def energy_delta(u: Configuration, flips, Gamma, spec: CouplingSpec, field: Optional[FieldSpec] = None,
                 rho: Optional[int] = None) -> float:
    """H_Gamma(u') - H_Gamma(u) where u' flips the given sites of Gamma."""
    S = as_sites(flips, u.d)
    if len(S) == 0:
        return 0.0
    G = as_sites(Gamma, u.d)
    if not np.all(np.isin(site_keys(S), site_keys(G))):
        raise ValueError("flips must lie inside Gamma")
    rho = default_radius(spec) if rho is None else int(rho)
    lo, shape = _frame(S, rho)
    grid = u.materialize(lo, shape).astype(float)
    m = _mask(S, lo, shape)
    val = 4.0 * engine.pair_sum(spec.table(rho), rho, lo, np.where(m, grid, 0.0),
                                np.where(m, 0.0, grid), spec.period)
    if field is not None and not field.is_zero:
        val += -2.0 * math.fsum((field.values(S) * u.value_at(S)).tolist())
    return val


# --- periodic functional -----------------------------------------------------

def relevant_representatives(q: QuotientLattice, slab: SlabSpec, rho: int) -> np.ndarray:
    """Representatives whose rho-window can meet a disagreeing pair."""
    return q.fundamental_domain(SlabSpec(slab.A - rho, slab.B + rho))


def _check_admissible(u: Configuration, q, slab, reps):
    vals = u.value_at(reps)
    dots = q.direction.dot(reps)
    n1 = q.direction.norm_l1
    below = compare_level(dots, n1, slab.A) < 0
    above = compare_level(dots, n1, slab.B) > 0
    if np.any(vals[below] != 1) or np.any(vals[above] != -1):
        raise ValueError("configuration violates the slab boundary values")
    for g in q.generators:
        if np.any(u.value_at(reps + g) != vals):
            raise ValueError("configuration is not (m, omega)-periodic")
    return vals


def periodic_report(u: Configuration, q: QuotientLattice, slab: SlabSpec, spec: CouplingSpec,
                    field: Optional[FieldSpec] = None, rho: Optional[int] = None) -> EnergyReport:
    """G = I_{F, Z^d}(u) + B_{F^{A,B}}(u) over one fundamental domain."""
    rho = default_radius(spec) if rho is None else int(rho)
    reps = relevant_representatives(q, slab, rho)
    vals = _check_admissible(u, q, slab, reps)
    offs = offsets(q.d, rho)
    T = spec.table(rho)
    res = residue_index(reps, spec.period)
    live = np.nonzero(np.any(T != 0, axis=0))[0]
    live = live[np.any(offs[live] != 0, axis=1)]
    parts = []
    step = max(1, 2_000_000 // max(1, len(live)))
    for lo in range(0, len(reps), step):
        R = reps[lo:lo + step]
        nb = (R[:, None, :] + offs[live][None, :, :]).reshape(-1, q.d)
        uj = u.value_at(nb).reshape(len(R), len(live))
        ui = vals[lo:lo + step, None]
        w = T[res[lo:lo + step]][:, live]
        parts.append(float(np.sum(w * (1 - ui * uj))))
    inter = math.fsum(parts)
    free = q.fundamental_domain(slab)
    mag = magnetic_energy(u, free, field) if field is not None else 0.0
    n_free = len(free)
    return EnergyReport(inter, mag, inter + mag, _tail(spec, rho, n_free), len(reps) * len(live))


def periodic_functional(u: Configuration, q: QuotientLattice, slab: SlabSpec, spec: CouplingSpec,
                        field: Optional[FieldSpec] = None, rho: Optional[int] = None) -> float:
    return periodic_report(u, q, slab, spec, field, rho).total
