"""Interaction coefficients, periodic fields, tail functions and the
continuum kernel with its cell discretization."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.special import beta as beta_fn

from . import quadrature
from .lattice import offsets


def residue_index(sites: np.ndarray, p: int) -> np.ndarray:
    """Flat index of i mod p in [0,p)^d (C order)."""
    sites = np.asarray(sites, dtype=np.int64)
    r = np.mod(sites, p)
    idx = np.zeros(r.shape[:-1], dtype=np.int64)
    for n in range(r.shape[-1]):
        idx = idx * p + r[..., n]
    return idx


def residues(d: int, p: int) -> np.ndarray:
    return np.array(list(itertools.product(range(p), repeat=d)), dtype=np.int64).reshape(-1, d)


def _l1(delta: np.ndarray) -> np.ndarray:
    return np.abs(delta).sum(axis=-1)


def _power(delta: np.ndarray, q: float) -> np.ndarray:
    n = _l1(delta).astype(float)
    out = np.zeros(n.shape)
    nz = n > 0
    out[nz] = n[nz] ** (-q)
    return out


class CouplingSpec:
    """Common interface of the coupling variants.

    values(i, delta) gives J(i, i + delta) for broadcastable integer arrays.
    Every variant is ``period``-periodic, symmetric and vanishes at delta = 0.
    """

    d: int
    s: float

    @property
    def period(self) -> int:
        return 1

    lam: float  # ferromagnetic floor (lower power constant)
    exact_window = 0  # extra shells summed exactly in sigma before the far bound

    @property
    def upper_power_constant(self) -> float:
        raise NotImplementedError

    @property
    def support(self) -> Optional[int]:
        """l_inf radius outside of which J vanishes, or None."""
        return None

    @property
    def far_start(self) -> int:
        return 1

    @property
    def far_coefficient(self) -> float:
        """J(i, i+delta) <= far_coefficient |delta|_1^{-d-s} once |delta|_inf >= far_start."""
        return self.upper_power_constant

    def values(self, i, delta) -> np.ndarray:
        raise NotImplementedError

    def coupling(self, i, j) -> float:
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        return float(self.values(i, j - i))

    def table(self, rho: int) -> np.ndarray:
        """T[r, k] = J(r, r + offsets(d, rho)[k]) for residues r of [0, p)^d."""
        return _table(self, rho)

    @property
    def row_sum_bound(self) -> float:
        return sigma(self, 1)


@lru_cache(maxsize=64)
def _table(spec: CouplingSpec, rho: int) -> np.ndarray:
    offs = offsets(spec.d, rho)
    res = residues(spec.d, spec.period)
    T = spec.values(res[:, None, :], offs[None, :, :])
    T = np.ascontiguousarray(T, dtype=float)
    T.setflags(write=False)
    return T


@dataclass(frozen=True, eq=True)
class PowerLike(CouplingSpec):
    lam: float
    Lambda: float
    s: float
    d: int = 2

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise ValueError("s must lie in (0, 1)")
        if not 0 < self.lam <= self.Lambda:
            raise ValueError("need 0 < lambda <= Lambda")

    @property
    def upper_power_constant(self):
        return self.Lambda

    @property
    def far_coefficient(self):
        return self.lam

    def values(self, i, delta):
        delta = np.asarray(delta)
        return self.lam * _power(delta, self.d + self.s)


@dataclass(frozen=True, eq=True)
class Truncated(CouplingSpec):
    base: CouplingSpec
    R: int

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("truncation radius must be positive")

    @property
    def d(self):
        return self.base.d

    @property
    def s(self):
        return self.base.s

    @property
    def period(self):
        return self.base.period

    @property
    def lam(self):
        return self.base.lam

    @property
    def upper_power_constant(self):
        return self.base.upper_power_constant

    @property
    def support(self):
        # |delta|_1 <= R implies |delta|_inf <= R
        inner = self.base.support
        return self.R if inner is None else min(self.R, inner)

    @property
    def far_coefficient(self):
        return 0.0

    @property
    def far_start(self):
        return self.R + 1

    def values(self, i, delta):
        delta = np.asarray(delta)
        v = self.base.values(i, delta)
        return np.where(_l1(delta) <= self.R, v, 0.0)


@dataclass(frozen=True, eq=True)
class PeriodicTable(CouplingSpec):
    """J = c[r(i), r(j)] |i - j|_1^{-d-s} with a symmetric coset table c."""

    tau: int
    coeffs: tuple
    s: float
    d: int = 2

    exact_window = 16

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        n = self.tau ** self.d
        if c.shape != (n, n):
            raise ValueError(f"coefficient table must be {n}x{n}")
        if not np.array_equal(c, c.T):
            raise ValueError("coefficient table must be symmetric")
        if np.any(c <= 0):
            raise ValueError("coefficients must be positive")
        if not 0 < self.s < 1:
            raise ValueError("s must lie in (0, 1)")
        object.__setattr__(self, "coeffs", tuple(tuple(float(x) for x in row) for row in c))

    @classmethod
    def random(cls, tau, s, lam, Lam, rng, d=2):
        n = tau ** d
        c = rng.uniform(lam, Lam, size=(n, n))
        c = np.triu(c) + np.triu(c, 1).T
        return cls(tau, tuple(map(tuple, c)), s, d)

    @property
    def period(self):
        return self.tau

    @property
    def lam(self):
        return float(np.min(self.coeffs))

    @property
    def upper_power_constant(self):
        return float(np.max(self.coeffs))

    def values(self, i, delta):
        i = np.asarray(i, dtype=np.int64)
        delta = np.asarray(delta, dtype=np.int64)
        c = np.asarray(self.coeffs)
        ri = residue_index(i, self.tau)
        rj = residue_index(i + delta, self.tau)
        return c[ri, rj] * _power(delta, self.d + self.s)


@dataclass(frozen=True, eq=True)
class AppendixB(CouplingSpec):
    """Homogeneous |i-j|^{-2-s} coupling with strong defects of strength Lambda
    inside the centred blocks Q = {|c|_inf <= (tau-1)/4} + tau Z^2."""

    tau: int
    Lambda: float
    s: float

    def __post_init__(self):
        if self.tau < 5 or self.tau % 4 != 1:
            raise ValueError("tau must be of the form 4k+1 with k >= 1")
        if self.Lambda < 1:
            raise ValueError("Lambda must be at least 1")
        if not 0 < self.s < 1:
            raise ValueError("s must lie in (0, 1)")

    d = 2

    @property
    def period(self):
        return self.tau

    @property
    def lam(self):
        return 1.0

    @property
    def upper_power_constant(self):
        return float(self.Lambda)

    @property
    def far_start(self):
        return self.tau

    @property
    def far_coefficient(self):
        return 1.0

    def block(self, sites) -> np.ndarray:
        """Block label (flattened tau-cell index) or -1 outside the blocks."""
        sites = np.asarray(sites, dtype=np.int64)
        half = (self.tau - 1) // 4
        z = np.floor_divide(sites + self.tau // 2, self.tau)
        c = sites - self.tau * z
        inside = np.all(np.abs(c) <= half, axis=-1)
        lab = z[..., 0] * (1 << 32) + z[..., 1]
        return np.where(inside, lab, np.iinfo(np.int64).min)

    def values(self, i, delta):
        i = np.asarray(i, dtype=np.int64)
        delta = np.asarray(delta, dtype=np.int64)
        bi = self.block(i)
        bj = self.block(i + delta)
        same = (bi == bj) & (bi != np.iinfo(np.int64).min)
        return np.where(same, self.Lambda, 1.0) * _power(delta, 2 + self.s)


@dataclass(frozen=True, eq=True)
class FieldSpec:
    tau: int
    table: tuple
    mu: float
    d: int = 2

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float).reshape(-1)
        if t.size != self.tau ** self.d:
            raise ValueError(f"field table needs tau^d = {self.tau ** self.d} entries")
        if abs(math.fsum(t)) > 1e-12:
            raise ValueError(f"field must have zero flux over a period cell (sum = {math.fsum(t):g})")
        if np.max(np.abs(t)) > self.mu * (1 + 1e-15):
            raise ValueError("field exceeds its bound mu")
        object.__setattr__(self, "table", tuple(float(x) for x in t))

    @classmethod
    def zero(cls, d=2):
        return cls(1, (0.0,), 0.0, d)

    @classmethod
    def from_map(cls, tau, mapping: dict, mu=None, d=2):
        t = np.zeros(tau ** d)
        for k, v in mapping.items():
            t[int(residue_index(np.asarray(k), tau))] = v
        mu = float(np.max(np.abs(t))) if mu is None else mu
        return cls(tau, tuple(t), mu, d)

    @property
    def is_zero(self) -> bool:
        return not any(self.table)

    def values(self, sites) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64)
        return np.asarray(self.table)[residue_index(sites, self.tau)]


def field(spec: FieldSpec, i) -> float:
    return float(spec.values(np.asarray(i)))


def coupling(spec: CouplingSpec, i, j) -> float:
    return spec.coupling(i, j)


# --- tails --------------------------------------------------------------

def shell_sums(d: int, s: float, C: int) -> np.ndarray:
    """S[m] = sum over |k|_inf = m of |k|_1^{-d-s}, m = 0..C."""
    q = d + s
    out = np.zeros(C + 1)
    if d == 2:
        v = np.arange(0, 2 * C + 1, dtype=float)
        f = np.zeros_like(v)
        f[1:] = v[1:] ** (-q)
        pre = np.concatenate([[0.0], np.cumsum(f)])  # pre[n] = sum_{v<n} f
        m = np.arange(1, C + 1)
        inner = pre[2 * m] - pre[m + 1]  # v = m+1 .. 2m-1
        out[1:] = 4 * f[m] + 8 * inner + 4 * f[2 * m]
        return out
    prev = np.ones(1)
    for m in range(1, C + 1):
        one = np.concatenate([[1.0], np.full(m, 2.0)])
        cur = np.ones(1)
        for _ in range(d):
            cur = np.convolve(cur, one)
        cnt = cur.copy()
        cnt[: len(prev)] -= prev
        prev = cur
        v = np.arange(len(cnt), dtype=float)
        v[0] = 1.0
        out[m] = float(np.dot(cnt[1:], v[1:] ** (-q)))
    return out


@lru_cache(maxsize=None)
def linf_sphere_constant(d: int, s: float) -> float:
    """c_d = integral over {|x|_inf = 1} of |x|_1^{-d-s}."""
    q = d + s
    if d == 2:
        return 8.0 * (1.0 - 2.0 ** (-1.0 - s)) / (1.0 + s)
    nodes, weights = quadrature.gauss_box(24, d - 1)
    face = float(np.sum(weights * (1.0 + nodes.sum(axis=1)) ** (-q)))
    return 2 * d * 2 ** (d - 1) * face


def _cutoff(d: int, R: int) -> int:
    if d == 2:
        return max(1000, 100 * R)
    return max(128, 8 * R)


@lru_cache(maxsize=None)
def _shells(d: int, s: float, C: int) -> np.ndarray:
    return shell_sums(d, s, C)


def base_tail(d: int, s: float, R: int) -> float:
    """sum over |k|_inf >= R of |k|_1^{-d-s}: exact to a cutoff, integral beyond."""
    C = _cutoff(d, R)
    S = _shells(d, s, C)
    exact = math.fsum(S[R:][::-1])
    return exact + _shell_tail(d, s, C)


def _shell_tail(d: int, s: float, C: int) -> float:
    """Upper bound for sum_{m > C} S[m]."""
    q = d + s
    if d == 2:
        # S[m] <= (4 + 4 2^-q) m^-q + 8 int_m^{2m} t^-q dt, and sum_{m>C} m^-p <= C^{1-p}/(p-1)
        ends = 4.0 + 4.0 * 2.0 ** (-q)
        return linf_sphere_constant(d, s) * C ** (-s) / s + ends * C ** (1 - q) / (q - 1)
    # faces: Riemann sums of a convex integrand, padded by the edge mass
    return linf_sphere_constant(d, s) * C ** (-s) / s * (1.0 + 2.0 * d / C)


@lru_cache(maxsize=4096)
def sigma(spec: CouplingSpec, R: int) -> float:
    """sup_i sum_{|j-i|_inf >= R} J_ij (an upper bound, see base_tail)."""
    if R < 1:
        raise ValueError("R must be at least 1")
    R = int(R)
    sup = spec.support
    if sup is not None:
        if R > sup:
            return 0.0
        T = spec.table(sup + 1)
        rad = np.max(np.abs(offsets(spec.d, sup + 1)), axis=1)
        return max(math.fsum(row) for row in T[:, rad >= R])
    start = max(R, spec.far_start, R + spec.exact_window)
    near = 0.0
    if start > R:
        T = spec.table(start)
        rad = np.max(np.abs(offsets(spec.d, start)), axis=1)
        near = max(math.fsum(row) for row in T[:, rad >= R])
    return near + spec.far_coefficient * base_tail(spec.d, spec.s, start)


def Sigma(spec: CouplingSpec, R: int) -> float:
    if R < 1:
        raise ValueError("R must be at least 1")
    return math.fsum(sigma(spec, m) for m in range(1, R + 1)) / R


# --- continuum kernels ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class ContinuumKernel:
    """K(x, y) = amplitude(x, y) |x - y|_2^{-d-s} with lam <= amplitude <= Lambda.

    amplitude None means the constant lam (a homogeneous kernel, which needs
    lam == Lambda).  ``periodic`` marks Z^d-periodic amplitudes.
    """

    d: int
    s: float
    lam: float
    Lambda: float
    amplitude: Optional[Callable] = None
    periodic: bool = False
    name: str = "kernel"

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise ValueError("s must lie in (0, 1)")
        if not 0 < self.lam <= self.Lambda:
            raise ValueError("need 0 < lambda <= Lambda")
        if self.amplitude is None and self.lam != self.Lambda:
            raise ValueError("homogeneous kernel needs lambda == Lambda")

    @property
    def translation_invariant(self) -> bool:
        return self.amplitude is None

    def amp(self, x, y):
        if self.amplitude is None:
            return np.full(np.broadcast_shapes(np.shape(x), np.shape(y))[:-1], self.lam)
        return self.amplitude(x, y)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        z = x - y
        r = np.sqrt(np.sum(z * z, axis=-1))
        return self.amp(x, y) * r ** (-(self.d + self.s))

    @property
    def lambda_star(self) -> float:
        return (2.0 * math.sqrt(self.d)) ** (-self.d - self.s) * self.lam

    @property
    def Lambda_star(self) -> float:
        d, s = self.d, self.s
        far = (2.0 * d) ** (d + s)
        near = d ** (d + s) * 2.0 ** (2 * d + s) * d * d / s * 0.5 ** d * beta_fn(d, 1.0 - s)
        return self.Lambda * max(far, near)

    def sphere_tail(self, dist: float) -> float:
        """Lambda * int_{|z| >= dist} |z|^{-d-s} dz."""
        area = 2.0 * math.pi ** (self.d / 2) / math.gamma(self.d / 2)
        return self.Lambda * area * dist ** (-self.s) / self.s


def PowerKernel(d=2, s=0.5, c=1.0) -> ContinuumKernel:
    return ContinuumKernel(d, s, c, c, None, False, f"power(c={c:g})")


def ModulatedKernel(d=2, s=0.5, c=1.0, a=0.5) -> ContinuumKernel:
    """Z^d-periodic kernel c (1 + a (phi(x) + phi(y))/2) |x-y|^{-d-s}, phi = prod cos 2 pi x_n."""
    if not 0 <= a < 1:
        raise ValueError("modulation depth must lie in [0, 1)")

    def amp(x, y):
        px = np.prod(np.cos(2 * np.pi * x), axis=-1)
        py = np.prod(np.cos(2 * np.pi * y), axis=-1)
        return c * (1.0 + 0.5 * a * (px + py))

    return ContinuumKernel(d, s, c * (1 - a), c * (1 + a), amp, True, f"modulated(c={c:g},a={a:g})")


@dataclass(frozen=True, eq=False)
class DiscretizedCoupling(CouplingSpec):
    """J^(eps)_ij = eps^{-d+s} int int_{cells} K, built on demand per radius."""

    kernel: ContinuumKernel
    eps: float
    levels: int = 3
    _cache: dict = dc_field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.kernel.periodic:
            n = round(1.0 / self.eps)
            if abs(n * self.eps - 1.0) > 1e-12:
                raise ValueError("periodic kernels need 1/eps to be an integer")
        if self.levels < 1:
            raise ValueError("at least one dyadic level is required")

    @property
    def d(self):
        return self.kernel.d

    @property
    def s(self):
        return self.kernel.s

    @property
    def period(self):
        return round(1.0 / self.eps) if self.kernel.periodic else 1

    exact_window = 8

    @property
    def lam(self):
        return self.kernel.lambda_star

    @property
    def upper_power_constant(self):
        return self.kernel.Lambda_star

    def table(self, rho: int) -> np.ndarray:
        key = int(rho)
        hit = self._cache.get(key)
        if hit is None:
            for r, T in self._cache.items():
                if r >= key:  # crop a larger table
                    full = offsets(self.d, r)
                    keep = np.max(np.abs(full), axis=1) < key
                    hit = np.ascontiguousarray(T[:, keep])
                    break
        if hit is None:
            hit = _discretize_table(self.kernel, self.eps, key, self.levels)
            hit.setflags(write=False)
            self._cache[key] = hit
        return hit

    def values(self, i, delta):
        i = np.asarray(i, dtype=np.int64)
        delta = np.asarray(delta, dtype=np.int64)
        i, delta = np.broadcast_arrays(i, delta)
        rho = int(np.max(np.abs(delta))) + 1 if delta.size else 1
        T = self.table(rho)
        width = 2 * rho - 1
        k = np.zeros(delta.shape[:-1], dtype=np.int64)
        for n in range(self.d):
            k = k * width + (delta[..., n] + rho - 1)
        return T[residue_index(i, self.period), k]

    def __hash__(self):
        return hash((id(self.kernel), self.eps, self.levels))

    def __eq__(self, other):
        return (isinstance(other, DiscretizedCoupling) and other.kernel is self.kernel
                and other.eps == self.eps and other.levels == self.levels)


def discretize(K: ContinuumKernel, eps: float, levels: int = 3) -> DiscretizedCoupling:
    if not eps > 0:
        raise ValueError("eps must be positive")
    if eps > 1:
        raise ValueError("eps must lie in (0, 1]")
    return DiscretizedCoupling(K, float(eps), levels)


@lru_cache(maxsize=16)
def _homogeneous_table(d: int, s: float, rho: int) -> np.ndarray:
    offs = offsets(d, rho)
    out = np.zeros(len(offs))
    nz = np.any(offs != 0, axis=1)
    out[nz] = quadrature.tent_integral(offs[nz], d, s)
    out.setflags(write=False)
    return out


def _discretize_table(K: ContinuumKernel, eps: float, rho: int, levels: int) -> np.ndarray:
    if K.translation_invariant:
        return (K.lam * _homogeneous_table(K.d, K.s, rho))[None, :].copy()
    d, p_exp = K.d, K.d + K.s
    n = round(1.0 / eps) if K.periodic else 1
    res = residues(d, n)
    offs = offsets(d, rho)
    T = np.zeros((len(res), len(offs)))
    width = 2 * rho - 1
    # compute each unordered cell pair once: (r, delta) with delta > 0 lexicographically
    half = len(offs) // 2  # offsets are symmetric around the centre index
    pos = np.arange(half + 1, len(offs))
    for ri, r in enumerate(res):
        dl = offs[pos]
        vals = _cell_pairs(K, eps, np.repeat(r[None, :], len(dl), 0), dl, levels)
        T[ri, pos] = vals
        # mirror: J(r + delta, r) = J(r, r + delta) stored at residue of r + delta, offset -delta
        rj = residue_index(r[None, :] + dl, n)
        neg = len(offs) - 1 - pos
        T[rj, neg] = vals
    assert width ** d == len(offs)
    return T


def _cell_pairs(K: ContinuumKernel, eps: float, i: np.ndarray, delta: np.ndarray, levels: int):
    """eps^{-d+s} int_{Q(eps i)} int_{Q(eps j)} K in unit-cell variables."""
    d, p = K.d, K.d + K.s

    def amp(X, Y):
        return K.amp(eps * X, eps * Y)

    xa = i.astype(float) - 0.5
    ya = (i + delta).astype(float) - 0.5
    dist = np.max(np.abs(delta), axis=1)
    out = np.zeros(len(i))
    far = dist >= 2
    for order, lo, hi in ((6, 2, 4), (4, 4, 16), (3, 16, 10**9)):
        sel = far & (dist >= lo) & (dist < hi)
        if np.any(sel):
            out[sel] = quadrature.box_pair_gauss(amp, xa[sel], ya[sel], 1.0, order, d, p)
    for k in np.nonzero(~far)[0]:
        out[k] = _touching(amp, K, xa[k], ya[k], 1.0, levels, d, p)
    return out


def _touching(amp, K, xa, ya, h, levels, d, p):
    """Dyadic refinement of a touching box pair; the finest touching pairs use
    the exact homogeneous cell integral with the amplitude frozen at the centres."""
    kids = [np.asarray(c, dtype=float) * (h / 2) for c in itertools.product((0, 1), repeat=d)]
    hh = h / 2
    sep_x, sep_y, touch = [], [], []
    for cx in kids:
        for cy in kids:
            bx, by = xa + cx, ya + cy
            gap = np.round((by - bx) / hh).astype(np.int64)
            if np.max(np.abs(gap)) >= 2:
                sep_x.append(bx)
                sep_y.append(by)
            else:
                touch.append((bx, by, gap))
    total = 0.0
    if sep_x:
        total += float(np.sum(quadrature.box_pair_gauss(amp, np.array(sep_x), np.array(sep_y), hh, 5, d, p)))
    for bx, by, gap in touch:
        if levels > 1:
            total += _touching(amp, K, bx, by, hh, levels - 1, d, p)
        else:
            c = amp((bx + hh / 2)[None, :], (by + hh / 2)[None, :])[0]
            F = quadrature.tent_integral(gap[None, :], d, K.s)[0]
            total += c * hh ** (d - K.s) * F
    return total
