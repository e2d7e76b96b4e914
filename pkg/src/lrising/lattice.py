"""Integer lattice geometry: norms, cubes, directions, the modules L_{m,w}
and their fundamental domains inside slabs."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

# Coordinates are packed into a single int64 key for set lookups.
_KEY_BITS = 20
_KEY_OFF = 1 << (_KEY_BITS - 1)


def l1_norm(s) -> int:
    return int(np.abs(np.asarray(s, dtype=np.int64)).sum())


def linf_norm(s) -> int:
    s = np.asarray(s, dtype=np.int64)
    return int(np.abs(s).max()) if s.size else 0


def translate(s, k):
    return tuple(int(a) + int(b) for a, b in zip(s, k))


def translate_config(u, k):
    """(T_k u)_i = u_{i-k}."""
    return u.shifted(k)


def site_keys(sites: np.ndarray) -> np.ndarray:
    """Pack an (N, d) integer array into sortable int64 keys."""
    sites = np.asarray(sites, dtype=np.int64)
    if sites.ndim == 1:
        sites = sites[None, :]
    if sites.size and np.abs(sites).max() >= _KEY_OFF:
        raise OverflowError("site coordinates exceed the packing range")
    key = np.zeros(len(sites), dtype=np.int64)
    for n in range(sites.shape[1]):
        key = (key << _KEY_BITS) | (sites[:, n] + _KEY_OFF)
    return key


def box_sites(lo: Sequence[int], shape: Sequence[int]) -> np.ndarray:
    """All sites of the box lo + [0, shape), in C (lexicographic) order."""
    axes = [np.arange(a, a + n, dtype=np.int64) for a, n in zip(lo, shape)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def offsets(d: int, rho: int) -> np.ndarray:
    """Offsets with |delta|_inf < rho in lexicographic order (zero included)."""
    return box_sites([-(rho - 1)] * d, [2 * rho - 1] * d)


@dataclass(frozen=True)
class Direction:
    omega: tuple

    def __post_init__(self):
        w = tuple(int(x) for x in self.omega)
        if len(w) < 2:
            raise ValueError("dimension must be at least 2")
        if not any(w):
            raise ValueError("direction must be nonzero")
        g = 0
        for x in w:
            g = math.gcd(g, abs(x))
        if g != 1:
            raise ValueError(f"direction {w} is not primitive (gcd {g})")
        object.__setattr__(self, "omega", w)

    @classmethod
    def from_rational(cls, v) -> "Direction":
        """Clear denominators and divide out the gcd."""
        fr = [Fraction(x) for x in v]
        den = 1
        for f in fr:
            den = den * f.denominator // math.gcd(den, f.denominator)
        ints = [int(f * den) for f in fr]
        g = 0
        for x in ints:
            g = math.gcd(g, abs(x))
        if g == 0:
            raise ValueError("direction must be nonzero")
        return cls(tuple(x // g for x in ints))

    @property
    def d(self) -> int:
        return len(self.omega)

    @property
    def norm_l1(self) -> int:
        return sum(abs(x) for x in self.omega)

    def dot(self, sites) -> np.ndarray:
        return np.asarray(sites, dtype=np.int64) @ np.asarray(self.omega, dtype=np.int64)

    def height(self, sites) -> np.ndarray:
        """(w/|w|) . i with the l1 normalization."""
        return self.dot(sites) / self.norm_l1


@dataclass(frozen=True)
class Cube:
    center: tuple
    half_side: int

    def __post_init__(self):
        if self.half_side < 0:
            raise ValueError("half_side must be nonnegative")
        object.__setattr__(self, "center", tuple(int(c) for c in self.center))

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def lo(self) -> tuple:
        return tuple(c - self.half_side for c in self.center)

    @property
    def shape(self) -> tuple:
        return (2 * self.half_side + 1,) * self.d

    def count(self) -> int:
        return (2 * self.half_side + 1) ** self.d

    def sites(self) -> np.ndarray:
        return box_sites(self.lo, self.shape)


def _as_level(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError("slab bounds must be finite")
        return Fraction(x).limit_denominator(10**9)
    return Fraction(x)


@dataclass(frozen=True)
class SlabSpec:
    A: Fraction
    B: Fraction

    def __post_init__(self):
        a, b = _as_level(self.A), _as_level(self.B)
        if not a < b:
            raise ValueError(f"empty slab: need A < B, got A={a}, B={b}")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)

    def shifted(self, dh) -> "SlabSpec":
        dh = _as_level(dh)
        return SlabSpec(self.A + dh, self.B + dh)


def compare_level(dots: np.ndarray, norm: int, level: Fraction) -> np.ndarray:
    """Sign of (dots/norm - level), exactly, for integer dots."""
    lhs = np.asarray(dots, dtype=np.int64) * level.denominator
    rhs = level.numerator * norm
    return np.sign(lhs - rhs)


def kernel_basis(omega: Sequence[int]) -> list:
    """Primitive integer basis of {k : w.k = 0} via unimodular column operations.

    Column operations on the 1 x d row w reduce it to (g, 0, ..., 0); the
    remaining columns of the accumulated unimodular matrix span the kernel.
    """
    w = [int(x) for x in omega]
    d = len(w)
    U = [[int(r == c) for c in range(d)] for r in range(d)]

    def colop(dst, src, q):
        # column dst -= q * column src
        w[dst] -= q * w[src]
        for r in range(d):
            U[r][dst] -= q * U[r][src]

    def swap(a, b):
        w[a], w[b] = w[b], w[a]
        for r in range(d):
            U[r][a], U[r][b] = U[r][b], U[r][a]

    for c in range(1, d):
        while w[c] != 0:
            q = w[0] // w[c]
            colop(0, c, q)
            swap(0, c)
    basis = []
    for c in range(1, d):
        v = [U[r][c] for r in range(d)]
        first = next(x for x in v if x != 0)
        if first < 0:
            v = [-x for x in v]
        basis.append(tuple(v))
    return basis


def module_basis(omega, tau: int) -> list:
    """Basis of L_w = {k in tau Z^d : w.k = 0}."""
    if not isinstance(omega, Direction):
        omega = Direction(tuple(omega))
    if tau < 1:
        raise ValueError("tau must be a positive integer")
    return [tuple(tau * x for x in v) for v in kernel_basis(omega.omega)]


@dataclass(frozen=True)
class QuotientLattice:
    tau: int
    m: int
    direction: Direction
    basis: tuple = field(default=None)

    def __post_init__(self):
        if not isinstance(self.direction, Direction):
            object.__setattr__(self, "direction", Direction(tuple(self.direction)))
        if self.tau < 1 or self.m < 1:
            raise ValueError("tau and m must be positive")
        if self.basis is None:
            object.__setattr__(self, "basis", tuple(module_basis(self.direction, self.tau)))
        else:
            object.__setattr__(self, "basis", tuple(tuple(int(x) for x in b) for b in self.basis))
        B = np.asarray(self.basis, dtype=np.int64).reshape(-1, self.d)
        if B.shape[0] != self.d - 1:
            raise ValueError("basis must have d-1 vectors")
        if np.any(B @ np.asarray(self.direction.omega) != 0) or np.any(B % self.tau):
            raise ValueError("basis vectors must lie in tau Z^d and be orthogonal to omega")
        if np.linalg.matrix_rank(B.astype(float)) != self.d - 1:
            raise ValueError("basis vectors must be independent")

    @classmethod
    def build(cls, omega, tau: int, m: int = 1) -> "QuotientLattice":
        if not isinstance(omega, Direction):
            omega = Direction(tuple(omega))
        return cls(tau, m, omega)

    @property
    def d(self) -> int:
        return self.direction.d

    @property
    def generators(self) -> np.ndarray:
        """Basis of L_{m,w} (rows)."""
        return self.m * np.asarray(self.basis, dtype=np.int64).reshape(-1, self.d)

    def _gram(self):
        G = self.generators
        gram = [[int(x) for x in row] for row in (G @ G.T)]
        n = len(gram)
        if n == 1:
            return gram[0][0], [[1]]
        # adjugate by cofactors; n = d-1 is tiny
        M = np.array(gram, dtype=object)

        def det(a):
            if a.shape[0] == 1:
                return a[0, 0]
            return sum((-1) ** c * a[0, c] * det(np.delete(a[1:], c, axis=1)) for c in range(a.shape[0]))

        dt = det(M)
        adj = [[(-1) ** (r + c) * det(np.delete(np.delete(M, c, axis=0), r, axis=1)) for c in range(n)]
               for r in range(n)]
        return int(dt), [[int(x) for x in row] for row in adj]

    def coefficients_floor(self, sites) -> np.ndarray:
        """floor of the coordinates of the orthogonal projection onto span(L)."""
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.d)
        G = self.generators
        det, adj = self._gram()
        v = sites @ G.T
        num = v @ np.asarray(adj, dtype=np.int64).T
        return np.floor_divide(num, det)

    def representative(self, sites) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64)
        single = sites.ndim == 1
        s2 = sites.reshape(-1, self.d)
        rep = s2 - self.coefficients_floor(s2) @ self.generators
        return rep[0] if single else rep

    def contains(self, k) -> bool:
        """Integer membership k in L_{m,w}."""
        k = np.asarray(k, dtype=np.int64).reshape(1, self.d)
        if int(self.direction.dot(k)[0]) != 0:
            return False
        G = self.generators
        det, adj = self._gram()
        num = (k @ G.T) @ np.asarray(adj, dtype=np.int64).T
        if np.any(num % det):
            return False
        c = num // det
        return bool(np.array_equal(c @ G, k))

    def fundamental_domain(self, slab: SlabSpec) -> np.ndarray:
        """Representatives of Z^d / L_{m,w} with A <= height <= B, lexicographic."""
        w = np.asarray(self.direction.omega, dtype=float)
        n1 = self.direction.norm_l1
        w2 = float(w @ w)
        G = self.generators.astype(float)
        t_lo = float(slab.A) * n1 / w2
        t_hi = float(slab.B) * n1 / w2
        corners = []
        for cs in itertools.product((0.0, 1.0), repeat=self.d - 1):
            base = np.asarray(cs) @ G
            corners.append(base + t_lo * w)
            corners.append(base + t_hi * w)
        corners = np.asarray(corners)
        lo = np.floor(corners.min(axis=0)).astype(np.int64) - 1
        hi = np.ceil(corners.max(axis=0)).astype(np.int64) + 1
        cand = box_sites(lo, hi - lo + 1)
        dots = self.direction.dot(cand)
        ok = (compare_level(dots, n1, slab.A) >= 0) & (compare_level(dots, n1, slab.B) <= 0)
        cand = cand[ok]
        rep = self.representative(cand)
        cand = cand[np.all(rep == cand, axis=1)]
        return cand  # box_sites order is already lexicographic

    def heights(self, sites) -> np.ndarray:
        return self.direction.height(sites)
