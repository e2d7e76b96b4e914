"""Cell-pair integrals of singular kernels |x - y|^{-d-s} on unit lattice cells.

Two unit cells centred at 0 and delta give, after the substitution z = x - y,

    F(delta) = int_{[-1,1]^d} prod_n (1 - |w_n|) |delta + w|^{-d-s} dw,

a d-dimensional integral with a piecewise-linear weight.  The weight is
polynomial on each of the 2^d unit orthant boxes, so tensor Gauss-Legendre is
applied per box.  Boxes having the origin as a corner (|delta|_inf = 1) are
refined geometrically towards that corner and the remaining corner mass is
closed with the geometric-series estimate of the leading term.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

GRADED_LEVELS = 48


@lru_cache(maxsize=None)
def gauss_box(n: int, d: int):
    """Tensor Gauss-Legendre nodes and weights on [0, 1]^d."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    nodes = np.array(list(itertools.product(x, repeat=d)))
    weights = np.prod(np.array(list(itertools.product(w, repeat=d))), axis=1)
    return nodes, weights


def _order(dist: np.ndarray) -> np.ndarray:
    """Gauss order per axis as a function of the l_inf distance of the box."""
    out = np.full(dist.shape, 2, dtype=np.int64)
    out[dist < 96] = 3
    out[dist < 24] = 5
    out[dist < 6] = 8
    out[dist < 3] = 12
    return out


def _tent(w: np.ndarray) -> np.ndarray:
    return np.prod(1.0 - np.abs(w), axis=-1)


def _regular_box(delta: np.ndarray, a: np.ndarray, n: int, p: float) -> np.ndarray:
    """Integral over the orthant box w in a + [0,1]^d for a batch of deltas."""
    d = delta.shape[1]
    nodes, weights = gauss_box(n, d)
    w = a[None, :] + nodes  # (q, d)
    tent = _tent(w)
    out = np.empty(len(delta))
    step = max(1, 2_000_000 // len(nodes))
    for lo in range(0, len(delta), step):
        z = delta[lo:lo + step, None, :] + w[None, :, :]
        r = np.sqrt(np.einsum("kqd,kqd->kq", z, z))
        out[lo:lo + step] = (r ** (-p)) @ (weights * tent)
    return out


def _corner_box(delta: np.ndarray, a: np.ndarray, p: float, s: float) -> float:
    """Orthant box whose z-image has the origin at a corner; graded towards it."""
    d = len(delta)
    b = delta + a  # z-box is b + [0,1]^d; the origin is one of its corners
    sign = np.where(b < 0, -1.0, 1.0)  # z = sign * y with y in [0,1]^d
    nodes, weights = gauss_box(8, d)
    shells = [c for c in itertools.product((0, 1), repeat=d) if any(c)]
    parts = []
    for level in range(GRADED_LEVELS):
        h = 0.5 ** (level + 1)
        acc = 0.0
        for c in shells:
            y = (np.asarray(c, dtype=float) + nodes) * h
            z = sign * y
            w = z - delta
            r = np.sqrt(np.sum(z * z, axis=1))
            acc += float(np.sum(weights * _tent(w) * r ** (-p))) * h ** d
        parts.append(acc)
    # the tent vanishes linearly at the corner (some |delta_n| = 1), so the
    # shell contributions decay like 2^{-(1-s)} per level
    if _tent((-delta)[None, :])[0] > 0:
        raise ValueError("non-integrable corner")
    ratio = 2.0 ** (-(1.0 - s))
    rem = parts[-1] * ratio / (1.0 - ratio)
    return float(np.sum(parts[::-1])) + rem


def tent_integral(deltas, d: int, s: float) -> np.ndarray:
    """F(delta) for an (N, d) integer array of nonzero offsets."""
    deltas = np.atleast_2d(np.asarray(deltas, dtype=np.int64))
    # F depends only on the sorted absolute offset
    canon = np.sort(np.abs(deltas), axis=1)
    uniq, inv = np.unique(canon, axis=0, return_inverse=True)
    inv = np.asarray(inv).reshape(-1)
    if np.any(np.all(uniq == 0, axis=1)):
        raise ValueError("F is undefined at delta = 0")
    vals = _tent_integral_canonical(uniq.astype(float), d, s)
    return vals[inv]


def _tent_integral_canonical(uniq: np.ndarray, d: int, s: float) -> np.ndarray:
    p = d + s
    out = np.zeros(len(uniq))
    dist = np.max(np.abs(uniq), axis=1)
    orders = _order(dist)
    for a in itertools.product((-1, 0), repeat=d):
        a = np.asarray(a, dtype=float)
        # the box contains the origin (as a corner) iff -(delta + a) in [0,1]^d
        b = uniq + a[None, :]
        corner = np.all((b <= 0) & (b >= -1), axis=1)
        for n in np.unique(orders):
            sel = (orders == n) & ~corner
            if np.any(sel):
                out[sel] += _regular_box(uniq[sel], a, int(n), p)
        for k in np.nonzero(corner)[0]:
            out[k] += _corner_box(uniq[k], a, p, s)
    return out


def box_pair_gauss(amp, xa, ya, h: float, n: int, d: int, p: float) -> np.ndarray:
    """Tensor Gauss for boxes xa + [0,h]^d and ya + [0,h]^d (batched).

    amp(x, y) is evaluated on (..., d) arrays.  Returns the integral of
    amp(x, y) |x - y|^{-p} for each pair.
    """
    nodes, weights = gauss_box(n, d)
    q = len(nodes)
    out = np.empty(len(xa))
    step = max(1, 400_000 // (q * q))
    for lo in range(0, len(xa), step):
        X = xa[lo:lo + step, None, None, :] + h * nodes[None, :, None, :]
        Y = ya[lo:lo + step, None, None, :] + h * nodes[None, None, :, :]
        Z = X - Y
        r = np.sqrt(np.sum(Z * Z, axis=-1))
        f = amp(X, Y) * r ** (-p)
        out[lo:lo + step] = np.einsum("kij,i,j->k", f, weights, weights) * h ** (2 * d)
    return out
