"""Bilinear pair sums  sum_{i, j in box, 0 < |i-j|_inf < rho} a_i b_j J(i, j).

Small problems loop over offsets in lexicographic order and combine the
per-offset partial sums with math.fsum; large ones use FFT correlation,
one per residue class of a periodic coupling.  Both paths are deterministic.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import fftconvolve

from .kernels import residue_index
from .lattice import box_sites, offsets

FFT_THRESHOLD = 2.0e7


def residue_grid(lo, shape, p: int) -> np.ndarray:
    if p == 1:
        return np.zeros(shape, dtype=np.int64)
    return residue_index(box_sites(lo, shape), p).reshape(shape)


def _slices(delta, shape):
    sa, sb = [], []
    for dn, n in zip(delta, shape):
        dn = int(dn)
        if abs(dn) >= n:
            return None, None
        if dn >= 0:
            sa.append(slice(0, n - dn))
            sb.append(slice(dn, n))
        else:
            sa.append(slice(-dn, n))
            sb.append(slice(0, n + dn))
    return tuple(sa), tuple(sb)


def pair_sum(T: np.ndarray, rho: int, lo, a: np.ndarray, b: np.ndarray, p: int = 1,
             method: str = "auto") -> float:
    """T is the coupling table of kernels.CouplingSpec.table(rho)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("a and b must live on the same box")
    d = a.ndim
    if not a.any() or not b.any():
        return 0.0
    n_off = (2 * rho - 1) ** d
    if method == "auto":
        method = "fft" if n_off * a.size > FFT_THRESHOLD else "direct"
    if method == "fft":
        return _pair_sum_fft(T, rho, lo, a, b, p)
    return _pair_sum_direct(T, rho, lo, a, b, p)


def _pair_sum_direct(T, rho, lo, a, b, p):
    d = a.ndim
    offs = offsets(d, rho)
    rg = residue_grid(lo, a.shape, p) if p > 1 else None
    live = np.any(T != 0, axis=0)
    parts = []
    for k in np.nonzero(live)[0]:
        delta = offs[k]
        sa, sb = _slices(delta, a.shape)
        if sa is None:
            continue
        if p == 1:
            parts.append(T[0, k] * float(np.sum(a[sa] * b[sb])))
        else:
            parts.append(float(np.sum(a[sa] * b[sb] * T[rg[sa], k])))
    return math.fsum(parts)


def correlate(b: np.ndarray, kern: np.ndarray) -> np.ndarray:
    """c[i] = sum_delta kern[delta] b[i + delta], kern centred (odd sides)."""
    flipped = kern[(slice(None, None, -1),) * kern.ndim]
    return fftconvolve(b, flipped, mode="same")


def _pair_sum_fft(T, rho, lo, a, b, p):
    d = a.ndim
    shape = (2 * rho - 1,) * d
    if p == 1:
        c = correlate(b, T[0].reshape(shape))
        return float(np.sum(a * c))
    rg = residue_grid(lo, a.shape, p)
    parts = []
    for r in range(T.shape[0]):
        mask = rg == r
        ar = np.where(mask, a, 0.0)
        if not ar.any():
            continue
        c = correlate(b, T[r].reshape(shape))
        parts.append(float(np.sum(ar * c)))
    return math.fsum(parts)


def row_sums(T: np.ndarray, rho: int, lo, b: np.ndarray, p: int = 1) -> np.ndarray:
    """c[i] = sum_delta J(i, i+delta) b[i+delta] for every i in the box."""
    b = np.asarray(b, dtype=float)
    d = b.ndim
    shape = (2 * rho - 1,) * d
    n_off = (2 * rho - 1) ** d
    if n_off * b.size > FFT_THRESHOLD:
        if p == 1:
            return correlate(b, T[0].reshape(shape))
        rg = residue_grid(lo, b.shape, p)
        out = np.zeros(b.shape)
        for r in range(T.shape[0]):
            c = correlate(b, T[r].reshape(shape))
            out[rg == r] = c[rg == r]
        return out
    offs = offsets(d, rho)
    rg = residue_grid(lo, b.shape, p) if p > 1 else None
    out = np.zeros(b.shape)
    for k in np.nonzero(np.any(T != 0, axis=0))[0]:
        sa, sb = _slices(offs[k], b.shape)
        if sa is None:
            continue
        if p == 1:
            out[sa] += T[0, k] * b[sb]
        else:
            out[sa] += T[rg[sa], k] * b[sb]
    return out
