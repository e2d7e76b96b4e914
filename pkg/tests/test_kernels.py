import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.special import zeta
from scipy.stats import qmc

from lrising.kernels import (AppendixB, FieldSpec, ModulatedKernel, PeriodicTable, PowerKernel, PowerLike, Sigma,
                             Truncated, coupling, discretize, field, linf_sphere_constant, sigma)
from lrising.lattice import offsets

pairs = st.tuples(st.integers(-25, 25), st.integers(-25, 25), st.integers(-25, 25), st.integers(-25, 25))


def all_specs():
    rng = np.random.default_rng(11)
    return [PowerLike(1.0, 1.0, 0.5), PowerLike(0.5, 2.0, 0.3), Truncated(PowerLike(1, 1, 0.5), 4),
            PeriodicTable.random(3, 0.5, 0.5, 2.0, rng), AppendixB(5, 100.0, 0.5), AppendixB(9, 10.0, 0.7)]


# --- couplings ---

def test_powerlike_values():
    spec = PowerLike(1, 1, 0.5)
    assert coupling(spec, (0, 0), (1, 0)) == 1.0
    assert coupling(spec, (0, 0), (1, 1)) == pytest.approx(0.1767767, abs=1e-7)
    assert coupling(spec, (3, 3), (3, 3)) == 0.0


def test_appendixB_defect_block():
    spec = AppendixB(5, 100.0, 0.5)
    assert coupling(spec, (0, 0), (1, 0)) == 100.0
    # (2, 0) lies outside the block of half-side 1
    assert coupling(spec, (1, 0), (2, 0)) == 1.0
    # translated block
    assert coupling(spec, (5, 5), (6, 6)) == pytest.approx(100.0 * 2 ** -2.5)
    # different blocks do not get the defect strength
    assert coupling(spec, (1, 0), (4, 0)) == pytest.approx(3 ** -2.5)
    with pytest.raises(ValueError):
        AppendixB(7, 100.0, 0.5)


@pytest.mark.parametrize("spec", all_specs(), ids=lambda s: type(s).__name__)
@given(p=pairs)
@settings(max_examples=200, deadline=None)
def test_symmetry_and_periodicity(spec, p):
    i, j = np.array(p[:2]), np.array(p[2:])
    a = coupling(spec, i, j)
    assert a == coupling(spec, j, i)
    for e in np.eye(2, dtype=np.int64):
        t = spec.period * e
        assert coupling(spec, i + t, j + t) == a
    assert a >= 0


@pytest.mark.parametrize("spec", all_specs(), ids=lambda s: type(s).__name__)
def test_diagonal_and_ferromagnetic_floor(spec):
    rng = np.random.default_rng(0)
    for i in rng.integers(-20, 20, size=(50, 2)):
        assert coupling(spec, i, i) == 0.0
        for e in ((1, 0), (0, 1)):
            assert coupling(spec, i, i + np.array(e)) >= spec.lam


def test_symmetry_bulk():
    spec = PeriodicTable.random(2, 0.5, 0.5, 2.0, np.random.default_rng(5))
    rng = np.random.default_rng(1)
    i = rng.integers(-100, 100, size=(10_000, 2))
    j = rng.integers(-100, 100, size=(10_000, 2))
    assert np.array_equal(spec.values(i, j - i), spec.values(j, i - j))


# --- fields ---

def test_field_examples():
    z = FieldSpec.zero()
    assert field(z, (3, 4)) == 0.0
    a = 0.3
    f = FieldSpec.from_map(2, {(0, 0): a, (1, 0): -a, (0, 1): a, (1, 1): -a})
    vals = [field(f, (x, y)) for x in range(2) for y in range(2)]
    assert math.fsum(vals) == 0.0
    assert field(f, (2, 0)) == field(f, (0, 0)) == a
    assert field(f, (3, 7)) == -a
    with pytest.raises(ValueError):
        FieldSpec.from_map(2, {(0, 0): 0.1})
    with pytest.raises(ValueError):
        FieldSpec(2, (0.2, -0.2, 0.0, 0.0), 0.1)


# --- tails ---

def sigma_oracle_powerlike(R):
    """sum over |k|_inf >= R of |k|_1^{-2.5}: 4 zeta(1.5) minus the inner shells."""
    total = 4.0 * zeta(1.5)
    inner = 0.0
    for k in offsets(2, R):
        n = abs(int(k[0])) + abs(int(k[1]))
        if n:
            inner += n ** -2.5
    return total - inner


@pytest.mark.parametrize("R", [1, 2, 3, 7])
def test_sigma_powerlike_closed_form(R):
    v = sigma(PowerLike(1, 1, 0.5), R)
    ref = sigma_oracle_powerlike(R)
    assert v >= ref
    assert v <= ref * (1 + 1e-3)


def test_sigma_truncated_and_guards():
    spec = Truncated(PowerLike(1, 1, 0.5), 5)
    assert sigma(spec, 6) == 0.0
    assert sigma(spec, 5) > 0.0
    with pytest.raises(ValueError):
        sigma(spec, 0)
    with pytest.raises(ValueError):
        Sigma(spec, 0)


def test_sigma_analytic_bound():
    spec = PowerLike(1, 1, 0.5)
    c = linf_sphere_constant(2, 0.5)
    for R in (2, 4, 8, 16, 64):
        # the l_inf sphere of radius m carries at most ~c m^{1} lattice mass at |k|_1 >= m
        assert sigma(spec, R) <= c * spec.Lambda * (R - 1) ** -0.5 / 0.5


@pytest.mark.parametrize("spec", [PowerLike(1, 1, 0.5), Truncated(PowerLike(1, 1, 0.5), 200),
                                  PeriodicTable.random(2, 0.5, 0.5, 2.0, np.random.default_rng(2))],
                         ids=["powerlike", "truncated", "periodic"])
def test_sigma_strictly_decreasing(spec):
    vals = [sigma(spec, 2 ** k) for k in range(1, 8)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_Sigma_examples():
    pl = PowerLike(1, 1, 0.5)
    assert Sigma(pl, 1) == sigma(pl, 1)
    for R in (4, 8, 16, 32):
        assert Sigma(pl, 2 * R) < Sigma(pl, R)
    tr = Truncated(PowerLike(1, 1, 0.5), 3)
    num = math.fsum(sigma(tr, m) for m in range(1, 4))
    for R in (4, 5, 6):
        assert Sigma(tr, R) == pytest.approx(num / R, rel=1e-15)
        assert Sigma(tr, R + 1) < Sigma(tr, R)


@pytest.mark.xfail(strict=True, reason="Sigma decays like R^-s; with s = 0.5 the ratio over a factor 2^7 is ~0.11")
def test_Sigma_tenfold_decay_powerlike():
    pl = PowerLike(1, 1, 0.5)
    assert Sigma(pl, 2 ** 7) < 0.1 * Sigma(pl, 1)


# --- discretized kernels ---

def tent_integral_polar(delta, s=0.5):
    """int over unit cells Q(0) x Q(delta) of |x - y|^{-2-s} for touching cells, d = 2.

    Substituting z = y - x leaves a tent weight prod (1 - |z_n - delta_n|)_+ on
    the box delta + [-1, 1]^2; the singular point z = 0 sits on its boundary and
    polar coordinates around it make the integrand bounded.
    """
    dx, dy = delta

    def weight(z1, z2):
        return max(0.0, 1 - abs(z1 - dx)) * max(0.0, 1 - abs(z2 - dy))

    def rmax(t):
        c, sn = math.cos(t), math.sin(t)
        out = []
        for comp, lo, hi in ((c, dx - 1, dx + 1), (sn, dy - 1, dy + 1)):
            if comp > 1e-15:
                out.append(hi / comp)
            elif comp < -1e-15:
                out.append(lo / comp)
        return max(0.0, min(out))

    def f(r, t):
        if r == 0.0:
            return 0.0
        return weight(r * math.cos(t), r * math.sin(t)) * r ** (-1 - s)

    # kinks of rmax at the box corners
    corners = sorted({math.atan2(b, a) for a in (dx - 1, dx + 1) for b in (dy - 1, dy + 1)} | {-math.pi, math.pi})
    total = 0.0
    for t0, t1 in zip(corners, corners[1:]):
        val, _ = integrate.dblquad(f, t0, t1, 0.0, rmax, epsabs=1e-12, epsrel=1e-10)
        total += val
    return total


def cell_pair_qmc(K, eps, i, j, m=20):
    """eps^{-d+s} int int K over two separated cells by scrambled Sobol points."""
    d = K.d
    pts = qmc.Sobol(2 * d, scramble=True, seed=7).random_base2(m)
    x = eps * (np.asarray(i) - 0.5 + pts[:, :d])
    y = eps * (np.asarray(j) - 0.5 + pts[:, d:])
    return float(np.mean(K(x, y))) * eps ** (2 * d) * eps ** (-d + K.s)


# quadpack flags roundoff near the corner singularity; the 1e-3 tolerance absorbs it
@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
@pytest.mark.parametrize("delta", [(1, 0), (1, 1), (0, -1)])
def test_touching_cells_against_polar_oracle(delta):
    J = discretize(PowerKernel(2, 0.5), 1.0)
    v = J.coupling((0, 0), delta)
    assert v == pytest.approx(tent_integral_polar(delta), rel=1e-3)


def test_separated_cells_against_qmc():
    K = PowerKernel(2, 0.5)
    J = discretize(K, 1.0)
    assert J.coupling((0, 0), (2, 0)) == pytest.approx(cell_pair_qmc(K, 1.0, (0, 0), (2, 0)), rel=1e-3)
    assert J.coupling((0, 0), (3, -2)) == pytest.approx(cell_pair_qmc(K, 1.0, (0, 0), (3, -2)), rel=1e-3)


def test_modulated_cells_against_qmc():
    K = ModulatedKernel(2, 0.5, 1.0, 0.5)
    J = discretize(K, 0.5)
    for i, j in [((0, 0), (2, 0)), ((1, 0), (3, 3)), ((1, 1), (-2, 1))]:
        assert J.coupling(i, j) == pytest.approx(cell_pair_qmc(K, 0.5, i, j), rel=1e-3)


def test_discretization_symmetric_and_scale_free():
    K = ModulatedKernel(2, 0.5, 1.0, 0.5)
    J = discretize(K, 0.5)
    rng = np.random.default_rng(4)
    i = rng.integers(-6, 6, size=(200, 2))
    j = i + rng.integers(-4, 5, size=(200, 2))
    assert np.array_equal(J.values(i, j - i), J.values(j, i - j))
    P = PowerKernel(2, 0.5)
    assert np.array_equal(discretize(P, 1.0).table(4), discretize(P, 0.25).table(4))
    with pytest.raises(ValueError):
        discretize(P, 0.0)


@pytest.mark.parametrize("eps", [1.0, 0.5, 0.25])
def test_discretization_power_bounds(eps):
    K = ModulatedKernel(2, 0.5, 1.0, 0.5)
    J = discretize(K, eps)
    T = J.table(9)
    offs = offsets(2, 9)
    nz = np.any(offs != 0, axis=1)
    r = np.sqrt((offs[nz] ** 2).sum(axis=1)) ** -2.5
    assert np.all(T[:, nz] >= K.lambda_star * r)
    assert np.all(T[:, nz] <= K.Lambda_star * r)
    assert K.lambda_star == pytest.approx((2 * math.sqrt(2)) ** -2.5 * K.lam)
