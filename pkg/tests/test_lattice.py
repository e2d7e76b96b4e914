import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrising.hamiltonian import Configuration
from lrising.lattice import (Cube, Direction, QuotientLattice, SlabSpec, kernel_basis, l1_norm, linf_norm,
                             module_basis, translate, translate_config)


def primitive(v):
    v = tuple(int(x) for x in v)
    return any(v) and np.gcd.reduce(np.abs(v)) == 1


directions2 = st.tuples(st.integers(-6, 6), st.integers(-6, 6)).filter(primitive)
directions3 = st.tuples(st.integers(-4, 4), st.integers(-4, 4), st.integers(-4, 4)).filter(primitive)


def lattice_points(omega, tau, reach):
    """Brute-force enumeration of {k in tau Z^d : w.k = 0, |k|_inf <= reach}."""
    d = len(omega)
    pts = []
    for k in itertools.product(range(-reach, reach + 1), repeat=d):
        if any(x % tau for x in k):
            continue
        if sum(a * b for a, b in zip(k, omega)) == 0:
            pts.append(k)
    return pts


def in_span(k, basis):
    """Integer solve of k = sum c_b b for a small basis by enumeration."""
    r = range(-12, 13)
    for c in itertools.product(r, repeat=len(basis)):
        if tuple(sum(ci * b[n] for ci, b in zip(c, basis)) for n in range(len(k))) == tuple(k):
            return True
    return False


@pytest.mark.parametrize("s, l1, linf", [((0, 0), 0, 0), ((1, -1), 2, 1), ((3, -4, 0), 7, 4)])
def test_norms(s, l1, linf):
    assert l1_norm(s) == l1
    assert linf_norm(s) == linf


def test_cube_count():
    for d, ell in [(2, 0), (2, 3), (3, 2)]:
        c = Cube((0,) * d, ell)
        assert c.count() == (2 * ell + 1) ** d == len(c.sites())


def test_direction_rejects_non_primitive_and_zero():
    with pytest.raises(ValueError):
        Direction((2, 4))
    with pytest.raises(ValueError):
        Direction((0, 0))
    assert Direction.from_rational([Fraction(1, 2), Fraction(1, 3)]).omega == (3, 2)
    assert Direction((1, -2)).norm_l1 == 3


@pytest.mark.parametrize("omega, tau, expected", [((1, 0), 1, [(0, 1)]), ((1, 1), 2, [(2, -2)]),
                                                  ((2, 3), 1, [(3, -2)])])
def test_module_basis_examples(omega, tau, expected):
    basis = module_basis(omega, tau)
    assert basis == expected
    # enumeration oracle: every lattice point in the window is generated
    for k in lattice_points(omega, tau, 4 * tau):
        assert in_span(k, basis)


def test_module_basis_rejects_zero():
    with pytest.raises(ValueError):
        module_basis((0, 0), 1)


@given(directions2, st.integers(1, 4))
@settings(max_examples=60, deadline=None)
def test_module_basis_membership_2d(omega, tau):
    (b,) = module_basis(omega, tau)
    assert sum(x * w for x, w in zip(b, omega)) == 0
    assert all(x % tau == 0 for x in b)
    # primitive up to the factor tau, so it generates every kernel point
    assert np.gcd.reduce(np.abs(np.array(b) // tau)) == 1


@given(directions3)
@settings(max_examples=40, deadline=None)
def test_kernel_basis_3d(omega):
    B = np.array(kernel_basis(omega))
    assert B.shape == (2, 3)
    assert np.all(B @ np.array(omega) == 0)
    assert np.linalg.matrix_rank(B) == 2
    # the basis extends w-dual to a unimodular frame: the 2x2 minors are coprime
    minors = [int(round(np.linalg.det(B[:, [a, b]]))) for a, b in [(0, 1), (0, 2), (1, 2)]]
    assert np.gcd.reduce(np.abs(minors)) == 1


def coset_count_oracle(q, slab, box=12):
    """Distinct cosets of Z^d / L met by the slab, by pairwise membership tests."""
    w = q.direction
    reps = []
    for i in itertools.product(range(-box, box + 1), repeat=q.d):
        h = Fraction(sum(a * b for a, b in zip(i, w.omega)), w.norm_l1)
        if not slab.A <= h <= slab.B:
            continue
        if not any(q.contains(np.subtract(i, r)) for r in reps):
            reps.append(i)
    return len(reps)


def test_fundamental_domain_column():
    q = QuotientLattice.build((0, 1), 1, 1)
    F = q.fundamental_domain(SlabSpec(0, 2))
    assert sorted(map(tuple, F)) == [(0, 0), (0, 1), (0, 2)]
    assert coset_count_oracle(q, SlabSpec(0, 2)) == 3


def test_fundamental_domain_doubles_with_m():
    q = QuotientLattice.build((0, 1), 1, 2)
    F = q.fundamental_domain(SlabSpec(0, 2))
    assert len(F) == 6
    assert len({x for x, _ in map(tuple, F)}) == 2


def test_empty_slab_rejected():
    with pytest.raises(ValueError):
        SlabSpec(0, -1)
    with pytest.raises(ValueError):
        SlabSpec(0, float("inf"))


@pytest.mark.parametrize("omega, tau, m, A, B", [((1, 1), 2, 1, 0, 3), ((1, 2), 1, 2, -1, 1), ((2, 3), 1, 1, 0, 2),
                                                 ((1, -1), 1, 3, Fraction(1, 2), 2)])
def test_fundamental_domain_oracle(omega, tau, m, A, B):
    q = QuotientLattice.build(omega, tau, m)
    slab = SlabSpec(A, B)
    F = q.fundamental_domain(slab)
    assert len(F) == coset_count_oracle(q, slab)
    for a, b in itertools.combinations(F, 2):
        assert not q.contains(a - b)


@given(directions2, st.integers(1, 3), st.integers(1, 3),
       st.lists(st.tuples(st.integers(-30, 30), st.integers(-30, 30)), min_size=1, max_size=10))
@settings(max_examples=60, deadline=None)
def test_representative_is_coset_invariant(omega, tau, m, pts):
    q = QuotientLattice.build(omega, tau, m)
    G = q.generators
    for p in pts:
        p = np.array(p)
        r = q.representative(p)
        assert q.contains(p - r)
        for g in G:
            assert np.array_equal(q.representative(p + 3 * g), r)
            assert np.array_equal(q.representative(p - g), r)


@given(directions2, st.integers(1, 3), st.integers(1, 3))
@settings(max_examples=40, deadline=None)
def test_domain_scales_with_m(omega, tau, m):
    # a slab whose height range is a whole number of lattice layers is L-invariant
    w = Direction(omega)
    slab = SlabSpec(0, Fraction(3 * tau, 1))
    n1 = len(QuotientLattice.build(w, tau, 1).fundamental_domain(slab))
    nm = len(QuotientLattice.build(w, tau, m).fundamental_domain(slab))
    assert nm == m * n1


def test_fundamental_domain_3d_scaling():
    slab = SlabSpec(0, 2)
    n1 = len(QuotientLattice.build((1, 1, 1), 1, 1).fundamental_domain(slab))
    n2 = len(QuotientLattice.build((1, 1, 1), 1, 2).fundamental_domain(slab))
    assert n2 == 4 * n1


def test_translate():
    assert translate((1, 2), (0, 0)) == (1, 2)
    assert translate((1, 2), (-3, 1)) == (-2, 3)


def test_translate_config():
    u = Configuration.half_space((0, 1))
    box = Cube((0, 0), 2).sites()
    assert np.array_equal(translate_config(u, (0, 0)).value_at(box), u.value_at(box))
    up = translate_config(u, (0, 1))
    # (T_k u)_i = u_{i-k}: the +1 region now ends at height 1
    expected = np.where(box[:, 1] <= 1, 1, -1)
    assert np.array_equal(up.value_at(box), expected)
    rng = np.random.default_rng(3)
    g = rng.choice(np.array([-1, 1], dtype=np.int8), size=(5, 5))
    v = Configuration.from_grid((-2, -2), g, Configuration.constant(1).closure)
    back = translate_config(translate_config(v, (2, -1)), (-2, 1))
    assert np.array_equal(back.value_at(box), v.value_at(box))
