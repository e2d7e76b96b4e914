import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrising.hamiltonian import Configuration, energy_delta, periodic_functional, restricted_hamiltonian
from lrising.kernels import AppendixB, FieldSpec, PeriodicTable, PowerLike, Truncated
from lrising.lattice import QuotientLattice, SlabSpec, box_sites
from lrising.solver import (SolverError, brute_force, cut_graph, dump_instance, maximal_minimizer, mincut_solve,
                            minimal_minimizer, periodic_instance, restricted_instance, solve_constrained)

NN = Truncated(PowerLike(1, 1, 0.5), 1)


def spec_zoo(rng):
    return [Truncated(PowerLike(1, 1, float(rng.uniform(0.2, 0.9))), int(rng.integers(1, 4))),
            PowerLike(1.0, 1.0, 0.5),
            PeriodicTable.random(2, 0.5, 0.5, 2.0, rng),
            AppendixB(5, float(rng.uniform(1, 100)), 0.5)]


def small_restricted(seed):
    rng = np.random.default_rng(seed)
    spec = spec_zoo(rng)[seed % 4]
    w, h = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    G = box_sites((0, 0), (w, h))
    g = rng.choice(np.array([-1, 1], dtype=np.int8), size=(w + 8, h + 8))
    u = Configuration.from_grid((-4, -4), g, Configuration.constant(1).closure)
    fld = None
    if seed % 3 == 0 and spec.period in (1, 2):
        fld = FieldSpec.from_map(2, {(0, 0): 0.3, (1, 0): -0.3, (0, 1): -0.2, (1, 1): 0.2})
    return u, G, spec, fld


def enumerate_H(u, G, inst, spec, fld, rho):
    """Every assignment of Gamma scored by the independent Hamiltonian evaluator."""
    out = []
    for bits in itertools.product((-1, 1), repeat=len(G)):
        flips = G[u.value_at(G) != np.asarray(bits)]
        v = u.flipped(flips) if len(flips) else u
        out.append((restricted_hamiltonian(v, G, spec, fld, rho=rho).total, inst.assignment(v)))
    return out


@given(st.integers(0, 100_000))
@settings(max_examples=60, deadline=None)
def test_mincut_matches_independent_enumeration(seed):
    u, G, spec, fld = small_restricted(seed)
    rho = 5
    inst = restricted_instance(u, G, spec, fld, rho=rho)
    sol = minimal_minimizer(inst)
    scores = enumerate_H(u, G, inst, spec, fld, rho)
    best = min(s for s, _ in scores)
    assert sol.value == pytest.approx(best, abs=1e-9)
    ties = [x for s, x in scores if s <= best + 1e-9]
    assert np.array_equal(sol.assignment, np.logical_and.reduce(ties))
    assert np.array_equal(maximal_minimizer(inst).assignment, np.logical_or.reduce(ties))
    # reported value is the Hamiltonian of the returned configuration
    assert restricted_hamiltonian(sol.config, G, spec, fld, rho=rho).total == pytest.approx(sol.value, abs=1e-9)


@given(st.integers(0, 100_000))
@settings(max_examples=60, deadline=None)
def test_mincut_matches_brute_force(seed):
    u, G, spec, fld = small_restricted(seed)
    inst = restricted_instance(u, G, spec, fld, rho=4)
    v, mins = brute_force(inst)
    sol = minimal_minimizer(inst)
    assert abs(sol.value - v) <= 1e-9
    assert np.array_equal(sol.assignment, np.logical_and.reduce([m.assignment for m in mins]))
    for m in mins:
        assert m.value == pytest.approx(v, abs=1e-12)
    # lattice closure of the minimizer set
    for a, b in itertools.combinations(mins[:6], 2):
        for x in (a.assignment & b.assignment, a.assignment | b.assignment):
            assert inst.energy_int(x) == mins[0].energy_int


def test_brute_force_order_and_guard():
    q = QuotientLattice.build((0, 1), 1, 1)
    inst = periodic_instance(q, SlabSpec(0, 2), NN)
    v, mins = brute_force(inst)
    keys = [int("".join("1" if b else "0" for b in m.assignment), 2) for m in mins]
    assert keys == sorted(keys)
    big = periodic_instance(QuotientLattice.build((0, 1), 1, 1), SlabSpec(0, 30), NN)
    with pytest.raises(SolverError):
        brute_force(big)


def test_empty_instance():
    u = Configuration.half_space((0, 1))
    inst = restricted_instance(u, np.zeros((0, 2), dtype=np.int64), NN)
    v, mins = brute_force(inst)
    assert v == 0.0 and len(mins) == 1
    assert minimal_minimizer(inst).value == 0.0


def test_column_monotone_interfaces():
    # closed slab 0 <= h <= 2 holds 3 sites; the monotone interfaces are the 4 step positions
    q = QuotientLattice.build((0, 1), 1, 1)
    slab = SlabSpec(0, 2)
    inst = periodic_instance(q, slab, NN)
    v, mins = brute_force(inst)
    assert len(mins) == 4
    for m in mins:
        x = m.assignment
        assert all(x[k] >= x[k + 1] for k in range(len(x) - 1))
    sol = minimal_minimizer(inst)
    assert not sol.assignment.any()
    assert sol.value == pytest.approx(v)
    assert periodic_functional(sol.config, q, slab, NN) == pytest.approx(v, abs=1e-12)


def test_all_plus_boundary():
    u = Configuration.constant(1)
    inst = restricted_instance(u, box_sites((0, 0), (3, 3)), Truncated(PowerLike(1, 1, 0.5), 3))
    sol = mincut_solve(inst)
    assert sol.value == 0.0 and sol.assignment.all()


@pytest.mark.parametrize("omega, tau, m, spec", [((0, 1), 1, 1, NN), ((1, 1), 2, 1, Truncated(PowerLike(1, 1, 0.5), 3)),
                                                 ((1, 2), 1, 1, Truncated(PowerLike(1, 1, 0.5), 4)),
                                                 ((1, 2), 2, 1, Truncated(PeriodicTable.random(
                                                     2, 0.5, 0.5, 2.0, np.random.default_rng(3)), 3))])
def test_periodic_instance_against_G(omega, tau, m, spec):
    q = QuotientLattice.build(omega, tau, m)
    slab = SlabSpec(0, 2)
    inst = periodic_instance(q, slab, spec)
    assert inst.n <= 16
    v, mins = brute_force(inst)
    sol = minimal_minimizer(inst)
    assert sol.value == pytest.approx(v, abs=1e-9)
    # the instance energy is the periodic functional, assignment by assignment
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.random(inst.n) < 0.5
        assert inst.energy(x) == pytest.approx(periodic_functional(inst.configuration(x), q, slab, spec), abs=1e-9)


def test_cut_graph_reproduces_energy():
    u, G, spec, fld = small_restricted(12)
    inst = restricted_instance(u, G, spec, fld, rho=4)
    g = cut_graph(inst)
    assert np.all(g.capacities >= 0)
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.random(inst.n) < 0.5
        assert g.cut_value(x) + g.offset == inst.energy_int(x)


def test_solve_constrained_flat_and_doubling():
    slab = SlabSpec(0, 2)
    a = solve_constrained((0, 1), 1, 1, slab, NN)
    b = solve_constrained((0, 1), 1, 2, slab, NN)
    assert not a.assignment.any() and not b.assignment.any()
    sites = box_sites((-3, -2), (7, 7))
    assert np.array_equal(a.config.value_at(sites), b.config.value_at(sites))
    assert a.certificate["kind"] == "mincut" and len(a.certificate["instance"]) == 64


def test_solve_constrained_strict_tail():
    with pytest.raises(SolverError):
        solve_constrained((0, 1), 1, 1, SlabSpec(0, 2), PowerLike(1, 1, 0.5), rho=4, strict=True)
    sol = solve_constrained((0, 1), 1, 1, SlabSpec(0, 2), PowerLike(1, 1, 0.5), rho=4)
    assert sol.certificate["tail_bound"] > 0


def test_appendixB_interface_deviates():
    spec = Truncated(AppendixB(9, 100.0, 0.5), 9)
    sol = solve_constrained((1, 2), 9, 1, SlabSpec(0, 9), spec)
    from lrising.planelike import interface_width
    q = QuotientLattice.build((1, 2), 9, 1)
    width, empty = interface_width(sol.config, (1, 2), q.fundamental_domain(SlabSpec(-1, 10)))
    assert not empty and width >= 1


def test_local_minimality_small_flips():
    spec = Truncated(PowerLike(1, 1, 0.5), 3)
    rng = np.random.default_rng(8)
    G = box_sites((0, 0), (6, 6))
    u = Configuration.from_grid((-4, -4), rng.choice(np.array([-1, 1], dtype=np.int8), size=(14, 14)),
                                Configuration.constant(-1).closure)
    sol = minimal_minimizer(restricted_instance(u, G, spec))
    for r in (1, 2, 3):
        for S in itertools.combinations(range(len(G)), r):
            if r == 3 and S[0] > 4:
                break
            assert energy_delta(sol.config, G[list(S)], G, spec) >= -1e-9


def test_strip_determinism():
    spec = Truncated(PowerLike(1, 1, 0.5), 8)
    G = box_sites((0, 0), (200, 40))
    u = Configuration.half_space((1, 3), 20)
    a = minimal_minimizer(restricted_instance(u, G, spec))
    b = minimal_minimizer(restricted_instance(u, G, spec))
    assert a.certificate["kind"] == "mincut"
    assert a.value == b.value and np.array_equal(a.assignment, b.assignment)
    assert a.energy_int == b.energy_int


def test_dump_instance_roundtrip():
    u, G, spec, fld = small_restricted(5)
    inst = restricted_instance(u, G, spec, fld, rho=3)
    d = json.loads(dump_instance(inst))
    assert d["objective"] == "restricted"
    assert len(d["free_sites"]) == inst.n
    assert d == json.loads(dump_instance(restricted_instance(u, G, spec, fld, rho=3)))
