"""Fast invariant suite behind ``lrising verify``.

Each check returns (count, slack) where slack >= 0 means the invariant
held with that margin; a negative slack is a failure.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
import numpy as np

from .config import RunConfig
from .hamiltonian import (Configuration, energy_delta, interaction_energy, max_config, min_config,
                          periodic_functional)
from .kernels import (AppendixB, PeriodicTable, PowerKernel, PowerLike, Truncated, discretize, sigma)
from .lattice import Cube, QuotientLattice, SlabSpec, offsets
from .perimeter import PiecewiseConstantFunction, coarea_check, hamiltonian_perimeter_identity
from .planelike import birkhoff_check, default_shifts, doubling_check, translation_check
from .solver import brute_force, minimal_minimizer, periodic_instance, restricted_instance, solve_constrained


@dataclass
class CheckResult:
    name: str
    count: int
    slack: float
    passed: bool

    def row(self):
        return [self.name, self.count, self.slack, "pass" if self.passed else "fail"]


def random_instance(rng, max_sites=12):
    kind = int(rng.integers(4))
    if kind == 0:
        spec = PowerLike(1.0, 1.0, float(rng.uniform(0.2, 0.9)))
    elif kind == 1:
        spec = Truncated(PowerLike(1.0, 1.0, 0.5), int(rng.integers(1, 4)))
    elif kind == 2:
        spec = PeriodicTable.random(2, 0.5, 0.5, 2.0, rng)
    else:
        spec = AppendixB(5, float(rng.uniform(1, 50)), 0.5)
    side = int(rng.integers(1, 4))
    h = int(rng.integers(1, max(2, max_sites // side) + 1))
    h = min(h, max_sites // side)
    G = np.array([(x, y) for x in range(side) for y in range(h)], dtype=np.int64)
    grid = rng.choice(np.array([-1, 1], dtype=np.int8), size=(side + 8, h + 8))
    u = Configuration.from_grid((-4, -4), grid, Configuration.half_space((0, 1)).closure)
    return restricted_instance(u, G, spec, None, rho=5)


def check_oracle(cfg: RunConfig, rng, n=40):
    slack = np.inf
    for _ in range(n):
        inst = random_instance(rng)
        v, mins = brute_force(inst)
        mm = minimal_minimizer(inst)
        pm = np.logical_and.reduce([m.assignment for m in mins])
        s = 1e-9 - abs(v - mm.value)
        if not np.array_equal(pm, mm.assignment):
            s = -1.0
        slack = min(slack, s)
    return n, slack


def check_lattice(cfg: RunConfig, rng, n=100):
    spec = Truncated(PowerLike(1.0, 1.0, 0.5), 3)
    G = Cube((0, 0), 2).sites()
    slack = np.inf
    for _ in range(n):
        gu = rng.choice(np.array([-1, 1], dtype=np.int8), size=(5, 5))
        gv = rng.choice(np.array([-1, 1], dtype=np.int8), size=(5, 5))
        cl = Configuration.constant(1).closure
        u = Configuration.from_grid((-2, -2), gu, cl)
        v = Configuration.from_grid((-2, -2), gv, cl)
        a = interaction_energy(u, G, G, spec) + interaction_energy(v, G, G, spec)
        b = interaction_energy(min_config(u, v), G, G, spec) + interaction_energy(max_config(u, v), G, G, spec)
        slack = min(slack, a - b + 1e-10)
    return n, slack


def check_doubling(cfg: RunConfig, rng):
    spec = cfg.coupling_spec(cfg.truncation or 4 * cfg.tau)
    ok, _ = doubling_check(cfg.omega, cfg.tau, SlabSpec(*cfg.slab), spec, cfg.field_spec(), cfg.m_list)
    return len(cfg.m_list), 0.0 if ok else -1.0


def check_birkhoff(cfg: RunConfig, rng):
    spec = cfg.coupling_spec(cfg.truncation or 4 * cfg.tau)
    sol = solve_constrained(cfg.omega, cfg.tau, 1, SlabSpec(*cfg.slab), spec, cfg.field_spec())
    ok, bad = birkhoff_check(sol.config, cfg.omega, cfg.tau)
    return len(default_shifts(cfg.d, cfg.tau)), 0.0 if ok else -float(len(bad))


def check_translation(cfg: RunConfig, rng):
    spec = cfg.coupling_spec(cfg.truncation or 4 * cfg.tau)
    ks = [k for k in itertools.product((-1, 0, 1), repeat=cfg.d)]
    bad = 0
    for k in ks:
        k = cfg.tau * np.array(k)
        if not translation_check(cfg.omega, cfg.tau, SlabSpec(*cfg.slab), spec, k, cfg.field_spec()):
            bad += 1
    return len(ks), -float(bad) if bad else 0.0


def check_local_minimality(cfg: RunConfig, rng):
    spec = cfg.coupling_spec(cfg.truncation or 4 * cfg.tau)
    slab = SlabSpec(*cfg.slab)
    sol = solve_constrained(cfg.omega, cfg.tau, 1, slab, spec, cfg.field_spec())
    q = QuotientLattice.build(cfg.omega, cfg.tau, 1)
    F = q.fundamental_domain(slab)
    slack, count = np.inf, 0
    for r in (1, 2):
        for S in itertools.combinations(range(len(F)), r):
            if count >= 400:
                break
            flips = F[list(S)]
            dE = energy_delta(sol.config, flips, flips, spec, cfg.field_spec(), rho=spec.support + 1)
            slack = min(slack, dE + 1e-9)
            count += 1
    return count, slack


def check_couplings(cfg: RunConfig, rng, n=2000):
    spec = PeriodicTable.random(2, 0.5, 0.5, 2.0, rng)
    i = rng.integers(-20, 20, size=(n, 2))
    j = rng.integers(-20, 20, size=(n, 2))
    j[np.all(i == j, axis=1)] += 1
    a = spec.values(i, j - i)
    b = spec.values(j, i - j)
    c = spec.values(i + np.array([2, 0]), j - i)
    ok = np.array_equal(a, b) and np.array_equal(a, c)
    return n, 0.0 if ok else -1.0


def check_sigma(cfg: RunConfig, rng):
    spec = PowerLike(1.0, 1.0, 0.5)
    vals = [sigma(spec, 2 ** k) for k in range(1, 8)]
    return len(vals), float(min(a - b for a, b in zip(vals, vals[1:])))


def check_discretization(cfg: RunConfig, rng):
    K = PowerKernel(2, 0.5)
    slack = np.inf
    n = 0
    for eps in (1.0, 0.5):
        T = discretize(K, eps).table(5)[0]
        offs = offsets(2, 5)
        nz = np.any(offs != 0, axis=1)
        r = np.sqrt(np.sum(offs[nz] ** 2, axis=1)) ** (-2.5)
        slack = min(slack, float(np.min(T[nz] - K.lambda_star * r)), float(np.min(K.Lambda_star * r - T[nz])))
        n += int(nz.sum())
    return n, slack


def check_identity(cfg: RunConfig, rng, n=5):
    K = PowerKernel(2, 0.5)
    slack = np.inf
    for _ in range(n):
        g = rng.choice(np.array([-1, 1], dtype=np.int8), size=(7, 7))
        u = Configuration.from_grid((-3, -3), g, Configuration.constant(1).closure)
        rep = hamiltonian_perimeter_identity(u, 0.5, 3, K, rho=12)
        tol = 1e-9 * max(rep.lhs, 1.0)
        slack = min(slack, tol - rep.gap, tol - 4 * rep.factor4_gap)
    return n, slack


def check_coarea(cfg: RunConfig, rng, n=5):
    K = PowerKernel(2, 0.5)
    slack = np.inf
    for _ in range(n):
        k = int(rng.integers(2, 6))
        levels = np.sort(rng.uniform(-1, 1, size=k))
        v = rng.choice(levels, size=(10, 10))
        f = PiecewiseConstantFunction(0.5, (0, 0), v, 0.0)
        lhs, rhs = coarea_check(f, Cube((5, 5), 4), K)
        slack = min(slack, 1e-9 * max(lhs, 1e-300) - abs(lhs - rhs))
    return n, slack


def check_fundamental_domain(cfg: RunConfig, rng):
    q = QuotientLattice.build(cfg.omega, cfg.tau, 2)
    F = q.fundamental_domain(SlabSpec(*cfg.slab))
    reps = q.representative(F)
    ok = len(np.unique(reps, axis=0)) == len(F) and np.array_equal(reps, F)
    return len(F), 0.0 if ok else -1.0


def check_minimal_membership(cfg: RunConfig, rng):
    spec = cfg.coupling_spec(cfg.truncation or 4 * cfg.tau)
    q = QuotientLattice.build(cfg.omega, cfg.tau, 1)
    slab = SlabSpec(*cfg.slab)
    inst = periodic_instance(q, slab, spec, cfg.field_spec())
    sol = minimal_minimizer(inst)
    G = periodic_functional(sol.config, q, slab, spec, cfg.field_spec(), rho=inst.rho)
    return 1, 1e-9 * max(1.0, abs(G)) - abs(G - sol.value)


CHECKS: list = [
    ("min-cut agrees with brute force", check_oracle),
    ("minimum and maximum decrease the interaction", check_lattice),
    ("minimal minimizer attains the periodic minimum", check_minimal_membership),
    ("no symmetry breaking under period doubling", check_doubling),
    ("Birkhoff monotonicity of the minimal minimizer", check_birkhoff),
    ("translation covariance of constrained minimizers", check_translation),
    ("constrained minimizer is a local Hamiltonian minimizer", check_local_minimality),
    ("coupling symmetry and periodicity", check_couplings),
    ("tail function decreases", check_sigma),
    ("discretized kernel power-law bounds", check_discretization),
    ("Hamiltonian equals the continuum energy", check_identity),
    ("generalized coarea formula", check_coarea),
    ("fundamental domain representatives", check_fundamental_domain),
]


def run_all(cfg: RunConfig, checks=None) -> list:
    out = []
    for name, fn in (checks or CHECKS):
        rng = np.random.default_rng(cfg.seed)
        count, slack = fn(cfg, rng)
        out.append(CheckResult(name, int(count), float(slack), bool(slack >= 0)))
    return out
