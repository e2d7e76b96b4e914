import math

import numpy as np
import pytest

from lrising import engine
from lrising.kernels import PeriodicTable, PowerLike, Truncated
from lrising.lattice import box_sites


def naive_pair_sum(spec, rho, lo, a, b):
    sites = box_sites(lo, a.shape)
    av, bv = a.reshape(-1), b.reshape(-1)
    total = []
    for x, i in enumerate(sites):
        if av[x] == 0:
            continue
        for y, j in enumerate(sites):
            if bv[y] == 0 or x == y or np.max(np.abs(j - i)) >= rho:
                continue
            total.append(av[x] * bv[y] * spec.coupling(i, j))
    return math.fsum(total)


@pytest.mark.parametrize("spec", [PowerLike(1, 1, 0.5), Truncated(PowerLike(1, 1, 0.4), 2),
                                  PeriodicTable.random(2, 0.5, 0.5, 2.0, np.random.default_rng(9))],
                         ids=["power", "truncated", "periodic"])
@pytest.mark.parametrize("method", ["direct", "fft"])
def test_pair_sum_against_double_loop(spec, method):
    rng = np.random.default_rng(1)
    lo = (-3, 2)
    rho = 4
    a = rng.normal(size=(7, 6))
    b = (rng.random((7, 6)) < 0.5).astype(float)
    got = engine.pair_sum(spec.table(rho), rho, lo, a, b, spec.period, method=method)
    assert got == pytest.approx(naive_pair_sum(spec, rho, lo, a, b), rel=1e-10, abs=1e-12)


def test_row_sums():
    spec = PeriodicTable.random(2, 0.5, 0.5, 2.0, np.random.default_rng(3))
    rng = np.random.default_rng(2)
    b = rng.normal(size=(6, 5))
    rho = 3
    c = engine.row_sums(spec.table(rho), rho, (1, 1), b, spec.period)
    a = np.zeros_like(b)
    for idx in [(0, 0), (3, 2), (5, 4)]:
        a[:] = 0
        a[idx] = 1
        assert c[idx] == pytest.approx(engine.pair_sum(spec.table(rho), rho, (1, 1), a, b, 2), rel=1e-12)


def test_pair_sum_shape_guard_and_zero():
    T = PowerLike(1, 1, 0.5).table(2)
    with pytest.raises(ValueError):
        engine.pair_sum(T, 2, (0, 0), np.ones((2, 2)), np.ones((3, 2)))
    assert engine.pair_sum(T, 2, (0, 0), np.zeros((3, 3)), np.ones((3, 3))) == 0.0
