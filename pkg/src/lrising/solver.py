"""Exact minimization of H_Gamma and G by brute force and by minimum cut.

Every instance is reduced to the quadratic pseudo-boolean form

    E(x) = const + sum_a (x_a ? up_a : um_a) + sum_{a<b} w_ab [x_a != x_b],

with x_a = True meaning spin +1 and all w_ab >= 0.  Couplings and fields are
quantized to integers (scale 2^40 by default) before any summation, so that
brute force and max-flow minimize the very same integer energy and ties are
exact.  Reported values use the unquantized float coefficients.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from ortools.graph.python import max_flow

from .hamiltonian import (Configuration, PeriodicBoundary, _frame, _mask, as_sites,
                          default_radius, relevant_representatives)
from .kernels import CouplingSpec, FieldSpec, residue_index, sigma
from .lattice import QuotientLattice, SlabSpec, compare_level, offsets, site_keys

BRUTE_FORCE_LIMIT = 24
DEFAULT_PRECISION = 2.0 ** -40
_INT_BUDGET = 2 ** 61


class SolverError(RuntimeError):
    pass


@dataclass(eq=False)
class Instance:
    free_sites: np.ndarray
    objective: str  # "restricted" or "periodic"
    spec: CouplingSpec
    field: Optional[FieldSpec]
    rho: int
    scale: float
    pi: np.ndarray
    pj: np.ndarray
    w_int: np.ndarray
    up_int: np.ndarray
    um_int: np.ndarray
    const_int: int
    w: np.ndarray
    up: np.ndarray
    um: np.ndarray
    const: float
    base: Optional[Configuration] = None  # restricted: the configuration outside Gamma
    q: Optional[QuotientLattice] = None
    slab: Optional[SlabSpec] = None
    tail_bound: float = 0.0
    meta: dict = dc_field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.free_sites)

    def energy_int(self, x) -> int:
        x = np.asarray(x, dtype=bool)
        e = int(self.const_int) + int(np.where(x, self.up_int, self.um_int).sum())
        if len(self.pi):
            e += int(self.w_int[x[self.pi] != x[self.pj]].sum())
        return e

    def energy(self, x) -> float:
        x = np.asarray(x, dtype=bool)
        parts = [self.const, math.fsum(np.where(x, self.up, self.um).tolist())]
        if len(self.pi):
            parts.append(math.fsum(self.w[x[self.pi] != x[self.pj]].tolist()))
        return math.fsum(parts)

    def configuration(self, x) -> Configuration:
        spins = np.where(np.asarray(x, dtype=bool), 1, -1).astype(np.int8)
        if self.objective == "periodic":
            return Configuration.periodic(self.q, self.slab, self.free_sites, spins)
        base = self.base
        keep = ~np.isin(base.keys, site_keys(self.free_sites)) if len(base.keys) else np.zeros(0, bool)
        sites = np.concatenate([base.sites[keep], self.free_sites])
        vals = np.concatenate([base.spins[keep], spins])
        return Configuration(sites, vals, base.closure)

    def assignment(self, u: Configuration) -> np.ndarray:
        return u.value_at(self.free_sites) > 0

    def to_dict(self) -> dict:
        return dict(objective=self.objective, spec=repr(self.spec), rho=self.rho, scale=self.scale,
                    free_sites=self.free_sites.tolist(), pairs=np.stack([self.pi, self.pj], 1).tolist(),
                    weights=[int(x) for x in self.w_int], unary_plus=[int(x) for x in self.up_int],
                    unary_minus=[int(x) for x in self.um_int], const=int(self.const_int))

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.free_sites, self.pi, self.pj, self.w_int, self.up_int, self.um_int):
            h.update(np.ascontiguousarray(arr, dtype=np.int64).tobytes())
        h.update(str(int(self.const_int)).encode())
        return h.hexdigest()


@dataclass(eq=False)
class CutGraph:
    n_nodes: int
    source: int
    sink: int
    tails: np.ndarray
    heads: np.ndarray
    capacities: np.ndarray
    offset: int

    def cut_value(self, x) -> int:
        """Capacity of the cut with {source} + {a : x_a} on the source side."""
        side = np.concatenate([np.asarray(x, dtype=bool), [True, False]])
        return int(self.capacities[side[self.tails] & ~side[self.heads]].sum())


@dataclass(eq=False)
class Minimizer:
    config: Configuration
    value: float
    certificate: dict
    assignment: np.ndarray
    energy_int: int


# --- quantization -----------------------------------------------------------

def _choose_scale(total_abs: float, precision: float) -> float:
    S = 1.0 / precision
    while total_abs * S > _INT_BUDGET and S > 1:
        S /= 2.0
    return S


def _quantize_field(field: Optional[FieldSpec], S: float):
    if field is None or field.is_zero:
        return None
    t = np.asarray(field.table)
    q = np.rint(t * S).astype(np.int64)
    # restore exact zero flux after rounding
    err = int(q.sum())
    if err:
        k = int(np.argmax(np.abs(q)))
        q[k] -= err
    return q


# --- instance construction -------------------------------------------------

def _live_offsets(T, d, rho):
    offs = offsets(d, rho)
    live = np.nonzero(np.any(T != 0, axis=0))[0]
    return live[np.any(offs[live] != 0, axis=1)], offs


def _collapse_pairs(a, b, wi, wf, n):
    if len(a) == 0:
        e = np.zeros(0, dtype=np.int64)
        return e, e, e, np.zeros(0)
    key = a.astype(np.int64) * n + b
    order = np.argsort(key, kind="stable")
    key, wi, wf = key[order], wi[order], wf[order]
    uk, start = np.unique(key, return_index=True)
    wi_s = np.add.reduceat(wi, start)
    wf_s = np.array([math.fsum(c) for c in np.split(wf, start[1:])]) if len(uk) < len(key) else wf
    keep = wi_s > 0
    return (uk // n)[keep], (uk % n)[keep], wi_s[keep], np.asarray(wf_s)[keep]


def restricted_instance(u: Configuration, Gamma, spec: CouplingSpec, field: Optional[FieldSpec] = None,
                        rho: Optional[int] = None, precision: float = DEFAULT_PRECISION) -> Instance:
    """Minimize H_Gamma over configurations agreeing with u outside Gamma."""
    G = as_sites(Gamma, u.d)
    G = G[np.argsort(site_keys(G), kind="stable")] if len(G) else G
    n = len(G)
    rho = default_radius(spec) if rho is None else int(rho)
    d = u.d
    T = spec.table(rho)
    live, offs = _live_offsets(T, d, rho)
    S = _choose_scale(4.0 * max(n, 1) * float(np.abs(T).sum(axis=1).max()) * 2 + _field_mass(field, n), precision)
    Ti = np.rint(T * S).astype(np.int64)
    up_i = np.zeros(n, dtype=np.int64)
    um_i = np.zeros(n, dtype=np.int64)
    up_f = np.zeros(n)
    um_f = np.zeros(n)
    pa, pb, pwi, pwf = [], [], [], []
    if n:
        lo, shape = _frame(G, rho)
        grid = u.materialize(lo, shape)
        idx = np.full(shape, -1, dtype=np.int64)
        idx[tuple((G - lo).T)] = np.arange(n)
        res = residue_index(G, spec.period)
        chunk = max(1, 4_000_000 // n)
        up_parts, um_parts = [], []
        for c0 in range(0, len(live), chunk):
            ks = live[c0:c0 + chunk]
            nb = G[:, None, :] + offs[ks][None, :, :] - lo
            j = idx[tuple(np.moveaxis(nb, -1, 0))]
            s = grid[tuple(np.moveaxis(nb, -1, 0))]
            vi = Ti[res][:, ks]
            vf = T[res][:, ks]
            a = np.broadcast_to(np.arange(n)[:, None], j.shape)
            sel = (j > a) & (vi > 0)
            pa.append(a[sel]); pb.append(j[sel]); pwi.append(4 * vi[sel]); pwf.append(4 * vf[sel])
            fixed = j < 0
            plus_cost = fixed & (s < 0)  # neighbour -1 charges the +1 state
            minus_cost = fixed & (s > 0)
            up_i += (4 * vi * plus_cost).sum(axis=1)
            um_i += (4 * vi * minus_cost).sum(axis=1)
            up_parts.append(4 * vf * plus_cost)
            um_parts.append(4 * vf * minus_cost)
        if up_parts:
            up_f = np.array([math.fsum(r) for r in np.concatenate(up_parts, axis=1)])
            um_f = np.array([math.fsum(r) for r in np.concatenate(um_parts, axis=1)])
    pa = np.concatenate(pa) if pa else np.zeros(0, np.int64)
    pb = np.concatenate(pb) if pb else np.zeros(0, np.int64)
    pwi = np.concatenate(pwi) if pwi else np.zeros(0, np.int64)
    pwf = np.concatenate(pwf) if pwf else np.zeros(0)
    pi, pj, w_int, w = _collapse_pairs(pa, pb, pwi, pwf, max(n, 1))
    _add_field(field, G, S, up_i, um_i, up_f, um_f)
    tail = 0.0 if (spec.support is not None and spec.support < rho) else 4.0 * n * sigma(spec, rho)
    base = u
    return Instance(G, "restricted", spec, field, rho, S, pi, pj, w_int, up_i, um_i, 0,
                    w, up_f, um_f, 0.0, base=base, tail_bound=tail)


def _field_mass(field, n):
    if field is None or field.is_zero:
        return 0.0
    return 2.0 * n * max(abs(x) for x in field.table)


def _add_field(field, sites, S, up_i, um_i, up_f, um_f):
    qf = _quantize_field(field, S)
    if qf is None or len(sites) == 0:
        return
    r = residue_index(sites, field.tau)
    hi = qf[r]
    hf = np.asarray(field.table)[r]
    up_i += hi
    um_i -= hi
    up_f += hf
    um_f -= hf


def periodic_instance(q: QuotientLattice, slab: SlabSpec, spec: CouplingSpec, field: Optional[FieldSpec] = None,
                      rho: Optional[int] = None, precision: float = DEFAULT_PRECISION) -> Instance:
    """Minimize G_{m,w}^{A,B} over admissible (m,w)-periodic configurations."""
    rho = default_radius(spec) if rho is None else int(rho)
    d = q.d
    free = q.fundamental_domain(slab)
    n = len(free)
    if n == 0:
        raise SolverError("empty free region: the slab contains no lattice sites")
    reps = relevant_representatives(q, slab, rho)
    n1 = q.direction.norm_l1
    fkeys = site_keys(free)
    T = spec.table(rho)
    live, offs = _live_offsets(T, d, rho)
    S = _choose_scale(4.0 * len(reps) * float(np.abs(T).sum(axis=1).max()) * 2 + _field_mass(field, n), precision)
    Ti = np.rint(T * S).astype(np.int64)
    up_i = np.zeros(n, dtype=np.int64)
    um_i = np.zeros(n, dtype=np.int64)
    upl, uml = [[] for _ in range(n)], [[] for _ in range(n)]
    const_i = 0
    const_parts = []
    pa, pb, pwi, pwf = [], [], [], []

    def classify(sites):
        dots = q.direction.dot(sites)
        below = compare_level(dots, n1, slab.A) < 0
        above = compare_level(dots, n1, slab.B) > 0
        idx = np.full(len(sites), -1, dtype=np.int64)
        inside = ~below & ~above
        if np.any(inside):
            rk = site_keys(q.representative(sites[inside]))
            pos = np.searchsorted(fkeys, rk)
            idx[inside] = pos
        return below, above, idx

    r_below, r_above, r_idx = classify(reps)
    res = residue_index(reps, spec.period)
    chunk = max(1, 4_000_000 // max(1, len(reps)))
    for c0 in range(0, len(live), chunk):
        ks = live[c0:c0 + chunk]
        nb = (reps[:, None, :] + offs[ks][None, :, :]).reshape(-1, d)
        nbelow, nabove, nidx = classify(nb)
        shape = (len(reps), len(ks))
        nbelow, nabove, nidx = nbelow.reshape(shape), nabove.reshape(shape), nidx.reshape(shape)
        vi = Ti[res][:, ks]
        vf = T[res][:, ks]
        src_free = r_idx >= 0
        # free rep -> free image: pair term 2J [x_a != x_b] per ordered pair
        a = np.broadcast_to(r_idx[:, None], shape)
        sel = src_free[:, None] & (nidx >= 0) & (nidx != a) & (vi > 0)
        lo_ = np.minimum(a[sel], nidx[sel])
        hi_ = np.maximum(a[sel], nidx[sel])
        pa.append(lo_); pb.append(hi_); pwi.append(2 * vi[sel]); pwf.append(2 * vf[sel])
        # free rep -> fixed site
        fp = src_free[:, None] & nbelow  # neighbour +1
        fm = src_free[:, None] & nabove  # neighbour -1
        # fixed rep -> free image
        gp = r_below[:, None] & (nidx >= 0)  # source +1
        gm = r_above[:, None] & (nidx >= 0)  # source -1
        for mask, target, store_i, store_l in ((fp, a, um_i, uml), (fm, a, up_i, upl),
                                               (gp, nidx, um_i, uml), (gm, nidx, up_i, upl)):
            if np.any(mask):
                t = target[mask]
                np.add.at(store_i, t, 2 * vi[mask])
                for tt, val in zip(t.tolist(), (2 * vf[mask]).tolist()):
                    store_l[tt].append(val)
        # fixed-fixed pairs of opposite signs
        cc = (r_below[:, None] & nabove) | (r_above[:, None] & nbelow)
        if np.any(cc):
            const_i += int(2 * vi[cc].sum())
            const_parts.extend((2 * vf[cc]).tolist())
    up_f = np.array([math.fsum(x) for x in upl])
    um_f = np.array([math.fsum(x) for x in uml])
    pa = np.concatenate(pa); pb = np.concatenate(pb)
    pwi = np.concatenate(pwi); pwf = np.concatenate(pwf)
    pi, pj, w_int, w = _collapse_pairs(pa, pb, pwi, pwf, n)
    _add_field(field, free, S, up_i, um_i, up_f, um_f)
    tail = 0.0 if (spec.support is not None and spec.support < rho) else 4.0 * n * sigma(spec, rho)
    return Instance(free, "periodic", spec, field, rho, S, pi, pj, w_int, up_i, um_i, const_i,
                    w, up_f, um_f, math.fsum(const_parts), q=q, slab=slab, tail_bound=tail)


# --- solvers -----------------------------------------------------------------

def brute_force(instance: Instance):
    """Exhaustive search; returns (min value, all minimizers in lexicographic order)."""
    n = instance.n
    if n > BRUTE_FORCE_LIMIT:
        raise SolverError(f"brute force is limited to {BRUTE_FORCE_LIMIT} free sites (got {n})")
    if n == 0:
        x = np.zeros(0, dtype=bool)
        return instance.energy(x), [_make(instance, x, {"kind": "brute_force"})]
    diff = instance.up_int - instance.um_int
    base = int(instance.const_int) + int(instance.um_int.sum())
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    best, arg = None, []
    step = 1 << min(n, 18)
    for k0 in range(0, 1 << n, step):
        ks = np.arange(k0, min(k0 + step, 1 << n), dtype=np.int64)
        X = ((ks[:, None] >> shifts[None, :]) & 1).astype(bool)
        E = base + X.astype(np.int64) @ diff
        for a, b, w in zip(instance.pi, instance.pj, instance.w_int):
            E += w * (X[:, a] != X[:, b])
        m = int(E.min())
        if best is None or m < best:
            best, arg = m, []
        if m == best:
            arg.extend(ks[E == m].tolist())
    mins = []
    for k in arg:
        x = ((k >> shifts) & 1).astype(bool)
        mins.append(_make(instance, x, {"kind": "brute_force"}))
    return mins[0].value, mins


def _make(instance, x, cert) -> Minimizer:
    return Minimizer(instance.configuration(x), instance.energy(x), cert, np.asarray(x, dtype=bool),
                     instance.energy_int(x))


def cut_graph(instance: Instance) -> CutGraph:
    n = instance.n
    s, t = n, n + 1
    up = instance.up_int.copy()
    um = instance.um_int.copy()
    base = np.minimum(up, um)
    up -= base
    um -= base
    offset = int(instance.const_int) + int(base.sum())
    nodes = np.arange(n, dtype=np.int64)
    tails = np.concatenate([np.full(n, s), nodes, instance.pi, instance.pj]).astype(np.int64)
    heads = np.concatenate([nodes, np.full(n, t), instance.pj, instance.pi]).astype(np.int64)
    caps = np.concatenate([um, up, instance.w_int, instance.w_int]).astype(np.int64)
    keep = caps > 0
    if np.any(caps < 0):
        raise SolverError("negative capacity: the instance is not submodular")
    if int(caps.sum()) >= _INT_BUDGET * 2:
        raise SolverError("capacity overflow; lower the precision")
    return CutGraph(n + 2, s, t, tails[keep], heads[keep], caps[keep], offset)


def _maxflow(instance: Instance):
    g = cut_graph(instance)
    smf = max_flow.SimpleMaxFlow()
    # registers both terminals even when one of them has no arcs
    smf.add_arc_with_capacity(g.source, g.sink, 0)
    if len(g.tails):
        smf.add_arcs_with_capacity(g.tails, g.heads, g.capacities)
    status = smf.solve(g.source, g.sink)
    if status != smf.OPTIMAL:
        raise SolverError(f"max-flow failed with status {status}")
    return g, smf


def minimal_minimizer(instance: Instance) -> Minimizer:
    """Minimizer with inclusion-minimal {u = +1}: the residual source side."""
    n = instance.n
    if n == 0:
        return _make(instance, np.zeros(0, bool), {"kind": "mincut", "max_flow": 0, "scale": instance.scale})
    g, smf = _maxflow(instance)
    side = np.zeros(n + 2, dtype=bool)
    src = np.asarray(smf.get_source_side_min_cut(), dtype=np.int64)
    side[src] = True
    x = side[:n]
    return _certify(instance, g, smf, x)


def maximal_minimizer(instance: Instance) -> Minimizer:
    """Minimizer with inclusion-maximal {u = +1}: complement of the residual sink side."""
    n = instance.n
    if n == 0:
        return _make(instance, np.zeros(0, bool), {"kind": "mincut", "max_flow": 0, "scale": instance.scale})
    g, smf = _maxflow(instance)
    side = np.ones(n + 2, dtype=bool)
    snk = np.asarray(smf.get_sink_side_min_cut(), dtype=np.int64)
    side[snk] = False
    return _certify(instance, g, smf, side[:n])


def _certify(instance, g, smf, x):
    flow = int(smf.optimal_flow())
    e = instance.energy_int(x)
    if e != flow + g.offset:
        raise SolverError("cut value does not reproduce the energy")
    return _make(instance, x, {"kind": "mincut", "max_flow": flow, "scale": instance.scale})


def mincut_solve(instance: Instance) -> Minimizer:
    return minimal_minimizer(instance)


def solve_constrained(omega, tau: int, m: int, slab: SlabSpec, spec: CouplingSpec,
                      field: Optional[FieldSpec] = None, rho: Optional[int] = None,
                      strict: bool = False) -> Minimizer:
    """The minimal minimizer u_{m,w}^{A,B} of G over the admissible class."""
    q = QuotientLattice.build(omega, tau, m)
    if not isinstance(slab, SlabSpec):
        slab = SlabSpec(*slab)
    inst = periodic_instance(q, slab, spec, field, rho)
    if strict and inst.tail_bound > 1e-6 * inst.n:
        raise SolverError(f"fold radius {inst.rho} insufficient: tail certificate {inst.tail_bound:.3g} "
                          f"exceeds 1e-6 |F| = {1e-6 * inst.n:.3g}")
    sol = minimal_minimizer(inst)
    sol.certificate["tail_bound"] = inst.tail_bound
    sol.certificate["rho"] = inst.rho
    sol.certificate["instance"] = inst.digest()
    return sol


def dump_instance(instance: Instance) -> str:
    return json.dumps(instance.to_dict(), sort_keys=True)
