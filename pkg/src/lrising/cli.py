"""Batch front end: ``lrising {solve,pipeline,appendixB,gamma,verify}``.

Exit codes: 0 success, 2 config error, 3 solver error, 4 invariant failure.
Outputs carry no timestamps, so reruns with the same config are byte-identical.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

import numpy as np

from . import invariants, reports
from .config import ConfigError, RunConfig
from .hamiltonian import periodic_report
from .lattice import QuotientLattice, SlabSpec
from .perimeter import disk, gamma_experiment, half_plane, square
from .planelike import (appendixB_sweep, birkhoff_check, check_mu, clean_ball, density_estimate,
                        doubling_check, energy_growth, interface, unconstrained_search)
from .solver import SolverError, solve_constrained

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4

CHECK_HEADER = ["check", "tau", "quantity", "value", "threshold", "status"]


class InvariantFailure(RuntimeError):
    pass


@contextmanager
def _mapper(threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            yield ex.map
    else:
        yield map


def _status(ok):
    return "pass" if ok else "fail"


# --- solve ------------------------------------------------------------------

def _grid_box(q: QuotientLattice, slab: SlabSpec, tau: int):
    """A window showing a few periods around the slab."""
    F = q.fundamental_domain(SlabSpec(slab.A - tau, slab.B + tau))
    lo, hi = F.min(axis=0), F.max(axis=0)
    span = max(8 * tau * q.m, 8)
    shape = np.maximum(hi - lo + 1, span)
    lo = np.minimum(lo, (lo + hi) // 2 - shape // 2)
    return lo, tuple(int(x) for x in shape)


def cmd_solve(cfg: RunConfig, out: str, threads: int = 1) -> int:
    cfg.validate(planelike=True)
    spec = cfg.coupling_spec()
    fld = cfg.field_spec()
    m = cfg.m_list[0] if cfg.m_list else 1
    slab = SlabSpec(*cfg.slab)
    try:
        sol = solve_constrained(cfg.omega, cfg.tau, m, slab, spec, fld)
    except (SolverError, MemoryError) as exc:
        raise SolverError(str(exc)) from exc
    q = QuotientLattice.build(cfg.omega, cfg.tau, m)
    rep = periodic_report(sol.config, q, slab, spec, fld, rho=sol.certificate["rho"])
    lo, shape = _grid_box(q, slab, cfg.tau)
    grid = sol.config.materialize(lo, shape)
    reports.ensure_dir(out)
    reports.write_text(os.path.join(out, "grid.txt"), reports.grid_text(lo, grid))
    reports.write_bytes(os.path.join(out, "grid.pgm"), reports.pgm_bytes(grid))
    audit = dict(certificate=sol.certificate, coupling=repr(spec),
                 quadrature=dict(kind="lattice coupling, no quadrature"),
                 free_sites=int(len(sol.assignment)), seed=cfg.seed)
    reports.write_json(os.path.join(out, "report.json"),
                       dict(config=cfg.as_dict(), energy=rep.as_dict(), value=sol.value, m=m, audit=audit))
    return EXIT_OK


# --- pipeline ---------------------------------------------------------------

def _pipeline_cell(cfg: RunConfig, tau: int) -> list:
    spec = cfg.coupling_spec(cfg.truncation or 8 * tau)
    fld = cfg.field_spec()
    sched = [tau * x for x in cfg.M_schedule] if cfg.M_schedule else None
    rows = []
    rep = unconstrained_search(cfg.omega, tau, spec, fld, sched)
    rows.append(["unconstrained slab found", tau, "M_over_tau", rep.M_over_tau, "", _status(rep.unconstrained)])
    rows.append(["interface width", tau, "width", rep.width, "", _status(True)])
    slab = SlabSpec(0, rep.M_used)
    ok, _ = doubling_check(cfg.omega, tau, slab, spec, fld, cfg.m_list)
    rows.append(["period doubling", tau, "patterns_equal", ok, True, _status(ok)])
    u = rep.config
    ok, bad = birkhoff_check(u, cfg.omega, tau)
    rows.append(["Birkhoff monotonicity", tau, "violations", len(bad), 0, _status(ok)])
    q = interface(u)[0]
    dens = density_estimate(u, q, cfg.ell_list)
    e = dens.fitted_exponent
    rows.append(["minority density", tau, "exponent", e, f"{cfg.d} +- 0.2", _status(abs(e - cfg.d) <= 0.2)])
    for ell in cfg.ell_list:
        *_, kappa = clean_ball(u, q, ell)
        rows.append(["clean ball", tau, f"kappa(ell={ell})", kappa, 0.1, _status(kappa >= 0.1)])
    return rows


def _growth_rows(cfg: RunConfig) -> list:
    spec = cfg.coupling_spec()
    ells = [l for l in cfg.ell_list if l >= 4]
    g = energy_growth(cfg.omega, spec, cfg.field_spec(), ells)
    target, tol = (cfg.d - cfg.s, 0.3) if spec.support is None else (cfg.d - 1, 0.2)
    return [["energy growth", "", "exponent", g.slope, f"{target:g} +- {tol:g}",
             _status(abs(g.slope - target) <= tol)]]


def cmd_pipeline(cfg: RunConfig, out: str, threads: int = 1) -> int:
    if len(cfg.ell_list) < 3:
        raise ConfigError("ell_list needs at least 3 values for the density and growth fits")
    cfg.validate(planelike=True)
    for tau in cfg.tau_list:
        check_mu(cfg.coupling_spec(), cfg.field_spec(), tau, cfg.d)
    with _mapper(threads) as mapper:
        cells = list(mapper(lambda t: _pipeline_cell(cfg, t), list(cfg.tau_list)))
    rows = [r for cell in cells for r in cell]
    ratios = [r[3] for r in rows if r[2] == "M_over_tau"]
    spread = max(ratios) / min(ratios) - 1.0
    rows.append(["M_over_tau plateau", "", "relative spread", spread, 0.5, _status(spread <= 0.5)])
    rows += _growth_rows(cfg)
    reports.ensure_dir(out)
    reports.write_csv(os.path.join(out, "pipeline.csv"), CHECK_HEADER, rows)
    reports.write_json(os.path.join(out, "pipeline.json"),
                       dict(config=cfg.as_dict(), checks=[dict(zip(CHECK_HEADER, r)) for r in rows]))
    failed = [f"{r[0]} (tau={r[1]})" if r[1] != "" else r[0] for r in rows if r[5] == "fail"]
    if failed:
        raise InvariantFailure("failed checks: " + ", ".join(failed))
    return EXIT_OK


# --- appendixB --------------------------------------------------------------

APPENDIX_HEADER = ["tau", "width", "width_over_tau", "M_used", "unconstrained", "control_width_over_tau"]


def cmd_appendixB(cfg: RunConfig, out: str, threads: int = 1) -> int:
    cfg.validate(planelike=False)
    taus = list(cfg.appendix_tau_list)
    if not taus or any(t < 1 for t in taus):
        raise ConfigError("appendix_tau_list must hold positive periods")
    with _mapper(threads) as mapper:
        main = appendixB_sweep(taus, cfg.appendix_Lambda, cfg.s, cfg.appendix_omega, mapper=mapper)
        ctrl = appendixB_sweep(taus, 1.0, cfg.s, cfg.appendix_omega, mapper=mapper)
    rows = [[r["tau"], r["width"], r["width_over_tau"], r["M_used"], r["unconstrained"], c["width_over_tau"]]
            for r, c in zip(main.rows, ctrl.rows)]
    reports.ensure_dir(out)
    reports.write_csv(os.path.join(out, "appendixB.csv"), APPENDIX_HEADER, rows)
    reports.write_json(os.path.join(out, "appendixB.json"),
                       dict(Lambda=cfg.appendix_Lambda, sweep=main.as_dict(), control=ctrl.as_dict()))
    return EXIT_OK


# --- gamma ------------------------------------------------------------------

GAMMA_HEADER = ["set", "eps", "energy", "symdiff_fraction", "reference", "relative_gap", "tail_bound"]


def _gamma_sets(names):
    table = dict(half_plane=half_plane, disk=disk(0.5), square=square(0.5))
    return {n: table[n] for n in names}


def cmd_gamma(cfg: RunConfig, out: str, threads: int = 1) -> int:
    cfg.validate(planelike=False)
    K = cfg.continuum_kernel()
    sets = _gamma_sets(cfg.gamma_sets)
    eps = [float(e) for e in cfg.eps_schedule]
    ref = min(eps) / 2
    with _mapper(threads) as mapper:
        parts = list(mapper(lambda n: gamma_experiment({n: sets[n]}, eps, K, cfg.R0, cfg.outer, ref), list(sets)))
    rows = [r for p in parts for r in p]
    reports.ensure_dir(out)
    reports.write_csv(os.path.join(out, "gamma.csv"), GAMMA_HEADER,
                      [[r.name, r.eps, r.energy, r.symdiff_fraction, r.reference, r.relative_gap, r.tail_bound]
                       for r in rows])
    reports.write_json(os.path.join(out, "gamma.json"),
                       dict(kernel=repr(K), R0=cfg.R0, outer=cfg.outer, reference_eps=ref,
                            rows=[r.as_dict() for r in rows]))
    return EXIT_OK


# --- verify -----------------------------------------------------------------

VERIFY_HEADER = ["invariant", "count", "slack", "status"]


def cmd_verify(cfg: RunConfig, out: str, threads: int = 1) -> int:
    cfg.validate(planelike=True)
    with _mapper(threads) as mapper:
        results = list(mapper(lambda c: invariants.run_all(cfg, [c])[0], invariants.CHECKS))
    reports.ensure_dir(out)
    reports.write_csv(os.path.join(out, "verify.csv"), VERIFY_HEADER, [r.row() for r in results])
    reports.write_json(os.path.join(out, "verify.json"),
                       dict(seed=cfg.seed, results=[dict(zip(VERIFY_HEADER, r.row())) for r in results]))
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise InvariantFailure("invariant failed: " + "; ".join(failed))
    return EXIT_OK


COMMANDS = dict(solve=cmd_solve, pipeline=cmd_pipeline, appendixB=cmd_appendixB, gamma=cmd_gamma,
                verify=cmd_verify)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lrising", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=list(COMMANDS))
    p.add_argument("--config", metavar="PATH", help="INI run configuration (defaults when omitted)")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides [run] out)")
    p.add_argument("--threads", metavar="N", type=int, default=1, help="parallel sweep cells")
    p.add_argument("--seed", metavar="K", type=int, help="seed for random couplings (overrides [run] seed)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        out = args.out or cfg.out
        return COMMANDS[args.command](cfg, out, args.threads)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantFailure as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (SolverError, ValueError) as exc:
        # precondition messages from the modules (e.g. the mu bound) are config errors
        if isinstance(exc, ValueError) and "mu exceeds" in str(exc):
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
