"""Run configuration: flat INI sections, one level deep."""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from typing import Optional

import numpy as np

from .kernels import (AppendixB, CouplingSpec, FieldSpec, ModulatedKernel, PeriodicTable, PowerKernel,
                      PowerLike, Truncated)

COUPLINGS = ("powerlike", "nearest", "periodic", "appendixB")
KERNELS = ("power", "modulated")
GAMMA_SETS = ("half_plane", "disk", "square")


class ConfigError(ValueError):
    pass


# key -> (section, kind)
_LAYOUT = {
    "d": ("model", "int"),
    "coupling": ("model", "str"),
    "lam": ("model", "float"),
    "Lambda": ("model", "float"),
    "s": ("model", "float"),
    "truncation": ("model", "optint"),
    "coupling_tau": ("model", "int"),
    "field_tau": ("field", "int"),
    "field_values": ("field", "floats"),
    "mu": ("field", "optfloat"),
    "omega": ("planelike", "ints"),
    "tau": ("planelike", "int"),
    "slab": ("planelike", "fracs"),
    "m_list": ("planelike", "ints"),
    "M_schedule": ("planelike", "fracs"),
    "ell_list": ("planelike", "ints"),
    "tau_list": ("planelike", "ints"),
    "appendix_tau_list": ("appendixB", "ints"),
    "appendix_Lambda": ("appendixB", "float"),
    "appendix_omega": ("appendixB", "ints"),
    "eps_schedule": ("gamma", "fracs"),
    "kernel": ("gamma", "str"),
    "kernel_a": ("gamma", "float"),
    "R0": ("gamma", "float"),
    "outer": ("gamma", "float"),
    "gamma_sets": ("gamma", "strs"),
    "out": ("run", "str"),
    "seed": ("run", "int"),
}


@dataclass
class RunConfig:
    d: int = 2
    coupling: str = "nearest"
    lam: float = 1.0
    Lambda: float = 1.0
    s: float = 0.5
    truncation: Optional[int] = None
    coupling_tau: int = 1
    field_tau: int = 1
    field_values: tuple = ()
    mu: Optional[float] = None
    omega: tuple = (0, 1)
    tau: int = 1
    slab: tuple = (Fraction(0), Fraction(2))
    m_list: tuple = (1, 2, 3)
    M_schedule: tuple = ()
    ell_list: tuple = (4, 8, 16, 32)
    tau_list: tuple = (1, 2, 4)
    appendix_tau_list: tuple = (5, 9, 13)
    appendix_Lambda: float = 100.0
    appendix_omega: tuple = (1, 2)
    eps_schedule: tuple = (Fraction(1), Fraction(1, 2), Fraction(1, 4), Fraction(1, 8), Fraction(1, 16))
    kernel: str = "power"
    kernel_a: float = 0.5
    R0: float = 1.0
    outer: float = 2.0
    gamma_sets: tuple = ("half_plane", "disk")
    out: str = "out"
    seed: int = 0

    # --- serialization ---
    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for f in fields(self):
            sec, kind = _LAYOUT[f.name]
            if not cp.has_section(sec):
                cp.add_section(sec)
            cp.set(sec, f.name, _fmt(getattr(self, f.name), kind))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unreadable config: {exc}") from exc
        known = {sec for sec, _ in _LAYOUT.values()}
        kw = {}
        for sec in cp.sections():
            if sec not in known:
                raise ConfigError(f"unknown section [{sec}]")
            for key, raw in cp.items(sec):
                if key not in _LAYOUT or _LAYOUT[key][0] != sec:
                    raise ConfigError(f"unknown key '{key}' in [{sec}]")
                try:
                    kw[key] = _parse(raw, _LAYOUT[key][1])
                except (ValueError, ZeroDivisionError) as exc:
                    raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_ini(fh.read())

    def as_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            if isinstance(v, tuple):
                v = [str(x) if isinstance(x, Fraction) else x for x in v]
            out[k] = v
        return out

    # --- validation and builders ---
    def validate(self, planelike: bool = True):
        if self.d < 2:
            raise ConfigError("dimension d must be at least 2")
        if self.coupling not in COUPLINGS:
            raise ConfigError(f"coupling must be one of {', '.join(COUPLINGS)}")
        if not 0 < self.s < 1:
            raise ConfigError("s must lie in (0, 1)")
        if not 0 < self.lam <= self.Lambda:
            raise ConfigError("need 0 < lam <= Lambda")
        if len(self.omega) != self.d:
            raise ConfigError("omega must have d entries")
        if self.tau < 1 or any(t < 1 for t in self.tau_list):
            raise ConfigError("tau must be positive")
        if len(self.slab) != 2 or not self.slab[0] < self.slab[1]:
            raise ConfigError("slab must be two levels A < B")
        if any(m < 1 for m in self.m_list):
            raise ConfigError("m_list entries must be positive")
        if self.truncation is not None and self.truncation < 1:
            raise ConfigError("truncation radius must be positive")
        if self.kernel not in KERNELS:
            raise ConfigError(f"kernel must be one of {', '.join(KERNELS)}")
        bad = [g for g in self.gamma_sets if g not in GAMMA_SETS]
        if bad:
            raise ConfigError(f"unknown gamma test sets: {', '.join(bad)}")
        if any(not 0 < e <= 1 for e in self.eps_schedule):
            raise ConfigError("eps values must lie in (0, 1]")
        try:
            spec = self.coupling_spec()
            fld = self.field_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for t in {self.tau, *self.tau_list}:
            if t % spec.period or (fld is not None and t % fld.tau):
                raise ConfigError(f"tau = {t} must be a multiple of the coupling and field periods")
            if planelike and fld is not None:
                mu0 = spec.lam * float(t) ** (-self.d)
                if fld.mu > mu0 * (1 + 1e-12):
                    raise ConfigError(f"mu exceeds lambda*tau^-d: mu = {fld.mu:g} > {mu0:g} at tau = {t}")
        return self

    def coupling_spec(self, truncation: Optional[int] = None) -> CouplingSpec:
        rng = np.random.default_rng(self.seed)
        if self.coupling == "powerlike":
            spec = PowerLike(self.lam, self.Lambda, self.s, self.d)
        elif self.coupling == "nearest":
            spec = Truncated(PowerLike(self.lam, self.lam, self.s, self.d), 1)
        elif self.coupling == "periodic":
            spec = PeriodicTable.random(self.coupling_tau, self.s, self.lam, self.Lambda, rng, self.d)
        else:
            if self.d != 2:
                raise ValueError("the defect kernel is two-dimensional")
            spec = AppendixB(self.coupling_tau, self.Lambda, self.s)
        R = truncation if truncation is not None else self.truncation
        if R is not None and not isinstance(spec, Truncated):
            spec = Truncated(spec, int(R))
        return spec

    def field_spec(self) -> Optional[FieldSpec]:
        if not self.field_values:
            return None
        return FieldSpec(self.field_tau, tuple(self.field_values),
                         self.mu if self.mu is not None else float(np.max(np.abs(self.field_values))), self.d)

    def continuum_kernel(self):
        if self.kernel == "power":
            return PowerKernel(self.d, self.s, self.lam)
        return ModulatedKernel(self.d, self.s, self.lam, self.kernel_a)


def _fmt(v, kind):
    if v is None:
        return "none"
    if kind in ("ints", "floats", "fracs", "strs"):
        return ", ".join(str(x) for x in v)
    if kind in ("float", "optfloat"):
        return repr(float(v))
    return str(v)


def _parse(raw: str, kind):
    raw = raw.strip()
    if kind in ("optint", "optfloat") and raw.lower() in ("none", ""):
        return None
    if kind in ("int", "optint"):
        return int(raw)
    if kind in ("float", "optfloat"):
        return float(raw)
    if kind == "str":
        return raw
    items = [x.strip() for x in raw.split(",") if x.strip()]
    if kind == "ints":
        return tuple(int(x) for x in items)
    if kind == "floats":
        return tuple(float(x) for x in items)
    if kind == "fracs":
        return tuple(Fraction(x) for x in items)
    return tuple(items)
