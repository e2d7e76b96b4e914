from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from lrising.config import ConfigError, RunConfig
from lrising.kernels import PowerLike, Truncated


def test_defaults_validate_and_round_trip():
    cfg = RunConfig().validate()
    again = RunConfig.from_ini(cfg.to_ini())
    assert again == cfg
    assert cfg.coupling_spec() == Truncated(PowerLike(1.0, 1.0, 0.5), 1)
    assert cfg.field_spec() is None


@given(s=st.floats(0.05, 0.95), tau=st.integers(1, 6), trunc=st.one_of(st.none(), st.integers(1, 20)),
       slab=st.tuples(st.fractions(-5, 5, max_denominator=7), st.fractions(6, 12, max_denominator=7)))
@settings(max_examples=50, deadline=None)
def test_round_trip_property(s, tau, trunc, slab):
    cfg = RunConfig(coupling="powerlike", s=s, tau=tau, truncation=trunc, slab=slab)
    assert RunConfig.from_ini(cfg.to_ini()) == cfg


def test_parsing_sections_and_values():
    cfg = RunConfig.from_ini("[model]\ncoupling = powerlike\ntruncation = 8\n[planelike]\nslab = 0, 7/2\n")
    assert cfg.coupling == "powerlike" and cfg.truncation == 8
    assert cfg.slab == (Fraction(0), Fraction(7, 2))
    assert RunConfig.from_ini("[model]\ntruncation = none\n").truncation is None


@pytest.mark.parametrize("text, msg", [
    ("[model]\ncolour = red\n", "unknown key"),
    ("[extras]\nx = 1\n", "unknown section"),
    ("[model]\nd = two\n", "bad value"),
    ("[planelike]\ntau = 1\n[model]\ntau = 2\n", "unknown key"),
    ("not an ini", "unreadable"),
])
def test_rejects_bad_files(text, msg):
    with pytest.raises(ConfigError, match=msg):
        RunConfig.from_ini(text)


@pytest.mark.parametrize("kw, msg", [
    (dict(d=1, omega=(1,)), "dimension"),
    (dict(coupling="ising"), "coupling must be one of"),
    (dict(s=1.0), "s must lie"),
    (dict(lam=2.0, Lambda=1.0), "lam <= Lambda"),
    (dict(omega=(0, 0, 1)), "omega must have d entries"),
    (dict(slab=(Fraction(2), Fraction(1))), "A < B"),
    (dict(truncation=0), "truncation"),
    (dict(kernel="gauss"), "kernel must be one of"),
    (dict(gamma_sets=("torus",)), "unknown gamma test sets"),
    (dict(eps_schedule=(Fraction(2),)), "eps values"),
    (dict(coupling="periodic", coupling_tau=2, tau=1, tau_list=(2,)), "multiple of the coupling"),
    (dict(field_tau=2, field_values=(0.7, -0.7, -0.7, 0.7), tau=2, tau_list=(2,)), "mu exceeds"),
    (dict(field_tau=2, field_values=(0.1, 0.1, 0.1, 0.1), tau=2, tau_list=(2,)), "zero flux"),
    (dict(coupling="appendixB", coupling_tau=3), "4k\\+1"),
])
def test_validation_messages(kw, msg):
    with pytest.raises(ConfigError, match=msg):
        RunConfig(**kw).validate()


def test_mu_guard_can_be_skipped():
    cfg = RunConfig(field_tau=2, field_values=(0.7, -0.7, -0.7, 0.7), tau=2, tau_list=(2,))
    assert cfg.validate(planelike=False) is cfg
    assert cfg.field_spec().mu == 0.7
