import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cirsim.errors import ArgumentError, BranchCutError, DomainError
from cirsim.model import (
    PhaseState,
    PotentialKind,
    PotentialSpec,
    ScatterParams,
    UnitSystem,
    complex_radius,
    hamiltonian_rel,
    potential_gradient,
    potential_value,
    transverse_energy,
)

from oracles import lj_mp, yukawa_mp

YUK50 = PotentialSpec(PotentialKind.YUKAWA, 50.0, 1.0)
LJ1 = PotentialSpec(PotentialKind.LENNARD_JONES, 1.0, 1.0)

finite = st.floats(-3, 3, allow_nan=False)


def test_units_fixed():
    with pytest.raises(ArgumentError):
        UnitSystem(hbar=2.0)
    with pytest.raises(ArgumentError):
        UnitSystem(omega=0.0)


def test_potential_spec_invariants():
    with pytest.raises(ArgumentError):
        PotentialSpec(PotentialKind.YUKAWA, -1.0, 1.0)
    with pytest.raises(ArgumentError):
        PotentialSpec(PotentialKind.YUKAWA, 1.0, 0.0)
    assert PotentialSpec("lj", 1.0, 1.0).kind is PotentialKind.LENNARD_JONES


def test_yukawa_value_oracle():
    assert potential_value(YUK50, 1.0) == pytest.approx(yukawa_mp(50, 1, 1.0), rel=1e-15)
    assert potential_value(YUK50, 1.0).real == pytest.approx(-18.393972058572116, rel=1e-14)


def test_lj_special_points():
    assert abs(potential_value(LJ1, 1.0)) < 1e-15
    assert potential_value(LJ1, 2 ** (1 / 6)).real == pytest.approx(-1.0, rel=1e-14)


def test_yukawa_decays():
    assert abs(potential_value(YUK50, 200.0)) < 1e-80


@given(re=st.floats(0.2, 5), im=st.floats(-2, 2), kind=st.sampled_from(["yukawa", "lj"]))
@settings(max_examples=50, deadline=None)
def test_potential_matches_mp(re, im, kind):
    spec = PotentialSpec(kind, 1.3, 0.9)
    r = complex(re, im)
    ref = yukawa_mp(1.3, 0.9, r) if kind == "yukawa" else lj_mp(1.3, 0.9, r)
    assert abs(potential_value(spec, r) - ref) <= 1e-12 * max(1.0, abs(ref))


def test_domain_errors():
    with pytest.raises(DomainError):
        potential_value(YUK50, 0.0)
    with pytest.raises(DomainError):
        potential_value(YUK50, -1.0 + 0.5j)


def test_complex_radius_examples():
    assert complex_radius([3, 4, 0]) == 5.0
    with pytest.raises(BranchCutError):
        complex_radius([1j, 0, 0])
    assert complex_radius([1 + 1j, 0, 0]) == pytest.approx(1 + 1j, abs=1e-15)


@given(st.lists(finite, min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_complex_radius_real_is_norm(q):
    assert complex_radius(q) == complex(math.sqrt(q[0] ** 2 + q[1] ** 2 + q[2] ** 2))


def test_gradient_axis_and_minimum():
    g = potential_gradient(YUK50, [0, 0, 2.0])
    assert g[0] == 0 and g[1] == 0 and g[2].real > 0
    assert np.allclose(potential_gradient(LJ1, [2 ** (1 / 6), 0, 0]), 0, atol=1e-13)


def _fd_grad(spec, q, h=1e-6):
    g = np.zeros(3, dtype=complex)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        g[k] = (potential_value(spec, complex_radius(q + e)) - potential_value(spec, complex_radius(q - e))) / (2 * h)
    return g


def test_gradient_fd_yukawa_111():
    spec = PotentialSpec(PotentialKind.YUKAWA, 1.0, 1.0)
    q = np.array([1.0, 1.0, 1.0], dtype=complex)
    g = potential_gradient(spec, q)
    assert np.max(np.abs(g - _fd_grad(spec, q))) / np.max(np.abs(g)) < 1e-8


@given(st.lists(st.floats(0.5, 2.0), min_size=3, max_size=3), st.lists(st.floats(-0.3, 0.3), min_size=3, max_size=3),
       st.sampled_from(["yukawa", "lj"]))
@settings(max_examples=60, deadline=None)
def test_gradient_fd_random(re, im, kind):
    spec = PotentialSpec(kind, 0.7, 1.0)
    q = np.array(re) + 1j * np.array(im)
    g = potential_gradient(spec, q)
    assert np.max(np.abs(g - _fd_grad(spec, q))) <= 1e-6 * max(np.max(np.abs(g)), 1e-3)


def test_hamiltonian_examples():
    u = UnitSystem()
    free = PotentialSpec(PotentialKind.YUKAWA, 0.0, 1.0)
    assert hamiltonian_rel(u, free, PhaseState([1, 0, 0], [0, 0, 0])) == 0.5
    assert hamiltonian_rel(u, YUK50, PhaseState([0, 0, 1e6], [0, 0, 0.3])).real == pytest.approx(0.045, rel=1e-12)
    assert hamiltonian_rel(u, YUK50, PhaseState([0, 0, 1], [0, 0, 0])) == pytest.approx(yukawa_mp(50, 1, 1.0), rel=1e-14)


@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6).filter(lambda v: np.linalg.norm(v[:3]) > 0.1))
def test_hamiltonian_real_on_real_states(v):
    h = hamiltonian_rel(UnitSystem(), YUK50, PhaseState(v[:3], v[3:]))
    assert h.imag == 0.0


def test_transverse_energy():
    assert transverse_energy(0, 0) == 1
    assert transverse_energy(1, 0) == 3
    assert transverse_energy(0, 2) == 3
    assert transverse_energy(1, 0, UnitSystem(omega=2.0)) == 6
    with pytest.raises(ArgumentError):
        transverse_energy(-1, 0)


@given(st.integers(1, 50), st.integers(-10, 10))
def test_channel_spacing(n, lz):
    assert transverse_energy(n, lz) - transverse_energy(n - 1, lz) == 2.0


def test_scatter_params():
    p = ScatterParams.from_channel(1, 2, 1e-5)
    assert p.e_perp == 5.0 and p.n == 1
    with pytest.raises(ArgumentError):
        ScatterParams(0.5, 1e-5, 1)
    with pytest.raises(ArgumentError):
        ScatterParams(1.0, 0.0, 0)
