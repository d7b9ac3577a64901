"""Units, interaction potentials and the confined relative-motion Hamiltonian.

Everything is expressed in oscillator units: hbar = mu = 1, energies in
units of hbar*omega.  Positions and momenta may be complex; the potentials
are evaluated on the principal branch of r = sqrt(x^2 + y^2 + z^2).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from cirsim.errors import ArgumentError, BranchCutError, DomainError

# complex positions / momenta are plain length-3 complex arrays
ComplexVec3 = np.ndarray


@dataclass(frozen=True)
class UnitSystem:
    omega: float = 1.0
    hbar: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        if self.hbar != 1.0 or self.mu != 1.0:
            raise ArgumentError("hbar and mu are fixed to 1")
        if not self.omega > 0:
            raise ArgumentError(f"omega must be positive, got {self.omega}")


class PotentialKind(str, Enum):
    YUKAWA = "yukawa"
    LENNARD_JONES = "lennard-jones"

    @property
    def code(self) -> int:
        # integer tag consumed by the compiled kernels
        return 0 if self is PotentialKind.YUKAWA else 1

    @classmethod
    def parse(cls, text: str) -> "PotentialKind":
        key = text.strip().lower().replace("_", "-")
        aliases = {"yukawa": cls.YUKAWA, "lennard-jones": cls.LENNARD_JONES, "lj": cls.LENNARD_JONES}
        if key not in aliases:
            raise ArgumentError(f"unknown potential kind {text!r}")
        return aliases[key]


@dataclass(frozen=True)
class PotentialSpec:
    """Interaction family with depth ``v0`` and range (r0 for Yukawa, sigma for LJ)."""

    kind: PotentialKind = PotentialKind.YUKAWA
    v0: float = 0.0
    range: float = 1.0

    def __post_init__(self):
        if not isinstance(self.kind, PotentialKind):
            object.__setattr__(self, "kind", PotentialKind.parse(str(self.kind)))
        if not (self.v0 >= 0 and math.isfinite(self.v0)):
            raise ArgumentError(f"v0 must be finite and >= 0, got {self.v0}")
        if not (self.range > 0 and math.isfinite(self.range)):
            raise ArgumentError(f"range must be positive, got {self.range}")

    def with_v0(self, v0: float) -> "PotentialSpec":
        return PotentialSpec(self.kind, float(v0), self.range)


@dataclass(frozen=True)
class ScatterParams:
    """Asymptotic channel data: transverse/longitudinal energy and L_z."""

    e_perp: float
    e_par: float
    lz: int = 0
    n: int | None = None

    def __post_init__(self):
        if not self.e_par > 0:
            raise ArgumentError(f"e_par must be positive, got {self.e_par}")
        if self.e_perp < abs(self.lz):
            raise ArgumentError(f"e_perp={self.e_perp} below |lz|={abs(self.lz)} (classically forbidden)")

    @classmethod
    def from_channel(cls, n: int, lz: int, e_par: float, units: UnitSystem = UnitSystem()) -> "ScatterParams":
        return cls(transverse_energy(n, lz, units), e_par, lz, n)

    @property
    def total_energy(self) -> float:
        return self.e_perp + self.e_par


def transverse_energy(n: int, lz: int, units: UnitSystem = UnitSystem()) -> float:
    """Oscillator threshold (2n + |lz| + 1) * omega."""
    if n < 0:
        raise ArgumentError(f"n must be >= 0, got {n}")
    return (2 * n + abs(lz) + 1) * units.omega


def complex_radius(q) -> complex:
    """Principal square root of x^2 + y^2 + z^2."""
    r2 = complex(q[0]) ** 2 + complex(q[1]) ** 2 + complex(q[2]) ** 2
    if r2.imag == 0.0 and r2.real <= 0.0:
        raise BranchCutError(f"x^2+y^2+z^2 = {r2} lies on the branch cut")
    if all(complex(c).imag == 0.0 for c in q):
        return complex(math.sqrt(r2.real))
    return cmath.sqrt(r2)


def potential_value(spec: PotentialSpec, r) -> complex:
    r = complex(r)
    if r == 0 or r.real <= 0:
        raise DomainError(f"potential undefined at r = {r}")
    if spec.kind is PotentialKind.YUKAWA:
        a = spec.range
        return -spec.v0 * (a / r) * cmath.exp(-r / a)
    s6 = (spec.range / r) ** 6
    return 4.0 * spec.v0 * (s6 * s6 - s6)


def potential_derivative(spec: PotentialSpec, r) -> complex:
    """dV/dr on the same domain as :func:`potential_value`."""
    r = complex(r)
    if r == 0 or r.real <= 0:
        raise DomainError(f"potential undefined at r = {r}")
    if spec.kind is PotentialKind.YUKAWA:
        a = spec.range
        return spec.v0 * a * cmath.exp(-r / a) * (1.0 / r**2 + 1.0 / (a * r))
    s6 = (spec.range / r) ** 6
    return 4.0 * spec.v0 * (-12.0 * s6 * s6 + 6.0 * s6) / r


def potential_gradient(spec: PotentialSpec, q) -> ComplexVec3:
    q = np.asarray(q, dtype=complex)
    r = complex_radius(q)
    return potential_derivative(spec, r) / r * q


def radial_potential(spec: PotentialSpec, r: np.ndarray) -> np.ndarray:
    """Vectorized V(r) for real positive radii."""
    r = np.asarray(r, dtype=float)
    if spec.kind is PotentialKind.YUKAWA:
        a = spec.range
        return -spec.v0 * (a / r) * np.exp(-r / a)
    s6 = (spec.range / r) ** 6
    return 4.0 * spec.v0 * (s6 * s6 - s6)


def radial_potential_derivative(spec: PotentialSpec, r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if spec.kind is PotentialKind.YUKAWA:
        a = spec.range
        return spec.v0 * a * np.exp(-r / a) * (1.0 / r**2 + 1.0 / (a * r))
    s6 = (spec.range / r) ** 6
    return 4.0 * spec.v0 * (-12.0 * s6 * s6 + 6.0 * s6) / r


@dataclass(frozen=True)
class PhaseState:
    q: ComplexVec3
    p: ComplexVec3
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=complex).reshape(3))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=complex).reshape(3))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_array(cls, y, t: float = 0.0) -> "PhaseState":
        y = np.asarray(y, dtype=complex)
        return cls(y[:3].copy(), y[3:6].copy(), float(t))

    def __eq__(self, other):
        if not isinstance(other, PhaseState):
            return NotImplemented
        return bool(np.array_equal(self.q, other.q) and np.array_equal(self.p, other.p) and self.t == other.t)

    __hash__ = None


def hamiltonian_rel(units: UnitSystem, spec: PotentialSpec, s: PhaseState) -> complex:
    """p^2/2 + omega^2 (x^2 + y^2)/2 + V(r), analytic in all six variables."""
    x, y, _ = (complex(c) for c in s.q)
    kinetic = 0.5 * complex(np.sum(s.p * s.p))
    trap = 0.5 * units.omega**2 * (x * x + y * y)
    if spec.v0 == 0.0:
        return kinetic + trap
    return kinetic + trap + potential_value(spec, complex_radius(s.q))
