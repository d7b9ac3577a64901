"""Semiclassical transverse dynamics of the 2D oscillator.

Turning points, the radial action and its Bohr-Sommerfeld roots, and the
sampling of launch conditions over (possibly complex) oscillator orbits.

Orbits are parameterized by an imaginary time shift ``delta`` and a phase
``phi``: along the principal axes,

    x = a cos(omega (t + i delta) + phi),   y = b sin(omega (t + i delta) + phi),

with a = rho2, b = sign(lz) rho1.  Both the transverse energy
(a^2 + b^2) omega^2 / 2 and L_z = a b omega stay real for every delta, and a
uniform phase is a uniform draw in time, which is what produces the 1/|v|
position density of the classical ensemble.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from cirsim.errors import ArgumentError, ConvergenceError
from cirsim.model import (
    PhaseState,
    PotentialSpec,
    ScatterParams,
    UnitSystem,
    complex_radius,
    potential_value,
)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


@dataclass(frozen=True)
class TurningPair:
    rho1: float
    rho2: float


@dataclass(frozen=True)
class SamplingConfig:
    """How launch conditions are drawn.

    ``delta_max`` bounds the imaginary time shift in units of 1/omega; set
    ``complex_orbits=False`` for the real ensemble (delta = 0).
    """

    delta_max: float = 0.5
    z0: float = -10.0
    complex_orbits: bool = True

    def __post_init__(self):
        if self.delta_max < 0:
            raise ArgumentError("delta_max must be >= 0")
        if not self.z0 < 0:
            raise ArgumentError("z0 must be negative (incoming from the left)")


@dataclass(frozen=True)
class OrbitSample:
    state: PhaseState
    weight: float
    delta: float
    phase: float


def _check_energy(E, lz, units):
    if E < abs(lz) * units.omega - 1e-12 * max(1.0, abs(E)):
        raise ArgumentError(f"E={E} below |lz|*omega={abs(lz) * units.omega}: classically forbidden")


def turning_points(E: float, lz: float, units: UnitSystem = UnitSystem()) -> TurningPair:
    _check_energy(E, lz, units)
    w = units.omega
    root = math.sqrt(max(E * E - (w * lz) ** 2, 0.0))
    rho1 = math.sqrt(max(E - root, 0.0)) / w
    rho2 = math.sqrt(E + root) / w
    return TurningPair(rho1, rho2)


def radial_action(E: float, lz: float, units: UnitSystem = UnitSystem()) -> float:
    """Closed-loop action 2 * int_{rho1}^{rho2} p_rho d rho by quadrature.

    With s = rho^2 the integrand becomes (omega/2) sqrt((s2-s)(s-s1))/s, and
    s = c - d cos(phi) removes both square-root endpoints, leaving a smooth
    integrand on [0, pi] for Gauss-Legendre.
    """
    tp = turning_points(E, lz, units)
    s1, s2 = tp.rho1**2, tp.rho2**2
    c, d = 0.5 * (s1 + s2), 0.5 * (s2 - s1)
    if d == 0.0:
        return 0.0
    phi = 0.5 * np.pi * (_GL_NODES + 1.0)
    # for lz = 0, c == d and sin^2/(c - d cos) -> (1 + cos) analytically
    denom = c - d * np.cos(phi)
    f = np.where(denom > 0, d * d * np.sin(phi) ** 2 / np.where(denom > 0, denom, 1.0), d * (1 + np.cos(phi)))
    integral = 0.5 * np.pi * float(np.dot(_GL_WEIGHTS, f))
    return units.omega * integral


def bohr_sommerfeld_levels(n_max: int, lz: int, units: UnitSystem = UnitSystem()) -> list[float]:
    """Energies with radial action 2 pi (n + 1/2), n = 0..n_max."""
    if n_max < 0:
        raise ArgumentError("n_max must be >= 0")
    e_lo = abs(lz) * units.omega
    levels = []
    for n in range(n_max + 1):
        target = 2.0 * math.pi * (n + 0.5)
        hi = e_lo + units.omega
        for _ in range(200):
            if radial_action(hi, lz, units) > target:
                break
            hi = e_lo + 2.0 * (hi - e_lo)
        else:
            raise ConvergenceError(f"could not bracket level n={n}")
        root = brentq(lambda e: radial_action(e, lz, units) - target, e_lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
        levels.append(root)
    return levels


def _orbit_axes(e_perp, lz, units):
    tp = turning_points(e_perp, lz, units)
    return tp.rho2, math.copysign(tp.rho1, lz) if lz != 0 else 0.0


def transverse_orbit(e_perp, lz, delta, phase, units: UnitSystem = UnitSystem()):
    """(x, y, px, py) on the orbit labelled by (delta, phase); vectorized over delta/phase."""
    a, b = _orbit_axes(e_perp, lz, units)
    w = units.omega
    tau = np.asarray(phase) + 1j * w * np.asarray(delta)
    c, s = np.cos(tau), np.sin(tau)
    return a * c, b * s, -a * w * s, b * w * c


def launch_momentum(e_par: float, q, potential: PotentialSpec | None) -> complex:
    """p_z that makes the total energy exactly e_perp + e_par at position q."""
    if potential is None or potential.v0 == 0.0:
        return complex(math.sqrt(2.0 * e_par))
    v = potential_value(potential, complex_radius(q))
    return complex(np.sqrt(2.0 * (e_par - v)))


def sample_initial_state(
    params: ScatterParams,
    config: SamplingConfig = SamplingConfig(),
    rng: np.random.Generator | None = None,
    potential: PotentialSpec | None = None,
    units: UnitSystem = UnitSystem(),
    *,
    delta: float | None = None,
    phase: float | None = None,
    weight: float = 1.0,
) -> OrbitSample:
    """Draw one launch state; ``delta``/``phase`` override the random draw."""
    _check_energy(params.e_perp, params.lz, units)
    if rng is None and (delta is None or phase is None):
        raise ArgumentError("an rng stream is required unless delta and phase are given")
    if phase is None:
        phase = float(rng.uniform(0.0, 2.0 * math.pi))
    if delta is None:
        delta = float(rng.uniform(0.0, config.delta_max)) / units.omega if config.complex_orbits else 0.0
    x, y, px, py = (complex(v) for v in transverse_orbit(params.e_perp, params.lz, delta, phase, units))
    q = np.array([x, y, config.z0], dtype=complex)
    pz = launch_momentum(params.e_par, q, potential)
    state = PhaseState(q, np.array([px, py, pz]), 0.0)
    return OrbitSample(state, weight, delta, phase)


def event_rng(master_seed: int, index: int, attempt: int = 0) -> np.random.Generator:
    """Independent stream for one event, fixed by (seed, index, attempt)."""
    return np.random.default_rng([int(master_seed), int(index), int(attempt)])


def sample_transverse_x(e_perp, lz, n_samples, rng, config: SamplingConfig = SamplingConfig(), units=UnitSystem()):
    phase = rng.uniform(0.0, 2.0 * math.pi, n_samples)
    if config.complex_orbits:
        delta = rng.uniform(0.0, config.delta_max, n_samples) / units.omega
    else:
        delta = np.zeros(n_samples)
    x, y, _, _ = transverse_orbit(e_perp, lz, delta, phase, units)
    return x, y


@dataclass
class DensityProfile:
    re_edges: np.ndarray
    im_edges: np.ndarray
    density: np.ndarray  # per unit area, shape (n_re, n_im)

    @property
    def mass(self) -> np.ndarray:
        area = np.outer(np.diff(self.re_edges), np.diff(self.im_edges))
        return self.density * area


def transverse_density_profile(
    e_perp,
    lz,
    n_samples,
    grid,
    rng: np.random.Generator | None = None,
    config: SamplingConfig = SamplingConfig(),
    units: UnitSystem = UnitSystem(),
) -> DensityProfile:
    """Normalized histogram of sampled complex x at the y = 0 slice.

    ``grid`` is ``(re_edges, im_edges)``.  For lz != 0 the y = 0 slice is the
    set of phases where the minor-axis coordinate vanishes; samples are
    projected onto the x axis, which is what the axial symmetry allows.
    """
    if n_samples < 10_000:
        raise ArgumentError("n_samples must be >= 1e4")
    rng = rng if rng is not None else np.random.default_rng(0)
    re_edges, im_edges = (np.asarray(g, dtype=float) for g in grid)
    x, _ = sample_transverse_x(e_perp, lz, n_samples, rng, config, units)
    counts, _, _ = np.histogram2d(x.real, x.imag, bins=[re_edges, im_edges])
    total = counts.sum()
    if total == 0:
        raise ArgumentError("no samples fell inside the histogram grid")
    area = np.outer(np.diff(re_edges), np.diff(im_edges))
    return DensityProfile(re_edges, im_edges, counts / total / area)


def orbit_trace(e_perp, lz, delta, duration, units: UnitSystem = UnitSystem(), n_points: int = 512, phase: float = 0.0):
    """Times and (x, y, px, py) sampled along one complexified orbit."""
    if not duration > 0:
        raise ArgumentError("duration must be positive")
    t = np.linspace(0.0, duration, n_points)
    x, y, px, py = transverse_orbit(e_perp, lz, delta, phase + units.omega * t, units)
    return t, np.stack([x, y, px, py], axis=1)


def write_samples_csv(path, samples, weights=None):
    """Rows of re/im for each coordinate plus a weight column.

    ``samples`` is an (n, k) complex array of coordinates.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=complex))
    n, k = samples.shape
    weights = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    names = ["x", "y", "px", "py", "z", "pz"][:k] if k <= 6 else [f"c{i}" for i in range(k)]
    header = [f"{part}_{nm}" for nm in names for part in ("re", "im")] + ["weight"]
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row, wt in zip(samples, weights):
            vals = []
            for c in row:
                vals += [repr(float(c.real)), repr(float(c.imag))]
            w.writerow(vals + [repr(float(wt))])
