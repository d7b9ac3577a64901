"""Unconfined classical scattering: effective potential, deflection, orbiting.

The deflection (rotation) angle of a particle with impact parameter s and
energy E is

    Theta = -pi + 2 int_{r_m}^inf (J / r^2) / sqrt(2 [E - V(r) - J^2 / 2 r^2]) dr,

with J = s sqrt(2E) and r_m the outermost turning point.  Orbiting happens
when the top of the centrifugal bump of V_eff sits exactly at E; Theta then
diverges logarithmically.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from cirsim.errors import ArgumentError, DomainError, NoOrbitingRegime, OrbitingSingular
from cirsim.model import PotentialKind, PotentialSpec, radial_potential, radial_potential_derivative

_GL10 = np.polynomial.legendre.leggauss(10)
_GL20 = np.polynomial.legendre.leggauss(20)

# |V0 - V0*| below which the barrier top is treated as coincident with E
ORBITING_WINDOW = 1e-6


@dataclass(frozen=True)
class ImpactConfig:
    s: float
    E: float

    def __post_init__(self):
        if self.s < 0 or not self.E > 0:
            raise ArgumentError("need s >= 0 and E > 0")

    @property
    def J(self) -> float:
        return self.s * math.sqrt(2.0 * self.E)


def effective_potential(spec: PotentialSpec, J: float, r):
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise DomainError("effective potential needs r > 0")
    out = radial_potential(spec, r_arr) + J * J / (2.0 * r_arr * r_arr)
    return float(out) if np.ndim(out) == 0 else out


def _radial_kinetic(spec, cfg, r):
    """F(r) = E - V(r) - J^2 / 2 r^2 (twice this is the radial momentum squared)."""
    return cfg.E - radial_potential(spec, r) - cfg.J**2 / (2.0 * r * r)


def _outer_radius(spec: PotentialSpec, E: float) -> float:
    """Radius beyond which |V| < 1e-14 E."""
    if spec.v0 == 0.0:
        return 10.0 * spec.range
    thresh = 1e-14 * E
    r = spec.range
    while abs(float(radial_potential(spec, r))) > thresh or r < 2 * spec.range:
        r *= 1.25
    return r


def _barrier_tops(spec, cfg, r_lo, r_hi):
    """Local minima of F (maxima of V_eff) inside [r_lo, r_hi]."""
    grid = np.geomspace(r_lo, r_hi, 4000)
    f = _radial_kinetic(spec, cfg, grid)
    tops = []
    for i in range(1, len(grid) - 1):
        if f[i] <= f[i - 1] and f[i] <= f[i + 1]:
            res = minimize_scalar(lambda r: float(_radial_kinetic(spec, cfg, r)), bracket=(grid[i - 1], grid[i], grid[i + 1]),
                                  method="brent", options={"xtol": 1e-14})
            tops.append((float(res.x), float(res.fun)))
    return tops


def _orbiting_distance(spec, cfg, r_top, f_top):
    """First-order estimate of |V0 - V0*| from the barrier-top mismatch."""
    if spec.v0 == 0.0:
        return math.inf
    dfd_v0 = -float(radial_potential(spec, r_top)) / spec.v0
    if dfd_v0 == 0.0:
        return math.inf
    return abs(f_top / dfd_v0)


def closest_approach(spec: PotentialSpec, cfg: ImpactConfig) -> float:
    """Outermost root of E - V(r) - J^2 / 2r^2 reached from r = infinity."""
    if cfg.J == 0.0:
        if spec.v0 == 0.0 or spec.kind is PotentialKind.YUKAWA:
            return 0.0
    r_hi = max(_outer_radius(spec, cfg.E), 4.0 * cfg.s, 10.0 * spec.range)
    r_lo = 1e-6 * min(spec.range, max(cfg.s, 1e-3))
    if spec.v0 == 0.0:
        return cfg.s
    for r_top, f_top in sorted(_barrier_tops(spec, cfg, r_lo, r_hi), reverse=True):
        if _orbiting_distance(spec, cfg, r_top, f_top) <= ORBITING_WINDOW:
            raise OrbitingSingular(f"barrier top at r*={r_top:.6g} coincides with E (F={f_top:.3e})")
        if f_top < 0:
            # the particle turns on the outside of this bump
            r_hi_b = r_hi
            grid = np.geomspace(r_top, r_hi_b, 2000)
            f = _radial_kinetic(spec, cfg, grid)
            k = int(np.argmax(f > 0))
            return _polish_root(spec, cfg, grid[k - 1], grid[k])
    grid = np.geomspace(r_lo, r_hi, 20000)[::-1]
    f = _radial_kinetic(spec, cfg, grid)
    neg = np.nonzero(f <= 0)[0]
    if len(neg) == 0:
        raise DomainError("no turning point found")
    k = int(neg[0])
    return _polish_root(spec, cfg, grid[k], grid[k - 1])


def _polish_root(spec, cfg, a, b):
    """Root of F in [a, b] (F(a) <= 0 < F(b)), returned on the allowed side."""
    f = lambda r: float(_radial_kinetic(spec, cfg, r))
    r = brentq(f, a, b, xtol=1e-15 * b, rtol=4 * np.finfo(float).eps, maxiter=500)
    while f(r) < 0:
        r = np.nextafter(r, np.inf)
    return float(r)


def _gl(f, a, b, rule, with_abs=False):
    x, w = rule
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    vals = f(mid + half * x)
    if with_abs:
        return half * float(np.dot(w, vals)), half * float(np.dot(w, np.abs(vals)))
    return half * float(np.dot(w, vals))


def _adaptive(f, a, b, tol, breakpoints=(), max_panels=200000, cond=None):
    stack = []
    pts = sorted({a, b, *[p for p in breakpoints if a < p < b]})
    for lo, hi in zip(pts[:-1], pts[1:]):
        stack.append((lo, hi))
    total = 0.0
    panels = 0
    while stack:
        lo, hi = stack.pop()
        coarse = _gl(f, lo, hi, _GL10)
        fine, fine_abs = _gl(f, lo, hi, _GL20, with_abs=True)
        panels += 1
        # absolute share of the budget, floored at the rounding noise of the panel
        kappa = 1.0 if cond is None else cond(0.5 * (lo + hi))
        scale = max(tol * (hi - lo) / (b - a), 100 * np.finfo(float).eps * kappa * fine_abs)
        if abs(fine - coarse) <= scale or panels > max_panels or hi - lo < 1e-14 * (b - a):
            total += fine
        else:
            m = 0.5 * (lo + hi)
            stack.append((lo, m))
            stack.append((m, hi))
    return total


def _composite(f, a, b, n_panels):
    edges = np.linspace(a, b, n_panels + 1)
    return sum(_gl(f, lo, hi, _GL20) for lo, hi in zip(edges[:-1], edges[1:]))


def deflection_angle(spec: PotentialSpec, cfg: ImpactConfig, *, tol: float = 1e-11, n_panels: int | None = None) -> float:
    """Rotation angle Theta(s, E, V0).

    The endpoint singularity is removed with r = r_m + t^2; beyond the
    radius where |V| < 1e-14 E the pure-centrifugal tail is added in closed
    form, arcsin(s / R_out).  ``n_panels`` switches from adaptive to a fixed
    composite rule (used for refinement studies).
    """
    if cfg.J == 0.0:
        return 0.0 if spec.v0 == 0.0 else -math.pi
    r_m = closest_approach(spec, cfg)
    r_out = max(_outer_radius(spec, cfg.E), 2.0 * r_m, 2.0 * cfg.s)
    J = cfg.J

    def integrand(t):
        r = r_m + t * t
        f = _radial_kinetic(spec, cfg, r)
        return 2.0 * t * (J / (r * r)) / np.sqrt(2.0 * np.maximum(f, 1e-300))

    t_hi = math.sqrt(r_out - r_m)
    breaks = []
    if spec.v0 > 0:
        for r_top, _ in _barrier_tops(spec, cfg, r_m * (1 + 1e-9), r_out):
            if r_top > r_m:
                tb = math.sqrt(r_top - r_m)
                # geometric grading toward the bump, where the integrand peaks near orbiting
                breaks += [tb * (1 + sgn * 10.0**-k) for k in range(1, 9) for sgn in (-1, 1)] + [tb]
    def cond(t):
        # condition number of E - V - J^2/2r^2 (cancellation near the bump)
        r = r_m + t * t
        big = cfg.E + abs(float(radial_potential(spec, r))) + J * J / (2 * r * r)
        return big / max(float(_radial_kinetic(spec, cfg, r)), 1e-300)

    if n_panels is None:
        body = _adaptive(integrand, 0.0, t_hi, tol, breaks, cond=cond)
    else:
        body = _composite(integrand, 0.0, t_hi, n_panels)
    tail = math.asin(min(1.0, cfg.s / r_out))
    return -math.pi + 2.0 * (body + tail)


def _unit_shape(spec: PotentialSpec):
    unit = PotentialSpec(spec.kind, 1.0, spec.range)
    return (lambda r: float(radial_potential(unit, r))), (lambda r: float(radial_potential_derivative(unit, r)))


def orbiting_threshold(spec: PotentialSpec, s: float, E: float) -> tuple[float, float]:
    """Depth V0* (and radius r*) at which the barrier top of V_eff equals E.

    Returns ``(v0_star, r_star)``.  For a trial radius r the stationarity
    condition dV_eff/dr = 0 fixes V0(r) (the potential is linear in V0); the
    outer root finding then solves V_eff(r; V0(r)) = E.  The smallest such
    V0* is the onset of orbiting as the well is deepened from zero.
    """
    J2 = 2.0 * E * s * s
    if J2 == 0.0:
        raise NoOrbitingRegime("no centrifugal barrier for s = 0")
    u, du = _unit_shape(spec)

    def depth_for(r):
        d = du(r)
        return J2 / (r**3 * d) if d > 0 else math.nan

    def mismatch(r):
        v0 = depth_for(r)
        return v0 * u(r) + J2 / (2.0 * r * r) - E

    grid = np.geomspace(0.05 * spec.range, 200.0 * spec.range + 10 * s, 6000)
    vals = np.array([mismatch(r) for r in grid])
    candidates = []
    for i in range(len(grid) - 1):
        a, b = vals[i], vals[i + 1]
        if np.isfinite(a) and np.isfinite(b) and a * b < 0:
            r_star = brentq(mismatch, grid[i], grid[i + 1], xtol=1e-14, rtol=1e-15, maxiter=500)
            v0_star = depth_for(r_star)
            # keep only stationary points that are maxima of V_eff
            h = 1e-5 * r_star
            curv = v0_star * (du(r_star + h) - du(r_star - h)) / (2 * h) + 3.0 * J2 / r_star**4
            if v0_star > 0 and curv < 0:
                candidates.append((v0_star, r_star))
    if not candidates:
        raise NoOrbitingRegime(f"no barrier at energy E={E} for s={s}")
    v0_star, r_star = min(candidates)
    return float(v0_star), float(r_star)


@dataclass
class ThetaCurve:
    v0: np.ndarray
    theta: np.ndarray
    singular: np.ndarray
    s: float
    E: float

    def to_csv(self, path):
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["V0", "theta", "singular_flag"])
            for v, t, f in zip(self.v0, self.theta, self.singular):
                w.writerow([repr(float(v)), repr(float(t)), int(f)])


def theta_vs_v0(spec: PotentialSpec, s: float, E: float, grid) -> ThetaCurve:
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ArgumentError("grid must be strictly increasing")
    cfg = ImpactConfig(s, E)
    theta = np.empty(len(grid))
    singular = np.zeros(len(grid), dtype=bool)
    for i, v0 in enumerate(grid):
        try:
            theta[i] = deflection_angle(spec.with_v0(v0), cfg)
        except OrbitingSingular:
            theta[i] = math.inf
            singular[i] = True
    return ThetaCurve(grid, theta, singular, s, E)
