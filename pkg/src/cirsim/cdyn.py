"""Complexified Hamiltonian dynamics of the confined relative particle.

The equations of motion are the complex-analytic Hamilton equations
dq/dt = dH/dp, dp/dt = -dH/dq evaluated in complex arithmetic.  Splitting
q = q1 + i q2, p = p1 + i p2 and H = H1 + i H2, Cauchy-Riemann turns them into

    dq1/dt =  dH1/dp1,   dp1/dt = -dH1/dq1,
    dq2/dt = -dH1/dp2,   dp2/dt =  dH1/dq2,

which is what :func:`hamilton_split_form` implements for cross-checking.

Integration uses the embedded Runge-Kutta-Fehlberg 4(5) pair, propagating
the fourth-order solution, on the 12 real components.  The whole trajectory
loop is compiled with numba; one Yukawa trajectory at E_par = 1e-5 takes
tens of thousands of steps.

Branch handling for the Yukawa radius, ``branch_policy``:

* ``"principal"`` (default): V is always evaluated at the principal root
  (Re r >= 0).  The force jumps when x^2+y^2+z^2 crosses the negative real
  axis; the step controller resolves the jump with short steps.
* ``"continue"``: r is continued analytically from step to step.  After a
  loop around the branch point the trajectory lives on the r -> -r sheet,
  where the Yukawa term grows like exp(|r|/r0), so V no longer vanishes far
  from the centre.
* ``"terminate"``: like ``"continue"`` inside a step, but a step ending on
  the other sheet stops the trajectory with outcome BRANCH_CUT.

Lennard-Jones depends on r^2 only and never meets a cut.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import mpmath as mp
import numpy as np
from numba import njit

from cirsim.errors import ArgumentError, InsufficientSamples, StepSizeUnderflow
from cirsim.model import (
    PhaseState,
    PotentialKind,
    PotentialSpec,
    UnitSystem,
    complex_radius,
    potential_derivative,
)


class Outcome(IntEnum):
    TRANSMITTED = 0
    REFLECTED = 1
    TRAPPED = 2
    BRANCH_CUT = 3
    STEP_BUDGET_EXCEEDED = 4
    COMPLETED = 5  # fixed-time propagation reached its end time

    @property
    def excluded(self) -> bool:
        return self in (Outcome.TRAPPED, Outcome.BRANCH_CUT, Outcome.STEP_BUDGET_EXCEEDED)


BRANCH_POLICIES = ("principal", "continue", "terminate")


@dataclass(frozen=True)
class IntegratorConfig:
    atol: float = 1e-9
    rtol: float = 1e-9
    h_init: float = 1e-2
    h_min: float = 1e-12
    h_max: float = 0.5
    max_steps: int = 10_000_000
    z_cut: float | None = None  # None: |z0| + 5 * range, see escape_distance()
    t_max: float | None = None  # None: see time_budget()
    branch_policy: str = "principal"

    def __post_init__(self):
        if not (0 < self.h_min <= self.h_init <= self.h_max):
            raise ArgumentError("need 0 < h_min <= h_init <= h_max")
        if not (self.atol > 0 and self.rtol > 0):
            raise ArgumentError("tolerances must be positive")
        if self.max_steps < 1 or (self.t_max is not None and not self.t_max > 0):
            raise ArgumentError("max_steps and t_max must be positive")
        if self.branch_policy not in BRANCH_POLICIES:
            raise ArgumentError(f"branch_policy must be one of {BRANCH_POLICIES}")

    def time_budget(self, z_cut: float, pz0: complex) -> float:
        """Longest allowed scattering time: 20 ballistic crossings of [-z_cut, z_cut], at least 1e4."""
        if self.t_max is not None:
            return self.t_max
        speed = abs(complex(pz0).real)
        return max(1e4, 20.0 * 2.0 * z_cut / speed) if speed > 0 else 1e4

    def escape_distance(self, z0: float, potential: PotentialSpec) -> float:
        z_cut = abs(z0) + 5.0 * potential.range if self.z_cut is None else self.z_cut
        if not z_cut > abs(z0):
            raise ArgumentError(f"z_cut={z_cut} must exceed |z0|={abs(z0)}")
        return z_cut


@dataclass
class TrajectoryRecord:
    outcome: Outcome
    final_state: PhaseState
    theta: float
    energy_drift: float
    n_steps: int
    h0: complex = 0j
    sheet_flips: int = 0
    samples: np.ndarray | None = None  # columns: t, re/im of x y z px py pz, |H - H0|
    theta_region: float = 5.0


# --------------------------------------------------------------------------
# compiled kernels

_C2, _C3, _C4, _C5, _C6 = 0.25, 3.0 / 8.0, 12.0 / 13.0, 1.0, 0.5
_A21 = 0.25
_A31, _A32 = 3.0 / 32.0, 9.0 / 32.0
_A41, _A42, _A43 = 1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0
_A51, _A52, _A53, _A54 = 439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0
_A61, _A62, _A63, _A64, _A65 = -8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0
_B1, _B3, _B4, _B5 = 25.0 / 216.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2
_E1, _E3, _E4, _E5, _E6 = 1.0 / 360.0, -128.0 / 4275.0, -2197.0 / 75240.0, 1.0 / 50.0, 2.0 / 55.0

_SAFETY, _GROW, _SHRINK = 0.9, 5.0, 0.2


@njit(cache=True)
def _continued_radius(r2, r_ref):
    r = np.sqrt(r2)
    if abs(-r - r_ref) < abs(r - r_ref):
        return -r
    return r


@njit(cache=True)
def _rhs(y, kind, v0, a, w2, r_ref, out):
    """Fill out with dy/dt; return the radius used (continued from r_ref)."""
    x = y[0]
    yy = y[1]
    z = y[2]
    r2 = x * x + yy * yy + z * z
    r = _continued_radius(r2, r_ref)
    if v0 == 0.0:
        fac = 0.0j
    elif kind == 0:
        fac = v0 * a * np.exp(-r / a) * (1.0 / (r * r) + 1.0 / (a * r)) / r
    else:
        inv = 1.0 / r2
        s6 = (a * a * inv) ** 3
        fac = 4.0 * v0 * (-12.0 * s6 * s6 + 6.0 * s6) * inv
    out[0] = y[3]
    out[1] = y[4]
    out[2] = y[5]
    out[3] = -w2 * x - fac * x
    out[4] = -w2 * yy - fac * yy
    out[5] = -fac * z
    return r


@njit(cache=True)
def _energy(y, kind, v0, a, w2, r):
    kin = 0.5 * (y[3] * y[3] + y[4] * y[4] + y[5] * y[5])
    trap = 0.5 * w2 * (y[0] * y[0] + y[1] * y[1])
    if v0 == 0.0:
        return kin + trap
    if kind == 0:
        v = -v0 * (a / r) * np.exp(-r / a)
    else:
        s6 = (a * a / (r * r)) ** 3
        v = 4.0 * v0 * (s6 * s6 - s6)
    return kin + trap + v


@njit(cache=True)
def _stage(y, h, k1, k2, k3, k4, k5, k6, kind, v0, a, w2, r_ref, tmp, ynew, err):
    """One Fehlberg trial step; returns the scaled-free error components in err."""
    _rhs(y, kind, v0, a, w2, r_ref, k1)
    for i in range(6):
        tmp[i] = y[i] + h * _A21 * k1[i]
    _rhs(tmp, kind, v0, a, w2, r_ref, k2)
    for i in range(6):
        tmp[i] = y[i] + h * (_A31 * k1[i] + _A32 * k2[i])
    _rhs(tmp, kind, v0, a, w2, r_ref, k3)
    for i in range(6):
        tmp[i] = y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
    _rhs(tmp, kind, v0, a, w2, r_ref, k4)
    for i in range(6):
        tmp[i] = y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
    _rhs(tmp, kind, v0, a, w2, r_ref, k5)
    for i in range(6):
        tmp[i] = y[i] + h * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i] + _A65 * k5[i])
    _rhs(tmp, kind, v0, a, w2, r_ref, k6)
    for i in range(6):
        ynew[i] = y[i] + h * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i])
        err[i] = h * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i])


@njit(cache=True)
def _error_norm(y, ynew, err, atol, rtol):
    worst = 0.0
    for i in range(6):
        sr = atol + rtol * max(abs(y[i].real), abs(ynew[i].real))
        si = atol + rtol * max(abs(y[i].imag), abs(ynew[i].imag))
        e = max(abs(err[i].real) / sr, abs(err[i].imag) / si)
        if e > worst:
            worst = e
    return worst


@njit(cache=True)
def _next_h(h, enorm):
    if enorm == 0.0:
        return h * _GROW
    fac = _SAFETY * enorm ** (-0.2)
    if fac > _GROW:
        fac = _GROW
    elif fac < _SHRINK:
        fac = _SHRINK
    return h * fac


@njit(cache=True)
def _single_step(y, h, kind, v0, a, w2, atol, rtol):
    n = y.shape[0]
    k1 = np.empty(n, np.complex128)
    k2 = np.empty(n, np.complex128)
    k3 = np.empty(n, np.complex128)
    k4 = np.empty(n, np.complex128)
    k5 = np.empty(n, np.complex128)
    k6 = np.empty(n, np.complex128)
    tmp = np.empty(n, np.complex128)
    ynew = np.empty(n, np.complex128)
    err = np.empty(n, np.complex128)
    r_ref = np.sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2])
    _stage(y, h, k1, k2, k3, k4, k5, k6, kind, v0, a, w2, r_ref, tmp, ynew, err)
    enorm = _error_norm(y, ynew, err, atol, rtol)
    return ynew, enorm, _next_h(h, enorm)


@njit(cache=True)
def _wrap(d):
    while d > np.pi:
        d -= 2.0 * np.pi
    while d < -np.pi:
        d += 2.0 * np.pi
    return d


@njit(cache=True)
def _visit_excess(acc, phi_in, phi_out, side_in, side_out):
    if side_in != side_out:
        return abs(acc) - np.pi
    return abs(acc) - abs(_wrap(phi_out - phi_in))


@njit(cache=True)
def _integrate(
    y0, t0, direction, kind, v0, a, w, atol, rtol, h_init, h_min, h_max, max_steps,
    z_cut, t_span, stop_on_escape, policy, theta_rmax,
    samples, stride, dens, dx0, dx1, dz0, dz1,
):
    """Integrate until escape / time budget / failure.

    policy: 0 principal, 1 continue, 2 terminate.  Returns (code, y, t, n_steps, drift, theta, n_samples, h0, flips).
    """
    w2 = w * w
    y = y0.copy()
    n = 6
    k1 = np.empty(n, np.complex128)
    k2 = np.empty(n, np.complex128)
    k3 = np.empty(n, np.complex128)
    k4 = np.empty(n, np.complex128)
    k5 = np.empty(n, np.complex128)
    k6 = np.empty(n, np.complex128)
    tmp = np.empty(n, np.complex128)
    ynew = np.empty(n, np.complex128)
    err = np.empty(n, np.complex128)

    r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2]
    if r2 == 0:
        return 3, y, t0, 0, 0.0, 0.0, 0, 0.0j, 0
    r_ref = np.sqrt(r2)
    h0 = _energy(y, kind, v0, a, w2, r_ref)
    drift = 0.0
    t = t0
    h = h_init
    steps = 0
    flips = 0
    theta = 0.0

    # winding bookkeeping
    inside = False
    phi_in = 0.0
    side_in = 0.0
    phi_prev = 0.0
    acc = 0.0

    nsamp = 0
    max_samp = samples.shape[0]
    if max_samp > 0:
        samples[0, 0] = t
        for i in range(6):
            samples[0, 1 + 2 * i] = y[i].real
            samples[0, 2 + 2 * i] = y[i].imag
        samples[0, 13] = 0.0
        nsamp = 1
    use_dens = dens.shape[0] > 0
    nxd = dens.shape[0]
    nzd = dens.shape[1] if use_dens else 0

    code = 4
    t_end = t0 + direction * t_span
    while True:
        if steps >= max_steps:
            code = 4
            break
        remaining = (t_end - t) * direction
        if remaining <= 0.0:
            code = 2 if stop_on_escape else 5
            break
        if h > remaining:
            h = remaining
        # r_ref = 0 makes _continued_radius return the principal root
        r_use = 0.0j if policy == 0 else r_ref
        _stage(y, direction * h, k1, k2, k3, k4, k5, k6, kind, v0, a, w2, r_use, tmp, ynew, err)
        enorm = _error_norm(y, ynew, err, atol, rtol)
        if not (enorm <= 1.0):
            if enorm != enorm:
                hn = h * _SHRINK
            else:
                hn = _next_h(h, enorm)
            if hn < h_min:
                code = 4
                break
            h = hn
            continue

        r2n = ynew[0] * ynew[0] + ynew[1] * ynew[1] + ynew[2] * ynew[2]
        if r2n == 0:
            code = 3
            break
        rp = np.sqrt(r2n)
        rn = rp
        if abs(-rp - r_ref) < abs(rp - r_ref):
            rn = -rp
        if kind == 0 and v0 != 0.0 and rn != rp:
            if policy == 2:
                code = 3
                break
            flips += 1
        if policy == 0:
            rn = rp

        # density residency: time weight at the step midpoint
        if use_dens:
            xm = 0.5 * (y[0].real + ynew[0].real)
            zm = 0.5 * (y[2].real + ynew[2].real)
            if xm >= dx0 and xm < dx1 and zm >= dz0 and zm < dz1:
                ix = int((xm - dx0) / (dx1 - dx0) * nxd)
                iz = int((zm - dz0) / (dz1 - dz0) * nzd)
                if ix < nxd and iz < nzd:
                    dens[ix, iz] += h

        t = t + direction * h
        for i in range(6):
            y[i] = ynew[i]
        r_ref = rn
        steps += 1

        e = _energy(y, kind, v0, a, w2, r_ref)
        d = abs(e - h0)
        if d > drift:
            drift = d

        # winding angle in the (Re x, Re z) plane
        rin = abs(rp.real) < theta_rmax
        phi = math.atan2(y[0].real, y[2].real)
        if rin:
            if not inside:
                inside = True
                phi_in = phi
                side_in = 1.0 if y[2].real >= 0 else -1.0
                acc = 0.0
            else:
                acc += _wrap(phi - phi_prev)
        elif inside:
            inside = False
            acc += _wrap(phi - phi_prev)
            theta += _visit_excess(acc, phi_in, phi, side_in, 1.0 if y[2].real >= 0 else -1.0)
        phi_prev = phi

        if max_samp > 0 and nsamp < max_samp and steps % stride == 0:
            samples[nsamp, 0] = t
            for i in range(6):
                samples[nsamp, 1 + 2 * i] = y[i].real
                samples[nsamp, 2 + 2 * i] = y[i].imag
            samples[nsamp, 13] = d
            nsamp += 1

        if stop_on_escape:
            zr = y[2].real
            if zr >= z_cut and y[5].real > 0:
                code = 0
                break
            if zr <= -z_cut and y[5].real < 0:
                code = 1
                break

        hn = _next_h(h, enorm)
        h = hn if hn < h_max else h_max

    if inside:
        theta += _visit_excess(acc, phi_in, phi_prev, side_in, 1.0 if y[2].real >= 0 else -1.0)
    if max_samp > 0 and nsamp < max_samp and nsamp > 0 and samples[nsamp - 1, 0] != t:
        samples[nsamp, 0] = t
        for i in range(6):
            samples[nsamp, 1 + 2 * i] = y[i].real
            samples[nsamp, 2 + 2 * i] = y[i].imag
        samples[nsamp, 13] = abs(_energy(y, kind, v0, a, w2, r_ref) - h0)
        nsamp += 1
    return code, y, t, steps, drift, theta, nsamp, h0, flips


_EMPTY_SAMPLES = np.zeros((0, 14))
_EMPTY_DENS = np.zeros((0, 0))


# --------------------------------------------------------------------------
# Python surface


def phase_derivatives(s: PhaseState, spec: PotentialSpec, units: UnitSystem = UnitSystem()) -> PhaseState:
    """Time derivative (dq/dt, dp/dt) of the complex-analytic Hamilton equations."""
    q = s.q
    force = -units.omega**2 * np.array([q[0], q[1], 0.0], dtype=complex)
    if spec.v0 != 0.0:
        r = complex_radius(q)
        force -= potential_derivative(spec, r) / r * q
    return PhaseState(s.p.copy(), force, s.t)


def h1_gradient(s: PhaseState, spec: PotentialSpec, units: UnitSystem = UnitSystem(), dps: int = 40):
    """Real gradient of H1 = Re H over (x1, x2, p1, p2) per axis, at high precision.

    Uses mpmath differentiation of Re H as a function of the 12 real
    variables; independent of the analytic force in :func:`phase_derivatives`.
    Returns arrays (dH1/dq1, dH1/dq2, dH1/dp1, dH1/dp2), each of length 3.
    """
    with mp.workdps(dps):
        w2 = mp.mpf(units.omega) ** 2
        v0 = mp.mpf(spec.v0)
        a = mp.mpf(spec.range)
        base = [mp.mpf(float(v)) for c in list(s.q) + list(s.p) for v in (c.real, c.imag)]

        def h1(*vals):
            q = [mp.mpc(vals[2 * i], vals[2 * i + 1]) for i in range(3)]
            p = [mp.mpc(vals[6 + 2 * i], vals[7 + 2 * i]) for i in range(3)]
            r2 = q[0] ** 2 + q[1] ** 2 + q[2] ** 2
            h = (p[0] ** 2 + p[1] ** 2 + p[2] ** 2) / 2 + w2 * (q[0] ** 2 + q[1] ** 2) / 2
            if spec.kind is PotentialKind.YUKAWA:
                r = mp.sqrt(r2)
                h += -v0 * (a / r) * mp.exp(-r / a)
            else:
                s6 = (a * a / r2) ** 3
                h += 4 * v0 * (s6 * s6 - s6)
            return mp.re(h)

        grads = []
        for k in range(12):
            order = [0] * 12
            order[k] = 1
            grads.append(float(mp.diff(h1, base, tuple(order))))
    g = np.array(grads)
    return g[0:6:2], g[1:6:2], g[6:12:2], g[7:12:2]


def hamilton_split_form(dq1, dq2, dp1, dp2) -> tuple[np.ndarray, np.ndarray]:
    """Modified Hamilton equations from the real gradient of H1.

    Returns complex (dq/dt, dp/dt) assembled from the real and imaginary parts.
    """
    q1dot = np.asarray(dp1)
    q2dot = -np.asarray(dp2)
    p1dot = -np.asarray(dq1)
    p2dot = np.asarray(dq2)
    return q1dot + 1j * q2dot, p1dot + 1j * p2dot


def rkf45_step(s: PhaseState, h: float, cfg: IntegratorConfig, spec: PotentialSpec, units: UnitSystem = UnitSystem()):
    """One trial Fehlberg step of size h.

    Returns ``(s_next, error_estimate, h_next)``; the error estimate is the
    max-norm of the 4th/5th-order difference scaled by atol + rtol |y|, so the
    step is acceptable when it is <= 1.
    """
    if not (cfg.h_min <= abs(h) <= cfg.h_max):
        raise ArgumentError(f"|h|={abs(h)} outside [h_min, h_max]")
    y = s.as_array()
    ynew, enorm, h_next = _single_step(y, float(h), spec.kind.code, float(spec.v0), float(spec.range),
                                       float(units.omega**2), cfg.atol, cfg.rtol)
    if enorm > 1.0 and abs(h_next) < cfg.h_min:
        raise StepSizeUnderflow(f"required step {abs(h_next):.3e} below h_min={cfg.h_min:.3e}")
    return PhaseState.from_array(ynew, s.t + h), float(enorm), float(min(abs(h_next), cfg.h_max))


@dataclass
class DensityGrid:
    """Cells over the real (x, z) plane used for residency maps."""

    x_range: tuple[float, float] = (-2.5, 2.5)
    z_range: tuple[float, float] = (-10.0, 10.0)
    nx: int = 50
    nz: int = 200

    def edges(self):
        return np.linspace(*self.x_range, self.nx + 1), np.linspace(*self.z_range, self.nz + 1)


def _run(y0, t0, direction, t_span, cfg, spec, units, *, stop_on_escape, z_cut, n_samples=0, stride=1, dens=None,
         dgrid: DensityGrid | None = None, theta_region=5.0):
    samples = np.zeros((n_samples, 14)) if n_samples else _EMPTY_SAMPLES
    if dens is None:
        dens = _EMPTY_DENS
        bounds = (0.0, 0.0, 0.0, 0.0)
    else:
        bounds = (*dgrid.x_range, *dgrid.z_range)
    out = _integrate(
        np.asarray(y0, dtype=np.complex128), float(t0), float(direction), spec.kind.code, float(spec.v0),
        float(spec.range), float(units.omega), cfg.atol, cfg.rtol, cfg.h_init, cfg.h_min, cfg.h_max,
        int(cfg.max_steps), float(z_cut), float(t_span), bool(stop_on_escape), BRANCH_POLICIES.index(cfg.branch_policy),
        float(theta_region), samples, int(max(stride, 1)), dens, *bounds,
    )
    code, y, t, steps, drift, theta, nsamp, h0, flips = out
    return Outcome(code), y, t, steps, drift, theta, samples[:nsamp] if n_samples else None, h0, flips


def integrate_trajectory(
    initial: PhaseState,
    cfg: IntegratorConfig = IntegratorConfig(),
    spec: PotentialSpec = PotentialSpec(),
    units: UnitSystem = UnitSystem(),
    *,
    z0: float = -10.0,
    n_samples: int = 0,
    stride: int = 1,
    density: np.ndarray | None = None,
    density_grid: DensityGrid | None = None,
) -> TrajectoryRecord:
    """Run one scattering trajectory until it escapes past +-z_cut.

    Failures never raise: they are reported through ``record.outcome``.
    ``density`` (shape (nx, nz)) accumulates time spent per (Re x, Re z) cell.
    """
    z_cut = cfg.escape_distance(z0, spec)
    theta_region = 5.0 * spec.range
    outcome, y, t, steps, drift, theta, samples, h0, flips = _run(
        initial.as_array(), initial.t, 1.0, cfg.time_budget(z_cut, initial.p[2]), cfg, spec, units, stop_on_escape=True, z_cut=z_cut,
        n_samples=n_samples, stride=stride, dens=density, dgrid=density_grid, theta_region=theta_region,
    )
    return TrajectoryRecord(outcome, PhaseState.from_array(y, t), float(theta), float(drift), int(steps), complex(h0),
                            int(flips), samples, theta_region)


def propagate(
    initial: PhaseState,
    duration: float,
    cfg: IntegratorConfig = IntegratorConfig(),
    spec: PotentialSpec = PotentialSpec(),
    units: UnitSystem = UnitSystem(),
    *,
    n_samples: int = 0,
    stride: int = 1,
) -> TrajectoryRecord:
    """Integrate for a fixed (signed) duration without escape detection."""
    direction = 1.0 if duration >= 0 else -1.0
    cfg = replace(cfg, max_steps=max(cfg.max_steps, 1))
    outcome, y, t, steps, drift, theta, samples, h0, flips = _run(
        initial.as_array(), initial.t, direction, abs(duration), cfg, spec, units, stop_on_escape=False,
        z_cut=np.inf, n_samples=n_samples, stride=stride,
    )
    return TrajectoryRecord(outcome, PhaseState.from_array(y, t), float(theta), float(drift), int(steps), complex(h0),
                            int(flips), samples)


def pt_transform(s: PhaseState) -> PhaseState:
    """Combined parity and time reversal: q -> -conj(q), p -> conj(p)."""
    return PhaseState(-np.conj(s.q), np.conj(s.p), s.t)


def winding_angle(record_or_path, region: float | None = None, max_jump: float = 0.5 * np.pi) -> float:
    """Rotation of the real (x, z) projection about the origin beyond a direct pass.

    For every visit of the region Re r < ``region`` the unwrapped polar angle
    is accumulated and the rotation of a direct pass is subtracted: pi for a
    visit that crosses z = 0 (signed, so free passes average to zero), the
    shortest entry-to-exit rotation for one that returns to its side.
    Accepts a TrajectoryRecord with samples or an (n, 2) array of (x, z) points.
    """
    if isinstance(record_or_path, TrajectoryRecord):
        if record_or_path.samples is None or len(record_or_path.samples) < 2:
            raise InsufficientSamples("record carries no path samples")
        smp = record_or_path.samples
        x = smp[:, 1] + 1j * smp[:, 2]
        y = smp[:, 3] + 1j * smp[:, 4]
        z = smp[:, 5] + 1j * smp[:, 6]
        rr = np.abs(np.sqrt(x * x + y * y + z * z).real)
        xr, zr = x.real, z.real
        region = record_or_path.theta_region if region is None else region
    else:
        path = np.asarray(record_or_path, dtype=float)
        xr, zr = path[:, 0], path[:, 1]
        rr = np.hypot(xr, zr)
        region = np.inf if region is None else region
    phi = np.arctan2(xr, zr)
    inside = rr < region
    theta = 0.0
    i = 0
    n = len(phi)
    while i < n:
        if not inside[i]:
            i += 1
            continue
        j = i
        acc = 0.0
        while j + 1 < n and inside[j + 1]:
            d = (phi[j + 1] - phi[j] + np.pi) % (2 * np.pi) - np.pi
            if abs(d) > max_jump:
                raise InsufficientSamples(f"angle jump {d:.3f} rad between consecutive samples")
            acc += d
            j += 1
        # closing segment out of the region, as in the compiled bookkeeping
        if j + 1 < n:
            d = (phi[j + 1] - phi[j] + np.pi) % (2 * np.pi) - np.pi
            if abs(d) > max_jump:
                raise InsufficientSamples(f"angle jump {d:.3f} rad between consecutive samples")
            acc += d
            end = j + 1
        else:
            end = j
        theta += _visit_excess(acc, phi[i], phi[end], 1.0 if zr[i] >= 0 else -1.0, 1.0 if zr[end] >= 0 else -1.0)
        i = j + 1
    return float(theta)


def write_trajectory_csv(path, record: TrajectoryRecord):
    if record.samples is None:
        raise InsufficientSamples("record carries no path samples")
    header = ["t"] + [f"{p}_{c}" for c in ("x", "y", "z", "px", "py", "pz") for p in ("re", "im")] + ["abs_dH"]
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in record.samples:
            w.writerow([repr(float(v)) for v in row])
