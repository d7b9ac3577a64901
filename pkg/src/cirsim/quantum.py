"""Coupled-channel quantum scattering in the harmonic waveguide (m = 0).

Discretization
--------------
psi(r, theta) is represented by its values on the Gauss-Legendre angles,
u_j(r) = r sqrt(lambda_j) psi(r, theta_j).  The radial functions obey

    -u'' + K u / r^2 + 2 (V(r) + omega^2 r^2 sin^2(theta_j) / 2 - E) u = 0,

K_jj' = sum_l l(l+1) (2l+1)/2 sqrt(lambda_j lambda_j') P_l(x_j) P_l(x_j').
Three-point differences on the mapped grid r_i = r_m (e^{gamma x_i} - 1)/(e^gamma - 1)
give a block-tridiagonal system; the regular solutions (u(0) = 0) are
generated by the ratio recursion u_i = R_i u_{i+1}, which never forms the
exponentially growing closed-channel solutions explicitly.

Matching
--------
At r = r_m the regular solutions span {(u, Y u)} with Y the log-derivative
matrix.  The asymptotic channel functions e^{+-ik z} Phi_n(rho) are sampled at
the grid angles and f+ (forward hemisphere) / f- (backward hemisphere) are
found by least squares.  With ``parity=True`` the even and odd parts in z
are solved separately on half-size blocks and recombined.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import eval_genlaguerre, eval_laguerre

from cirsim.errors import ArgumentError, ConvergenceError, DivergentLength, IllConditionedMatch
from cirsim.model import PotentialKind, PotentialSpec, ScatterParams, UnitSystem, radial_potential, transverse_energy

COND_LIMIT = 1e12
THRESHOLD_GAP = 1e-10
DIVERGENCE_LIMIT = 1e8
# |V(r_m)| allowed at the matching sphere; the LJ r^-6 tail cannot reach 1e-12 at any practical r_m
ASYMPTOTIC_V = 1e-6


# --------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class AngularGrid:
    n_theta: int
    x: np.ndarray  # cos(theta_j), descending so theta is ascending
    weights: np.ndarray
    legendre: np.ndarray  # P_l(x_j), shape (n_theta [l], n_theta [j])

    @property
    def theta(self) -> np.ndarray:
        return np.arccos(self.x)

    @property
    def p_hat(self) -> np.ndarray:
        """P-hat_lj = lambda_j P_l(x_j)."""
        return self.legendre * self.weights[None, :]

    @property
    def basis(self) -> np.ndarray:
        """A = P-hat^{-1} (direct inversion)."""
        return np.linalg.inv(self.p_hat)

    def coupling(self) -> np.ndarray:
        """Angular kinetic matrix K (symmetric, eigenvalues l(l+1))."""
        n = self.n_theta
        ell = np.arange(n)
        s = self.legendre.T * np.sqrt(self.weights)[:, None]  # (j, l)
        return (s * (ell * (ell + 1) * (2 * ell + 1) / 2.0)[None, :]) @ s.T


def _legendre_table(n_max, x):
    """P_l(x) for l = 0..n_max-1 by the three-term recurrence."""
    table = np.empty((n_max, len(x)))
    table[0] = 1.0
    if n_max > 1:
        table[1] = x
    for l in range(1, n_max - 1):
        table[l + 1] = ((2 * l + 1) * x * table[l] - l * table[l - 1]) / (l + 1)
    return table


def gauss_legendre(n: int, tol: float = 1e-14, max_iter: int = 100):
    """Nodes (descending) and weights by Newton iteration from asymptotic guesses."""
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(max_iter):
        p0, p1 = np.ones_like(x), x.copy()
        for l in range(1, n):
            p0, p1 = p1, ((2 * l + 1) * x * p1 - l * p0) / (l + 1)
        # p1 = P_n, p0 = P_{n-1}
        dp = n * (x * p1 - p0) / (x * x - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < tol:
            break
    else:
        raise ConvergenceError(f"Legendre nodes did not converge for n={n}")
    p0, p1 = np.ones_like(x), x.copy()
    for l in range(1, n):
        p0, p1 = p1, ((2 * l + 1) * x * p1 - l * p0) / (l + 1)
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    return x, w


def build_angular_grid(n_theta: int) -> AngularGrid:
    if n_theta < 2:
        raise ArgumentError("n_theta must be >= 2")
    x, w = gauss_legendre(n_theta)
    return AngularGrid(n_theta, x, w, _legendre_table(n_theta, x))


@dataclass(frozen=True)
class RadialGrid:
    n_r: int
    r_m: float
    gamma: float
    r: np.ndarray

    @property
    def with_origin(self) -> np.ndarray:
        return np.concatenate([[0.0], self.r])


def build_radial_grid(n_r: int, r_m: float, gamma: float) -> RadialGrid:
    if n_r < 3 or not r_m > 0 or gamma < 0:
        raise ArgumentError("need n_r >= 3, r_m > 0, gamma >= 0")
    xi = np.arange(1, n_r + 1) / n_r
    if gamma == 0.0:
        r = r_m * xi
    else:
        r = r_m * np.expm1(gamma * xi) / math.expm1(gamma)
    r[-1] = r_m
    return RadialGrid(n_r, float(r_m), float(gamma), r)


# --------------------------------------------------------------------------
# channels


def channel_function(n: int, rho, units: UnitSystem = UnitSystem()):
    """m = 0 oscillator eigenfunction and its rho derivative."""
    w = units.omega
    s = w * np.asarray(rho, dtype=float) ** 2
    norm = math.sqrt(w / math.pi)
    g = np.exp(-0.5 * s)
    ln = eval_laguerre(n, s)
    # d/ds L_n(s) = -L^{(1)}_{n-1}(s)
    dln = -eval_genlaguerre(n - 1, 1, s) if n > 0 else np.zeros_like(s)
    phi = norm * ln * g
    dphi = norm * g * (dln - 0.5 * ln) * 2.0 * w * np.asarray(rho, dtype=float)
    return phi, dphi


@dataclass(frozen=True)
class ChannelSet:
    E: float
    m: int
    thresholds: np.ndarray  # open channels only
    k: np.ndarray
    units: UnitSystem = UnitSystem()

    @property
    def n_open(self) -> int:
        return len(self.k)


def build_channels(E: float, units: UnitSystem = UnitSystem(), m: int = 0) -> ChannelSet:
    if m != 0:
        raise ArgumentError("only m = 0 is supported")
    thr = []
    n = 0
    while True:
        e_n = transverse_energy(n, m, units)
        if e_n > E + THRESHOLD_GAP:
            break
        if abs(E - e_n) <= THRESHOLD_GAP:
            raise ArgumentError(f"E={E} within {THRESHOLD_GAP} of threshold E_{n}={e_n}")
        thr.append(e_n)
        n += 1
    if not thr:
        raise ArgumentError(f"E={E} below the lowest threshold")
    thr = np.array(thr)
    return ChannelSet(float(E), m, thr, np.sqrt(2.0 * (E - thr)), units)


# --------------------------------------------------------------------------
# radial system


@dataclass(frozen=True)
class QuantumNumerics:
    n_theta: int = 128
    n_r: int = 1000
    r_m: float = 20.0
    gamma: float = 4.0
    parity: bool = True
    richardson: bool = True

    def __post_init__(self):
        if self.n_theta < 4 or self.n_r < 50 or not self.r_m > 0 or not self.gamma > 0:
            raise ArgumentError("need n_theta >= 4, n_r >= 50, r_m > 0, gamma > 0")
        if self.parity and self.n_theta % 2:
            raise ArgumentError("parity splitting needs an even n_theta")


@dataclass
class RadialSystem:
    """Block-tridiagonal operator alpha_i u_{i-1} + (beta_i + W_i) u_i + gamma_i u_{i+1}.

    ``W_i = K / r_i^2 + diag(w_diag[i])``; rows i = 1..n_r-1 (u_0 = 0 at the origin).
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    K: np.ndarray
    w_diag: np.ndarray  # (n_r, n_block)
    r: np.ndarray

    @property
    def bandwidth(self) -> int:
        return self.K.shape[0]

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Residual of the interior equations for u of shape (n_r, n_block, ...)."""
        u0 = np.concatenate([np.zeros_like(u[:1]), u], axis=0)
        out = []
        for i in range(1, len(self.r)):
            ui = u0[i]
            w = self.K @ ui / self.r[i - 1] ** 2 + self.w_diag[i - 1][:, None] * ui if ui.ndim == 2 else \
                self.K @ ui / self.r[i - 1] ** 2 + self.w_diag[i - 1] * ui
            out.append(self.alpha[i - 1] * u0[i - 1] + self.beta[i - 1] * ui + w + self.gamma[i - 1] * u0[i + 1])
        return np.array(out)


def _fd_coefficients(r_full):
    hm = r_full[1:-1] - r_full[:-2]
    hp = r_full[2:] - r_full[1:-1]
    s = hm + hp
    return -2.0 / (hm * s), 2.0 / (hm * hp), -2.0 / (hp * s)


def assemble_system(angular: AngularGrid, radial: RadialGrid, spec: PotentialSpec, E: float,
                    units: UnitSystem = UnitSystem(), parity: int | None = None) -> RadialSystem:
    """Radial operator on all angles (parity=None) or on the even (+1) / odd (-1) half."""
    K = angular.coupling()
    sin2 = 1.0 - angular.x**2
    if parity is not None:
        h = angular.n_theta // 2
        mirror = K[:h, ::-1][:, :h]  # K[j, jbar'] for forward j, j'
        K = K[:h, :h] + parity * mirror
        sin2 = sin2[:h]
    r = radial.r
    v = radial_potential(spec, r)
    w_diag = 2.0 * (v[:, None] + 0.5 * units.omega**2 * r[:, None] ** 2 * sin2[None, :] - E)
    alpha, beta, gamma = _fd_coefficients(radial.with_origin)
    return RadialSystem(alpha, beta, gamma, K, w_diag, r)


def log_derivative(system: RadialSystem) -> np.ndarray:
    """Y with u'(r_m) = Y u(r_m) for every regular solution."""
    K, r, wd = system.K, system.r, system.w_diag
    nb = K.shape[0]
    eye = np.eye(nb)
    R = np.zeros((nb, nb))
    ratios = [None] * len(r)
    for i in range(len(r) - 1):
        M = system.alpha[i] * R + K / (r[i] * r[i])
        M[np.diag_indices(nb)] += system.beta[i] + wd[i]
        R = np.linalg.solve(M, -system.gamma[i] * eye)
        ratios[i] = R
    u_n = eye
    u_n1 = ratios[-2]
    u_n2 = ratios[-3] @ u_n1
    d1 = r[-1] - r[-2]
    d2 = r[-1] - r[-3]
    return u_n * (1.0 / d1 + 1.0 / d2) - u_n1 * (d2 / (d1 * (d2 - d1))) + u_n2 * (d1 / (d2 * (d2 - d1)))


# --------------------------------------------------------------------------
# matching


@dataclass
class ScatteringSolution:
    f_plus: np.ndarray  # (n_open,) amplitudes for the incident channel
    f_minus: np.ndarray
    T: float
    R: float
    T_channels: np.ndarray
    channels: ChannelSet
    incident: int
    condition: float

    @property
    def unitarity_defect(self) -> float:
        return abs(self.T + self.R - 1.0)

    @property
    def n_open(self) -> int:
        return self.channels.n_open


def _sample(fun_z, dfun_z, ch: ChannelSet, n, x, r_m):
    """Channel function F = g(z) Phi_n(rho) and dF/dr on the sphere r = r_m at cos(theta) = x."""
    s = np.sqrt(np.maximum(1.0 - x * x, 0.0))
    z, rho = r_m * x, r_m * s
    phi, dphi = channel_function(n, rho, ch.units)
    g, dg = fun_z(z), dfun_z(z)
    F = g * phi
    dF = x * dg * phi + s * g * dphi
    return F, dF


def _to_u(F, dF, w, r_m):
    sw = np.sqrt(w)
    return r_m * sw * F, sw * (F + r_m * dF)


def _lstsq(M, rhs):
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedMatch(f"matching condition number {cond:.3e}")
    sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    return sol, cond


def _match_full(Y, angular, ch, incident, r_m):
    x, w = angular.x, angular.weights
    fwd = x >= 0
    k_in = ch.k[incident]
    F, dF = _sample(lambda z: np.exp(1j * k_in * z), lambda z: 1j * k_in * np.exp(1j * k_in * z), ch, incident, x, r_m)
    u_inc, du_inc = _to_u(F, dF, w, r_m)
    cols = []
    for sign, mask in ((1.0, fwd), (-1.0, ~fwd)):
        for n, k in enumerate(ch.k):
            F, dF = _sample(lambda z: np.exp(sign * 1j * k * z), lambda z: sign * 1j * k * np.exp(sign * 1j * k * z),
                            ch, n, x, r_m)
            u, du = _to_u(F * mask, dF * mask, w, r_m)
            cols.append(du - Y @ u)
    M = np.array(cols).T
    sol, cond = _lstsq(M, -(du_inc - Y @ u_inc))
    ne = ch.n_open
    return sol[:ne], sol[ne:], cond


def _match_parity(Y_even, Y_odd, angular, ch, incident, r_m):
    h = angular.n_theta // 2
    x, w = angular.x[:h], angular.weights[:h]
    k_in = ch.k[incident]
    amps = {}
    conds = []
    for par, Y in ((1, Y_even), (-1, Y_odd)):
        if par == 1:
            g, dg = (lambda z: np.cos(k_in * z)), (lambda z: -k_in * np.sin(k_in * z))
        else:
            g, dg = (lambda z: 1j * np.sin(k_in * z)), (lambda z: 1j * k_in * np.cos(k_in * z))
        F, dF = _sample(g, dg, ch, incident, x, r_m)
        u_inc, du_inc = _to_u(F, dF, w, r_m)
        cols = []
        for n, k in enumerate(ch.k):
            F, dF = _sample(lambda z: np.exp(1j * k * z), lambda z: 1j * k * np.exp(1j * k * z), ch, n, x, r_m)
            u, du = _to_u(F, dF, w, r_m)
            cols.append(du - Y @ u)
        sol, cond = _lstsq(np.array(cols).T, -(du_inc - Y @ u_inc))
        amps[par] = sol
        conds.append(cond)
    return amps[1] + amps[-1], amps[1] - amps[-1], max(conds)


def _log_derivatives(angular, radial, channels, spec, parity):
    units = channels.units
    if parity:
        return [log_derivative(assemble_system(angular, radial, spec, channels.E, units, parity=p)) for p in (1, -1)]
    return [log_derivative(assemble_system(angular, radial, spec, channels.E, units))]


def _check_asymptotic(r_m, ch: ChannelSet, spec):
    w = ch.units.omega
    if 0.5 * ch.units.mu * w * w * r_m * r_m < 10.0 * ch.E:
        raise ArgumentError(f"r_m={r_m} too small: trap energy at r_m must exceed 10 E")
    v = abs(float(radial_potential(spec, r_m)))
    if v > ASYMPTOTIC_V:
        raise ArgumentError(f"|V(r_m)|={v:.2e} > {ASYMPTOTIC_V}: matching sphere not asymptotic")


def solve_and_match(angular: AngularGrid, radial: RadialGrid, channels: ChannelSet, spec: PotentialSpec,
                    incident: int = 0, parity: bool = True, richardson: bool = True) -> ScatteringSolution:
    """Amplitudes f+-, T and R for incidence in channel ``incident``.

    With ``richardson`` the log-derivative matrices are also computed on the
    radial grid with 2 n_r points and combined as (4 Y(h/2) - Y(h)) / 3,
    cancelling the O(h^2) error of the three-point differences before the
    (single) matching step.  Extrapolating Y rather than f keeps Y real, so
    the matched amplitudes stay flux conserving.
    """
    if not 0 <= incident < channels.n_open:
        raise ArgumentError(f"incident channel {incident} is not open")
    _check_asymptotic(radial.r_m, channels, spec)
    Ys = _log_derivatives(angular, radial, channels, spec, parity)
    if richardson:
        fine = build_radial_grid(2 * radial.n_r, radial.r_m, radial.gamma)
        Ys = [(4.0 * y2 - y1) / 3.0 for y1, y2 in zip(Ys, _log_derivatives(angular, fine, channels, spec, parity))]
    if parity:
        f_plus, f_minus, cond = _match_parity(Ys[0], Ys[1], angular, channels, incident, radial.r_m)
    else:
        f_plus, f_minus, cond = _match_full(Ys[0], angular, channels, incident, radial.r_m)
    ratio = channels.k / channels.k[incident]
    trans = f_plus.copy()
    trans[incident] += 1.0
    T_ch = ratio * np.abs(trans) ** 2
    R = float(np.sum(ratio * np.abs(f_minus) ** 2))
    return ScatteringSolution(f_plus, f_minus, float(T_ch.sum()), R, T_ch, channels, incident, float(cond))


def transmission_quantum(params: ScatterParams, spec: PotentialSpec, numerics: QuantumNumerics = QuantumNumerics(),
                         units: UnitSystem = UnitSystem(), full: bool = False):
    """Total T for incidence in the channel whose threshold is params.e_perp."""
    if params.lz != 0:
        raise ArgumentError("quantum solver supports lz = 0 only")
    n = params.n if params.n is not None else int(round((params.e_perp / units.omega - 1) / 2))
    if abs(transverse_energy(n, 0, units) - params.e_perp) > 1e-12:
        raise ArgumentError(f"e_perp={params.e_perp} is not an m=0 oscillator threshold")
    ch = build_channels(params.total_energy, units)
    ang = build_angular_grid(numerics.n_theta)
    rad = build_radial_grid(numerics.n_r, numerics.r_m, numerics.gamma)
    sol = solve_and_match(ang, rad, ch, spec, n, numerics.parity, numerics.richardson)
    return sol if full else sol.T


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SolutionSummary:
    """What a sweep CSV keeps of a ScatteringSolution."""

    T: float
    R: float
    unitarity_defect: float
    n_open: int


@dataclass
class QuantumCurve:
    v0: np.ndarray
    solutions: list

    @property
    def T(self) -> np.ndarray:
        return np.array([s.T if s is not None else np.nan for s in self.solutions])

    @property
    def R(self) -> np.ndarray:
        return np.array([s.R if s is not None else np.nan for s in self.solutions])

    @classmethod
    def from_csv(cls, path) -> "QuantumCurve":
        v0, sols = [], []
        with open(Path(path), newline="") as fh:
            for row in csv.DictReader(fh):
                v0.append(float(row["V0"]))
                T = float(row["T"])
                sols.append(None if not np.isfinite(T) else
                            SolutionSummary(T, float(row["R"]), float(row["unitarity_defect"]), int(row["n_open"])))
        return cls(np.array(v0), sols)

    def to_transmission_curve(self, base):
        """Same container as the classical sweeps (stderr = 0)."""
        from cirsim.mc import Axis, TransmissionCurve, TransmissionEstimate

        ests = [TransmissionEstimate(float(t), 0.0, 0, 0, 0, base, "" if np.isfinite(t) else "failed") for t in self.T]
        return TransmissionCurve(Axis.V0, self.v0, ests)

    def to_csv(self, path):
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["V0", "T", "R", "unitarity_defect", "n_open"])
            for v, s in zip(self.v0, self.solutions):
                if s is None:
                    w.writerow([repr(float(v)), "nan", "nan", "nan", 0])
                else:
                    w.writerow([repr(float(v)), repr(s.T), repr(s.R), repr(s.unitarity_defect), s.n_open])


def sweep_quantum(params: ScatterParams, spec: PotentialSpec, grid, numerics: QuantumNumerics = QuantumNumerics(),
                  units: UnitSystem = UnitSystem(), progress=None) -> QuantumCurve:
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ArgumentError("grid must be non-empty and strictly increasing")
    sols = []
    for v0 in grid:
        try:
            sol = transmission_quantum(params, spec.with_v0(v0), numerics, units, full=True)
        except IllConditionedMatch:
            sol = None
        sols.append(sol)
        if progress is not None:
            progress(v0, sol)
    return QuantumCurve(grid, sols)


def refine_tmin(params: ScatterParams, spec: PotentialSpec, bracket, numerics: QuantumNumerics = QuantumNumerics(),
                units: UnitSystem = UnitSystem(), xtol: float = 1e-6):
    """Bounded minimization of log T(V0) inside ``bracket`` = (lo, hi)."""
    from scipy.optimize import minimize_scalar

    f = lambda v: math.log(max(transmission_quantum(params, spec.with_v0(v), numerics, units), 1e-300))
    res = minimize_scalar(f, bounds=bracket, method="bounded", options={"xatol": xtol})
    return float(res.x), float(math.exp(res.fun))


# --------------------------------------------------------------------------
# free-space scattering length


def _outer_radius(spec: PotentialSpec, eps: float = 1e-14) -> float:
    r = 2.0 * spec.range
    while abs(float(radial_potential(spec, r))) >= eps:
        r *= 1.1
    return r


def zero_energy_solution(spec: PotentialSpec, r_end: float | None = None, n_eval: int = 0, mu: float = 1.0):
    """Regular zero-energy s-wave solution of u'' = 2 mu V u.

    Yukawa starts at r = 1e-8 r0 with u ~ r; Lennard-Jones starts deep in the
    core with the WKB log-derivative sqrt(2 mu V).  The state is renormalized
    between segments so the core growth cannot overflow.
    Returns (r_end, u, u') and, if n_eval > 0, the sampled path.
    """
    r_end = _outer_radius(spec) if r_end is None else r_end
    if spec.kind is PotentialKind.YUKAWA:
        r0 = 1e-8 * spec.range
        y0 = np.array([r0, 1.0])
    else:
        # start where the wall exceeds ~ 1e4 times the well depth
        r0 = spec.range * (4.0 * 1e4) ** (-1.0 / 12.0) if spec.v0 > 0 else 1e-8 * spec.range
        v = float(radial_potential(spec, r0))
        y0 = np.array([1.0, math.sqrt(2.0 * mu * v)]) if spec.v0 > 0 else np.array([r0, 1.0])

    def rhs(r, y):
        return [y[1], 2.0 * mu * float(radial_potential(spec, r)) * y[0]]

    edges = np.geomspace(r0, r_end, 40)
    y = y0
    path_r, path_u = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        t_eval = np.linspace(a, b, max(n_eval // 39, 2)) if n_eval else None
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=1e-12, atol=1e-300, t_eval=t_eval)
        if not sol.success:
            raise ConvergenceError(sol.message)
        if n_eval:
            path_r.append(sol.t)
            path_u.append(sol.y[0])  # renormalization is by positive factors: signs survive
        y = sol.y[:, -1]
        norm = max(abs(y[0]), abs(y[1]))
        y = y / norm
    if n_eval:
        return r_end, y[0], y[1], np.concatenate(path_r), np.concatenate(path_u)
    return r_end, y[0], y[1]


def scattering_length(spec: PotentialSpec, mu: float = 1.0) -> float:
    """a_s = r - u/u' where the potential has died out (|V| < 1e-14)."""
    if spec.v0 == 0.0:
        return 0.0
    r, u, du = zero_energy_solution(spec, mu=mu)
    a = r - u / du if du != 0 else math.inf
    if not abs(a) <= DIVERGENCE_LIMIT:
        raise DivergentLength(a)
    return float(a)


def count_bound_states(spec: PotentialSpec, mu: float = 1.0) -> int:
    """Nodes of the zero-energy solution on (0, inf) = number of s-wave bound states.

    Nodes inside the integration range are counted on a dense sample; beyond
    it u is linear, u ~ (r - a_s), with one more node iff a_s > r_end.
    """
    if spec.v0 == 0.0:
        return 0
    r_end, u_end, du_end, r, u = zero_energy_solution(spec, n_eval=40000, mu=mu)
    s = np.sign(u)
    s = s[s != 0]
    nodes = int(np.sum(s[1:] != s[:-1]))
    if du_end != 0 and r_end - u_end / du_end > r_end:
        nodes += 1
    return nodes


@dataclass
class ScatteringLengthCurve:
    v0: np.ndarray
    a_s: np.ndarray
    divergent: np.ndarray

    @classmethod
    def from_csv(cls, path) -> "ScatteringLengthCurve":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2].astype(bool))

    def to_csv(self, path):
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["V0", "a_s", "divergence_flag"])
            for v, a, d in zip(self.v0, self.a_s, self.divergent):
                w.writerow([repr(float(v)), repr(float(a)), int(d)])


def scattering_length_curve(spec: PotentialSpec, grid) -> ScatteringLengthCurve:
    grid = np.asarray(grid, dtype=float)
    a = np.empty(len(grid))
    div = np.zeros(len(grid), dtype=bool)
    for i, v in enumerate(grid):
        try:
            a[i] = scattering_length(spec.with_v0(v))
        except DivergentLength as exc:
            a[i] = exc.value
            div[i] = True
    return ScatteringLengthCurve(grid, a, div)


def first_divergence(spec: PotentialSpec, v_hi: float, tol: float = 1e-10) -> float:
    """Smallest V0 at which a bound state appears (bisection on the node count)."""
    lo, hi = 0.0, float(v_hi)
    if count_bound_states(spec.with_v0(hi)) == 0:
        raise ArgumentError("no bound state below v_hi")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if count_bound_states(spec.with_v0(mid)) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


__all__ = [
    "AngularGrid", "RadialGrid", "ChannelSet", "QuantumNumerics", "RadialSystem", "ScatteringSolution",
    "build_angular_grid", "build_radial_grid", "build_channels", "assemble_system", "log_derivative",
    "solve_and_match", "transmission_quantum", "sweep_quantum", "refine_tmin", "scattering_length",
    "scattering_length_curve", "count_bound_states", "first_divergence", "channel_function", "gauss_legendre",
]
