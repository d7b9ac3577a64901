"""Monte Carlo ensembles of confined scattering trajectories.

Every event draws its launch state from its own generator seeded by
(master_seed, index, attempt), so results do not depend on how events are
scheduled across workers.  Events ending as Trapped / BranchCut /
StepBudgetExceeded are redrawn (attempt + 1) up to ``max_attempts`` times;
a slot that never yields a transmitted or reflected trajectory is counted
in ``n_excluded``.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from cirsim.cdyn import DensityGrid, IntegratorConfig, Outcome, integrate_trajectory
from cirsim.errors import ArgumentError, ExcludedBudgetExceeded, NoInteriorMinimum
from cirsim.model import PotentialSpec, ScatterParams, UnitSystem
from cirsim.semiclassics import SamplingConfig, event_rng, sample_initial_state

EXCLUDED_LIMIT = 0.05
CHUNK = 32  # events per work unit; fixed so reductions are schedule independent


class Axis(str, Enum):
    V0 = "V0"
    EPERP = "EPerp"
    EPAR = "EPar"
    LZ = "Lz"
    RANGE = "Range"


@dataclass(frozen=True)
class EnsembleSpec:
    params: ScatterParams
    potential: PotentialSpec
    n_events: int = 1600
    master_seed: int = 42
    integrator: IntegratorConfig = IntegratorConfig()
    sampling: SamplingConfig = SamplingConfig()
    units: UnitSystem = UnitSystem()
    max_attempts: int = 3

    def __post_init__(self):
        if self.n_events < 1:
            raise ArgumentError("n_events must be >= 1")
        if self.max_attempts < 1:
            raise ArgumentError("max_attempts must be >= 1")

    def with_axis(self, axis: Axis, value: float) -> "EnsembleSpec":
        axis = Axis(axis)
        p, pot = self.params, self.potential
        if axis is Axis.V0:
            return dataclasses.replace(self, potential=pot.with_v0(value))
        if axis is Axis.RANGE:
            return dataclasses.replace(self, potential=PotentialSpec(pot.kind, pot.v0, float(value)))
        if axis is Axis.EPERP:
            return dataclasses.replace(self, params=ScatterParams(float(value), p.e_par, p.lz))
        if axis is Axis.EPAR:
            return dataclasses.replace(self, params=ScatterParams(p.e_perp, float(value), p.lz))
        lz = int(round(value))
        return dataclasses.replace(self, params=ScatterParams(p.e_perp, p.e_par, lz))

    def digest(self) -> str:
        """Stable short hash of every field, used as a cache key."""
        return hashlib.sha256(repr(self).encode()).hexdigest()[:16]


@dataclass
class TransmissionEstimate:
    t: float
    stderr: float
    n_trans: int
    n_refl: int
    n_excluded: int
    spec: EnsembleSpec
    flag: str = ""  # non-empty when the point failed (recorded by sweeps)

    @property
    def n_events(self) -> int:
        return self.n_trans + self.n_refl + self.n_excluded


@dataclass
class TransmissionCurve:
    axis: Axis
    grid: np.ndarray
    estimates: list[TransmissionEstimate]

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if len(self.grid) != len(self.estimates):
            raise ArgumentError("grid and estimates differ in length")

    @property
    def t(self) -> np.ndarray:
        return np.array([e.t for e in self.estimates])

    @property
    def stderr(self) -> np.ndarray:
        return np.array([e.stderr for e in self.estimates])

    def to_csv(self, path):
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["axis_value", "T", "stderr", "n_trans", "n_refl", "n_excluded"])
            for x, e in zip(self.grid, self.estimates):
                w.writerow([repr(float(x)), repr(float(e.t)), repr(float(e.stderr)), e.n_trans, e.n_refl, e.n_excluded])

    @classmethod
    def from_csv(cls, path, base: EnsembleSpec, axis: Axis = Axis.V0) -> "TransmissionCurve":
        grid, ests = [], []
        with open(Path(path), newline="") as fh:
            for row in csv.DictReader(fh):
                x = float(row["axis_value"])
                grid.append(x)
                ests.append(TransmissionEstimate(float(row["T"]), float(row["stderr"]), int(row["n_trans"]),
                                                 int(row["n_refl"]), int(row["n_excluded"]), base.with_axis(axis, x)))
        return cls(Axis(axis), np.array(grid), ests)


# --------------------------------------------------------------------------
# event execution


@dataclass
class _ChunkResult:
    outcomes: np.ndarray
    theta: np.ndarray
    density: np.ndarray | None = None


def _run_chunk(spec: EnsembleSpec, lo: int, hi: int, dgrid: DensityGrid | None = None) -> _ChunkResult:
    outcomes = np.empty(hi - lo, dtype=np.int8)
    theta = np.full(hi - lo, np.nan)
    dens = np.zeros((dgrid.nx, dgrid.nz)) if dgrid is not None else None
    for k, index in enumerate(range(lo, hi)):
        for attempt in range(spec.max_attempts):
            rng = event_rng(spec.master_seed, index, attempt)
            sample = sample_initial_state(spec.params, spec.sampling, rng, spec.potential, spec.units)
            local = np.zeros_like(dens) if dens is not None else None
            rec = integrate_trajectory(sample.state, spec.integrator, spec.potential, spec.units,
                                       z0=spec.sampling.z0, density=local, density_grid=dgrid)
            if not rec.outcome.excluded:
                break
        outcomes[k] = int(rec.outcome)
        if not rec.outcome.excluded:
            theta[k] = rec.theta
            if dens is not None:
                # raw dwell time: trapped events weigh in by how long they stay
                dens += local
    return _ChunkResult(outcomes, theta, dens)


def _chunk_args(n):
    return [(lo, min(lo + CHUNK, n)) for lo in range(0, n, CHUNK)]


def run_events(spec: EnsembleSpec, workers: int = 1, dgrid: DensityGrid | None = None):
    """Outcome codes, winding angles and (optionally) summed per-event density for all slots."""
    chunks = _chunk_args(spec.n_events)
    if workers <= 1 or len(chunks) == 1:
        results = [_run_chunk(spec, lo, hi, dgrid) for lo, hi in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_run_chunk, spec, lo, hi, dgrid) for lo, hi in chunks]
            results = [f.result() for f in futs]
    outcomes = np.concatenate([r.outcomes for r in results])
    theta = np.concatenate([r.theta for r in results])
    dens = None
    if dgrid is not None:
        dens = np.zeros((dgrid.nx, dgrid.nz))
        for r in results:  # fixed order: bit-identical for any worker count
            dens += r.density
    return outcomes, theta, dens


def _estimate_from_outcomes(spec, outcomes) -> TransmissionEstimate:
    n_trans = int(np.sum(outcomes == Outcome.TRANSMITTED))
    n_refl = int(np.sum(outcomes == Outcome.REFLECTED))
    n_excl = len(outcomes) - n_trans - n_refl
    n_ok = n_trans + n_refl
    if n_ok == 0:
        est = TransmissionEstimate(math.nan, math.nan, 0, 0, n_excl, spec, "all events excluded")
    else:
        t = n_trans / n_ok
        est = TransmissionEstimate(t, math.sqrt(t * (1.0 - t) / n_ok), n_trans, n_refl, n_excl, spec)
    return est


def _check_budget(est: TransmissionEstimate):
    if est.n_excluded > EXCLUDED_LIMIT * est.n_events:
        est.flag = f"excluded {est.n_excluded}/{est.n_events}"
        err = ExcludedBudgetExceeded(f"{est.n_excluded} of {est.n_events} events excluded")
        err.estimate = est
        raise err
    return est


def estimate_transmission(spec: EnsembleSpec, workers: int = 1) -> TransmissionEstimate:
    """T = N_trans / (N_trans + N_refl) with binomial standard error."""
    outcomes, _, _ = run_events(spec, workers)
    return _check_budget(_estimate_from_outcomes(spec, outcomes))


def batch_seed(master_seed: int, k: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), 0xBA7C, int(k)]).generate_state(1)[0])


def batch_estimates(spec: EnsembleSpec, n_repeats: int, workers: int = 1) -> list[TransmissionEstimate]:
    if n_repeats < 2:
        raise ArgumentError("n_repeats must be >= 2")
    return [estimate_transmission(dataclasses.replace(spec, master_seed=batch_seed(spec.master_seed, k)), workers)
            for k in range(n_repeats)]


def repeat_batches(spec: EnsembleSpec, n_repeats: int, workers: int = 1) -> tuple[float, float]:
    """Mean of n independent ensembles and sigma / sqrt(n)."""
    ts = np.array([e.t for e in batch_estimates(spec, n_repeats, workers)])
    return float(ts.mean()), float(ts.std(ddof=1) / math.sqrt(n_repeats))


@dataclass
class ConvergenceRow:
    n_events: int
    mean: float
    sigma: float  # spread of single-batch T
    stderr: float  # sigma / sqrt(n_repeats)


def write_convergence_csv(path, rows_by_v0):
    """``rows_by_v0`` maps V0 -> list[ConvergenceRow]."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["V0", "n_events", "mean_T", "sigma", "stderr"])
        for v0, rows in rows_by_v0.items():
            for r in rows:
                w.writerow([repr(float(v0)), r.n_events, repr(r.mean), repr(r.sigma), repr(r.stderr)])


def read_convergence_csv(path) -> dict:
    out: dict = {}
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(float(row["V0"]), []).append(
                ConvergenceRow(int(row["n_events"]), float(row["mean_T"]), float(row["sigma"]), float(row["stderr"])))
    return out


def convergence_study(spec: EnsembleSpec, n_values=(100, 400, 1600), n_repeats: int = 20, workers: int = 1):
    rows = []
    for n in n_values:
        ts = np.array([e.t for e in batch_estimates(dataclasses.replace(spec, n_events=int(n)), n_repeats, workers)])
        sigma = float(ts.std(ddof=1))
        rows.append(ConvergenceRow(int(n), float(ts.mean()), sigma, sigma / math.sqrt(n_repeats)))
    return rows


def sweep_transmission(base: EnsembleSpec, axis: Axis, grid, workers: int = 1, progress=None) -> TransmissionCurve:
    """One estimate per grid point, all with the base master seed (common random numbers)."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ArgumentError("grid must be non-empty and strictly increasing")
    estimates = []
    for x in grid:
        spec = base.with_axis(axis, x)
        try:
            est = estimate_transmission(spec, workers)
        except ExcludedBudgetExceeded as exc:
            est = exc.estimate
        estimates.append(est)
        if progress is not None:
            progress(x, est)
    return TransmissionCurve(Axis(axis), grid, estimates)


def log_grid(lo: float, hi: float, n: int = 40) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def locate_tmin(curve: TransmissionCurve) -> tuple[float, float]:
    """Grid argmin refined by a parabola through the bracketing points in log(axis)."""
    x = np.asarray(curve.grid, dtype=float)
    t = curve.t
    if len(x) < 5:
        raise ArgumentError("need at least 5 points")
    if np.any(x <= 0):
        raise ArgumentError("log-axis fit needs a positive grid")
    ok = np.isfinite(t)
    k = int(np.nanargmin(np.where(ok, t, np.nan)))
    if k == 0 or k == len(x) - 1:
        raise NoInteriorMinimum(f"minimum at grid endpoint {x[k]:g}")
    u = np.log(x[k - 1:k + 2])
    a, b, c = np.polyfit(u, t[k - 1:k + 2], 2)
    if a <= 0:
        return float(x[k]), float(t[k])
    u_star = -b / (2 * a)
    u_star = min(max(u_star, u[0]), u[2])
    return float(math.exp(u_star)), float(np.polyval([a, b, c], u_star))


def locate_tmin_bootstrap(curve: TransmissionCurve, n_boot: int = 400, seed: int = 0):
    """locate_tmin plus bootstrap standard errors of (v0_star, t_min).

    Each replicate redraws every point's transmitted count from its binomial
    distribution; replicates whose minimum lands on an endpoint are dropped.
    """
    v_star, t_min = locate_tmin(curve)
    rng = np.random.default_rng(seed)
    n_ok = np.array([e.n_trans + e.n_refl for e in curve.estimates])
    t = np.nan_to_num(curve.t, nan=1.0)
    vs, ts = [], []
    for _ in range(n_boot):
        tb = rng.binomial(np.maximum(n_ok, 1), np.clip(t, 0.0, 1.0)) / np.maximum(n_ok, 1)
        ests = [dataclasses.replace(e, t=float(x)) for e, x in zip(curve.estimates, tb)]
        try:
            v, m = locate_tmin(TransmissionCurve(curve.axis, curve.grid, ests))
        except NoInteriorMinimum:
            continue
        vs.append(math.log(v))
        ts.append(m)
    if len(vs) < 2:
        return v_star, t_min, math.inf, math.inf
    # v0_star error is reported in log space scaled back to a linear stderr
    return v_star, t_min, float(np.std(vs, ddof=1) * v_star), float(np.std(ts, ddof=1))


# --------------------------------------------------------------------------
# real-space maps and confined winding angles


@dataclass
class DensityMap:
    x_edges: np.ndarray
    z_edges: np.ndarray
    mass: np.ndarray  # shape (nx, nz), sums to 1

    @property
    def centers(self):
        return 0.5 * (self.x_edges[1:] + self.x_edges[:-1]), 0.5 * (self.z_edges[1:] + self.z_edges[:-1])

    def fraction_within(self, half_x: float, half_z: float) -> float:
        xc, zc = self.centers
        sel = (np.abs(xc)[:, None] < half_x) & (np.abs(zc)[None, :] < half_z)
        return float(self.mass[sel].sum())

    @classmethod
    def from_csv(cls, path, grid: DensityGrid) -> "DensityMap":
        x_edges, z_edges = grid.edges()
        mass = np.zeros((grid.nx, grid.nz))
        with open(Path(path), newline="") as fh:
            rows = list(csv.DictReader(fh))
        for k, row in enumerate(rows):
            mass[k // grid.nz, k % grid.nz] = float(row["mass"])
        return cls(x_edges, z_edges, mass)

    def to_csv(self, path):
        xc, zc = self.centers
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x_center", "z_center", "mass"])
            for i, x in enumerate(xc):
                for j, z in enumerate(zc):
                    w.writerow([repr(float(x)), repr(float(z)), repr(float(self.mass[i, j]))])


def _real_case(spec: EnsembleSpec) -> EnsembleSpec:
    if spec.sampling.complex_orbits:
        spec = dataclasses.replace(spec, sampling=dataclasses.replace(spec.sampling, complex_orbits=False))
    return spec


def density_map(spec: EnsembleSpec, v0: float, grid: DensityGrid = DensityGrid(), workers: int = 1) -> DensityMap:
    """Ensemble-averaged residency over real (x, z) cells, normalized to unit mass.

    Cell counts are dwell times summed over the ensemble (a position sample
    per unit time), so events that linger near the core count for more.
    """
    spec = _real_case(spec.with_axis(Axis.V0, v0))
    _, _, dens = run_events(spec, workers, grid)
    total = dens.sum()
    if total > 0:
        dens = dens / total
    x_edges, z_edges = grid.edges()
    return DensityMap(x_edges, z_edges, dens)


@dataclass
class ConfinedThetaCurve:
    grid: np.ndarray
    theta: np.ndarray
    theta_stderr: np.ndarray
    estimates: list[TransmissionEstimate] = field(default_factory=list)

    def to_csv(self, path):
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["V0", "theta", "theta_stderr", "T", "stderr", "n_trans", "n_refl", "n_excluded"])
            for v, th, se, e in zip(self.grid, self.theta, self.theta_stderr, self.estimates):
                w.writerow([repr(float(v)), repr(float(th)), repr(float(se)), repr(float(e.t)), repr(float(e.stderr)),
                            e.n_trans, e.n_refl, e.n_excluded])

    @classmethod
    def from_csv(cls, path, base: EnsembleSpec) -> "ConfinedThetaCurve":
        grid, th, se, ests = [], [], [], []
        with open(Path(path), newline="") as fh:
            for row in csv.DictReader(fh):
                v = float(row["V0"])
                grid.append(v)
                th.append(float(row["theta"]))
                se.append(float(row["theta_stderr"]))
                ests.append(TransmissionEstimate(float(row["T"]), float(row["stderr"]), int(row["n_trans"]),
                                                 int(row["n_refl"]), int(row["n_excluded"]), base.with_axis(Axis.V0, v)))
        return cls(np.array(grid), np.array(th), np.array(se), ests)


def theta_vs_v0_confined(spec: EnsembleSpec, grid, workers: int = 1, progress=None) -> ConfinedThetaCurve:
    """Ensemble-mean winding angle and T per V0 (real launch orbits)."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ArgumentError("grid must be non-empty and strictly increasing")
    spec = _real_case(spec)
    theta, se, ests = [], [], []
    for v0 in grid:
        point = spec.with_axis(Axis.V0, v0)
        outcomes, th, _ = run_events(point, workers)
        est = _estimate_from_outcomes(point, outcomes)
        if est.n_excluded > EXCLUDED_LIMIT * est.n_events:
            est.flag = f"excluded {est.n_excluded}/{est.n_events}"
        th = th[np.isfinite(th)]
        theta.append(float(th.mean()) if th.size else math.nan)
        se.append(float(th.std(ddof=1) / math.sqrt(th.size)) if th.size > 1 else math.nan)
        ests.append(est)
        if progress is not None:
            progress(v0, est)
    return ConfinedThetaCurve(grid, np.array(theta), np.array(se), ests)
