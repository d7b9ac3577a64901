"""Experiment campaign behind the acceptance suite.

Every experiment is cached as a CSV under results/, named by the experiment
and a digest of its full configuration, so reruns are free and any change of
parameters forces a recompute.

    python scripts/campaign.py --list
    python scripts/campaign.py yukawa_base convergence --workers 4
    python scripts/campaign.py all
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import cirsim
from cirsim import mc, quantum
from cirsim.cdyn import DensityGrid
from cirsim.model import PotentialKind, PotentialSpec, ScatterParams

RESULTS = Path(__file__).resolve().parents[1] / "results"

V0_GRID = mc.log_grid(1e-3, 20.0, 40)
# secondary sweeps (trends, Lz) share the range on a coarser grid to fit a single-core budget
TREND_GRID = mc.log_grid(1e-3, 20.0, 24)
TRIPLET = (0.006, 0.043, 20.0)
REAL_GRID = mc.log_grid(1e-2, 100.0, 32)
QUANTUM_NUMERICS = quantum.QuantumNumerics()


def ensemble(e_perp=1.0, e_par=1e-5, lz=0, kind="yukawa", r0=1.0, n_events=1600, seed=42) -> mc.EnsembleSpec:
    pot = PotentialSpec(PotentialKind.parse(kind), 1.0, r0)
    return mc.EnsembleSpec(ScatterParams(e_perp, e_par, lz), pot, n_events=n_events, master_seed=seed)


@dataclass
class Experiment:
    name: str
    kind: str  # sweep | points | convergence | density | theta | qsweep | qmin | alength
    config: object
    grid: tuple = ()
    extra: tuple = ()

    def digest(self) -> str:
        key = repr((self.kind, self.config, tuple(float(g) for g in self.grid), self.extra, cirsim.__version__))
        return hashlib.sha256(key.encode()).hexdigest()[:12]

    @property
    def path(self) -> Path:
        return RESULTS / f"{self.name}-{self.digest()}.csv"


def _experiments() -> dict[str, Experiment]:
    out = []
    add = out.append
    # classical, complex ensemble
    add(Experiment("yukawa_base", "sweep", ensemble(), tuple(V0_GRID)))
    add(Experiment("yukawa_triplet", "points", ensemble(), TRIPLET))
    add(Experiment("convergence", "convergence", ensemble(), TRIPLET, ((100, 400, 1600), 20)))
    add(Experiment("yukawa_eperp5", "sweep", ensemble(e_perp=5.0), tuple(TREND_GRID)))
    add(Experiment("yukawa_epar1e-3", "sweep", ensemble(e_par=1e-3), tuple(TREND_GRID)))
    add(Experiment("yukawa_epar1e-2", "sweep", ensemble(e_par=1e-2), tuple(TREND_GRID)))
    add(Experiment("lj_base", "sweep", ensemble(kind="lj"), tuple(TREND_GRID)))
    add(Experiment("lj_eperp5", "sweep", ensemble(kind="lj", e_perp=5.0), tuple(TREND_GRID)))
    add(Experiment("lj_epar1e-3", "sweep", ensemble(kind="lj", e_par=1e-3), tuple(TREND_GRID)))
    for lz in (0, 2, 6):
        add(Experiment(f"yukawa_e11_lz{lz}", "sweep", ensemble(e_perp=11.0, lz=lz), tuple(TREND_GRID)))
    # classical, real ensemble
    add(Experiment("density_v0.01", "density", ensemble(), (0.01,), (DensityGrid(),)))
    add(Experiment("density_v9", "density", ensemble(), (9.0,), (DensityGrid(),)))
    add(Experiment("real_theta", "theta", ensemble(), tuple(REAL_GRID)))
    # quantum
    p1 = ScatterParams(1.0, 1e-5, 0)
    yuk = PotentialSpec(PotentialKind.YUKAWA, 1.0, 1.0)
    yuk01 = PotentialSpec(PotentialKind.YUKAWA, 1.0, 0.1)
    lj = PotentialSpec(PotentialKind.LENNARD_JONES, 1.0, 1.0)
    add(Experiment("q_yukawa", "qsweep", (p1, yuk, QUANTUM_NUMERICS), tuple(np.linspace(0.0, 2.0, 41))))
    add(Experiment("q_yukawa_r0.1", "qsweep", (p1, yuk01, QUANTUM_NUMERICS), tuple(np.linspace(0.0, 250.0, 51))))
    add(Experiment("q_lj", "qsweep", (p1, lj, QUANTUM_NUMERICS), tuple(np.linspace(0.0, 5.0, 51))))
    add(Experiment("q_yukawa_min", "qmin", (p1, yuk, QUANTUM_NUMERICS), (0.3, 1.2)))
    add(Experiment("q_yukawa_r0.1_min", "qmin", (p1, yuk01, QUANTUM_NUMERICS), (90.0, 120.0)))
    add(Experiment("a_s_yukawa", "alength", yuk, tuple(np.linspace(0.05, 2.0, 40))))
    return {e.name: e for e in out}


EXPERIMENTS = _experiments()


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def _progress(name):
    t0 = time.time()

    def cb(x, est):
        _log(f"  {name} {x:.5g}: T={est.t:.4f} +- {est.stderr:.4f} excl={est.n_excluded} [{time.time() - t0:.0f}s]")

    return cb


def _write_qmin(path, v, t):
    with open(path, "w") as fh:
        fh.write("v0_star,t_min\n")
        fh.write(f"{v!r},{t!r}\n")


def _read_qmin(path):
    rows = Path(path).read_text().splitlines()
    v, t = rows[1].split(",")
    return float(v), float(t)


def _pointwise(exp: Experiment, tmp: Path, one_point):
    """Evaluate grid points one at a time, appending rows to a resume file.

    Seeds depend only on the event index, so a point computed alone is
    identical to the same point inside a full sweep.
    """
    rows_path = exp.path.with_suffix(".rows")
    header, rows = None, {}
    if rows_path.exists():
        with open(rows_path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r, None)
            rows = {float(row[0]): row for row in r if row}
    for x in exp.grid:
        if float(x) in rows:
            continue
        one_point(float(x), tmp)
        with open(tmp, newline="") as fh:
            h, row = list(csv.reader(fh))
        with open(rows_path, "a", newline="") as fh:
            w = csv.writer(fh)
            if header is None:
                header = h
                w.writerow(h)
            w.writerow(row)
        rows[float(x)] = row
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for x in exp.grid:
            w.writerow(rows[float(x)])
    return rows_path


def run(exp: Experiment, workers: int = 1):
    tmp = exp.path.with_suffix(".part")
    RESULTS.mkdir(exist_ok=True)
    rows_path = None
    if exp.kind in ("sweep", "points"):
        rows_path = _pointwise(exp, tmp, lambda x, out: mc.sweep_transmission(
            exp.config, mc.Axis.V0, [x], workers, _progress(exp.name)).to_csv(out))
    elif exp.kind == "convergence":
        n_values, n_rep = exp.extra
        rows = {}
        for v in exp.grid:
            rows[v] = mc.convergence_study(exp.config.with_axis(mc.Axis.V0, v), n_values, n_rep, workers)
            _log(f"  convergence V0={v}: " + ", ".join(f"N={r.n_events} se={r.stderr:.4f}" for r in rows[v]))
        mc.write_convergence_csv(tmp, rows)
    elif exp.kind == "density":
        mc.density_map(exp.config, exp.grid[0], exp.extra[0], workers).to_csv(tmp)
    elif exp.kind == "theta":
        rows_path = _pointwise(exp, tmp, lambda x, out: mc.theta_vs_v0_confined(
            exp.config, [x], workers, _progress(exp.name)).to_csv(out))
    elif exp.kind == "qsweep":
        p, spec, num = exp.config
        quantum.sweep_quantum(p, spec, exp.grid, num).to_csv(tmp)
    elif exp.kind == "qmin":
        p, spec, num = exp.config
        _write_qmin(tmp, *quantum.refine_tmin(p, spec, exp.grid, num))
    elif exp.kind == "alength":
        quantum.scattering_length_curve(exp.config, exp.grid).to_csv(tmp)
    else:
        raise ValueError(exp.kind)
    tmp.replace(exp.path)
    if rows_path is not None:
        rows_path.unlink()
    exp.path.with_suffix(".json").write_text(json.dumps({"name": exp.name, "config": repr(exp.config),
                                                         "grid": list(map(float, exp.grid)), "extra": repr(exp.extra),
                                                         "version": cirsim.__version__}, indent=1))


def load(name: str, compute: bool = True, workers: int = 1):
    """Cached result of an experiment, computing it first if allowed."""
    exp = EXPERIMENTS[name]
    if not exp.path.exists():
        if not compute:
            return None
        run(exp, workers)
    if exp.kind in ("sweep", "points"):
        return mc.TransmissionCurve.from_csv(exp.path, exp.config, mc.Axis.V0)
    if exp.kind == "convergence":
        return mc.read_convergence_csv(exp.path)
    if exp.kind == "density":
        return mc.DensityMap.from_csv(exp.path, exp.extra[0])
    if exp.kind == "theta":
        return mc.ConfinedThetaCurve.from_csv(exp.path, exp.config)
    if exp.kind == "qsweep":
        return quantum.QuantumCurve.from_csv(exp.path)
    if exp.kind == "qmin":
        return _read_qmin(exp.path)
    if exp.kind == "alength":
        return quantum.ScatteringLengthCurve.from_csv(exp.path)
    raise ValueError(exp.kind)


ORDER = [
    "q_yukawa", "q_yukawa_min", "q_yukawa_r0.1", "q_yukawa_r0.1_min", "q_lj", "a_s_yukawa",
    "yukawa_base", "yukawa_triplet", "density_v0.01", "density_v9", "real_theta", "convergence",
    "yukawa_epar1e-3", "yukawa_epar1e-2", "lj_epar1e-3", "yukawa_eperp5", "lj_base", "lj_eperp5",
    "yukawa_e11_lz0", "yukawa_e11_lz2", "yukawa_e11_lz6",
]
assert sorted(ORDER) == sorted(EXPERIMENTS)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("names", nargs="*", help="experiment names, or 'all'")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--list", action="store_true")
    args = ap.parse_args(argv)
    if args.list or not args.names:
        for n in ORDER:
            e = EXPERIMENTS[n]
            print(f"{n:22s} {e.kind:12s} {'cached' if e.path.exists() else '-'}")
        return 0
    names = ORDER if args.names == ["all"] else args.names
    for n in names:
        exp = EXPERIMENTS[n]
        if exp.path.exists():
            _log(f"{n}: cached ({exp.path.name})")
            continue
        t0 = time.time()
        _log(f"{n}: running")
        run(exp, args.workers)
        _log(f"{n}: done in {time.time() - t0:.0f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
