"""Command line entry point.

    cirsim classical-sweep --config base.ini --out runs/base --workers 4

Each verb runs one experiment mode.  Flags override the config file, and
environment variables override the config file but not flags:

    CIRSIM_CONFIG, CIRSIM_OUT, CIRSIM_SEED, CIRSIM_WORKERS

The output directory receives the CSV artifacts, ``config.ini`` (the input
document verbatim), ``config.resolved.ini`` (every field, defaults applied)
and ``manifest.json``.  Failures leave ``error.json`` and a nonzero exit.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

import cirsim
from cirsim import freespace, mc, quantum, semiclassics
from cirsim.config import ExperimentConfig, Mode, parse_config, serialize, with_overrides
from cirsim.errors import CirsimError, NoInteriorMinimum, ParseError, ValidationError
from cirsim.mc import Axis

ENV_PREFIX = "CIRSIM_"

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2

# units of every column written by the pipelines (oscillator units)
ENERGY = "hbar*omega"
LENGTH = "sqrt(hbar/(mu*omega))"
COLUMN_UNITS = {
    "axis_value": "axis units (V0, EPerp, EPar: hbar*omega; Lz: hbar; Range: length)",
    "V0": ENERGY, "T": "1", "R": "1", "stderr": "1", "n_trans": "count", "n_refl": "count", "n_excluded": "count",
    "unitarity_defect": "1", "n_open": "count", "theta": "rad", "theta_stderr": "rad", "singular_flag": "0/1",
    "x_center": LENGTH, "z_center": LENGTH, "mass": "probability", "n_events": "count", "mean_T": "1",
    "sigma": "1", "n": "count", "lz": "hbar", "energy": ENERGY, "exact": ENERGY, "a_s": LENGTH,
    "divergence_flag": "0/1",
}


class _Stream:
    """Single CSV writer that flushes every row, so partial sweeps survive a crash."""

    def __init__(self, path, header):
        self.path = Path(path)
        self.fh = open(self.path, "w", newline="")
        self.w = csv.writer(self.fh)
        self.w.writerow(header)
        self.fh.flush()

    def row(self, values):
        self.w.writerow(values)
        self.fh.flush()

    def close(self):
        self.fh.close()


def _r(x):
    return repr(float(x))


# --------------------------------------------------------------------------
# pipelines; each returns (artifact names, summary dict)


def _classical_sweep(cfg: ExperimentConfig, out: Path, workers: int):
    s = _Stream(out / "transmission.csv", ["axis_value", "T", "stderr", "n_trans", "n_refl", "n_excluded"])
    try:
        curve = mc.sweep_transmission(
            cfg.ensemble(), cfg.sweep.axis, cfg.sweep.grid.points(), workers,
            lambda x, e: s.row([_r(x), _r(e.t), _r(e.stderr), e.n_trans, e.n_refl, e.n_excluded]))
    finally:
        s.close()
    summary = {"flagged_points": [float(x) for x, e in zip(curve.grid, curve.estimates) if e.flag]}
    try:
        summary["v0_star"], summary["t_min"] = mc.locate_tmin(curve)
    except (NoInteriorMinimum, CirsimError) as exc:
        summary["tmin_note"] = str(exc)
    return ["transmission.csv"], summary


def _quantum_sweep(cfg: ExperimentConfig, out: Path, workers: int):
    if cfg.sweep.axis is not Axis.V0:
        raise ValidationError("sweep.axis", "quantum sweeps run over V0 only")
    s = _Stream(out / "quantum.csv", ["V0", "T", "R", "unitarity_defect", "n_open"])

    def row(v, sol):
        if sol is None:
            s.row([_r(v), "nan", "nan", "nan", 0])
        else:
            s.row([_r(v), _r(sol.T), _r(sol.R), _r(sol.unitarity_defect), sol.n_open])

    try:
        curve = quantum.sweep_quantum(cfg.params, cfg.potential, cfg.sweep.grid.points(), cfg.quantum, cfg.units,
                                      progress=row)
    finally:
        s.close()
    T = curve.T
    ok = np.isfinite(T)
    defects = [x.unitarity_defect for x in curve.solutions if x is not None]
    summary = {"max_unitarity_defect": max(defects) if defects else None}
    if ok.any():
        k = int(np.nanargmin(np.where(ok, T, np.nan)))
        summary["grid_tmin"] = {"V0": float(curve.v0[k]), "T": float(T[k])}
    return ["quantum.csv"], summary


def _freespace_theta(cfg: ExperimentConfig, out: Path, workers: int):
    fs = cfg.freespace
    curve = freespace.theta_vs_v0(cfg.potential, fs.s, fs.energy, cfg.sweep.grid.points())
    curve.to_csv(out / "theta.csv")
    summary = {}
    try:
        summary["v0_star"], summary["r_star"] = freespace.orbiting_threshold(cfg.potential, fs.s, fs.energy)
    except CirsimError as exc:
        summary["orbiting_note"] = str(exc)
    return ["theta.csv"], summary


def _density_map(cfg: ExperimentConfig, out: Path, workers: int):
    names, summary = [], {}
    for v0 in cfg.density.v0:
        dm = mc.density_map(cfg.ensemble(), v0, cfg.density.grid, workers)
        name = f"density_V0_{v0!r}.csv"
        dm.to_csv(out / name)
        names.append(name)
        summary[name] = {"fraction_within_2": dm.fraction_within(2.0, 2.0)}
    return names, summary


def _convergence(cfg: ExperimentConfig, out: Path, workers: int):
    c = cfg.convergence
    s = _Stream(out / "convergence.csv", ["V0", "n_events", "mean_T", "sigma", "stderr"])
    try:
        for v0 in c.v0:
            rows = mc.convergence_study(cfg.ensemble().with_axis(Axis.V0, v0), c.n_values, c.n_repeats, workers)
            for r in rows:
                s.row([_r(v0), r.n_events, _r(r.mean), _r(r.sigma), _r(r.stderr)])
    finally:
        s.close()
    return ["convergence.csv"], {}


def _bohr_sommerfeld(cfg: ExperimentConfig, out: Path, workers: int):
    lz = cfg.params.lz
    levels = semiclassics.bohr_sommerfeld_levels(cfg.levels.n_max, lz, cfg.units)
    s = _Stream(out / "levels.csv", ["n", "lz", "energy", "exact"])
    try:
        for n, e in enumerate(levels):
            s.row([n, lz, _r(e), _r((2 * n + abs(lz) + 1) * cfg.units.omega)])
    finally:
        s.close()
    return ["levels.csv"], {"levels": levels}


def _scattering_length(cfg: ExperimentConfig, out: Path, workers: int):
    curve = quantum.scattering_length_curve(cfg.potential, cfg.sweep.grid.points())
    curve.to_csv(out / "scattering_length.csv")
    return ["scattering_length.csv"], {"n_divergent": int(np.sum(curve.divergent))}


PIPELINES = {
    Mode.CLASSICAL_SWEEP: _classical_sweep,
    Mode.QUANTUM_SWEEP: _quantum_sweep,
    Mode.FREESPACE_THETA: _freespace_theta,
    Mode.DENSITY_MAP: _density_map,
    Mode.CONVERGENCE: _convergence,
    Mode.BOHR_SOMMERFELD: _bohr_sommerfeld,
    Mode.SCATTERING_LENGTH: _scattering_length,
}


def _versions():
    import numba
    import scipy

    return {"cirsim": cirsim.__version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


def _error_record(exc):
    rec = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ParseError):
        rec["line"] = exc.lineno
    if isinstance(exc, ValidationError):
        rec["key"] = exc.key
    return rec


def _columns(out: Path, names):
    cols = {}
    for n in names:
        with open(out / n, newline="") as fh:
            header = next(csv.reader(fh), [])
        cols[n] = {h: COLUMN_UNITS.get(h, "") for h in header}
    return cols


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> int:
    """Dispatch to the pipeline for cfg.mode; returns the process exit status."""
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.source if cfg.source else serialize(cfg))
    (out / "config.resolved.ini").write_text(serialize(cfg))
    err = out / "error.json"
    if err.exists():
        err.unlink()
    t0 = time.perf_counter()
    manifest = {"mode": cfg.mode.value, "master_seed": cfg.master_seed, "workers": workers,
                "config": serialize(cfg), "versions": _versions()}
    status = EXIT_OK
    try:
        names, summary = PIPELINES[cfg.mode](cfg, out, workers)
        manifest.update(status="ok", outputs=names, columns=_columns(out, names), summary=summary)
    except Exception as exc:  # recorded, then reported through the exit status
        status = EXIT_CONFIG if isinstance(exc, (ParseError, ValidationError)) else EXIT_FAILED
        rec = _error_record(exc)
        err.write_text(json.dumps(rec, indent=1) + "\n")
        manifest.update(status="failed", error=rec)
        print(f"cirsim: {rec['error']}: {rec['message']}", file=sys.stderr)
    manifest["wall_time_s"] = time.perf_counter() - t0
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, default=float) + "\n")
    return status


def _env(name):
    v = os.environ.get(ENV_PREFIX + name)
    return v if v not in (None, "") else None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cirsim", description="Confined quasi-1D scattering experiments.")
    sub = ap.add_subparsers(dest="verb", required=True)
    for m in Mode:
        p = sub.add_parser(m.value, help=f"run a {m.value} experiment")
        p.add_argument("--config", help="configuration file (env CIRSIM_CONFIG)")
        p.add_argument("--out", help="output directory (env CIRSIM_OUT)")
        p.add_argument("--seed", type=int, help="master seed, default 42 (env CIRSIM_SEED)")
        p.add_argument("--workers", type=int, help="worker processes, default 1 (env CIRSIM_WORKERS)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    path = args.config or _env("CONFIG")
    out = args.out or _env("OUT")
    try:
        seed = args.seed if args.seed is not None else (int(_env("SEED")) if _env("SEED") else None)
        workers = args.workers if args.workers is not None else int(_env("WORKERS") or 1)
        text = Path(path).read_text() if path else ""
        cfg = parse_config(text)
    except (ParseError, ValidationError, OSError, ValueError) as exc:
        rec = _error_record(exc)
        print(json.dumps(rec), file=sys.stderr)
        if out:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "error.json").write_text(json.dumps(rec, indent=1) + "\n")
        return EXIT_CONFIG
    cfg = with_overrides(cfg, seed=seed, output=out)
    cfg = dataclasses.replace(cfg, mode=Mode(args.verb))
    if workers < 1:
        print("cirsim: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return run_experiment(cfg, workers)


if __name__ == "__main__":
    sys.exit(main())
