"""Experiment configuration: a line-oriented ``key = value`` document with sections.

    [experiment]
    mode = classical-sweep
    master_seed = 42

    [physics]
    e_perp = 1.0
    e_par = 1e-5

    [potential]
    kind = yukawa
    range = 1.0

    [sweep]
    axis = V0
    grid = log 1e-3 20 40

Every section and key is optional; missing ones take the defaults below.
Unknown sections or keys are rejected.  ``serialize`` writes every field
explicitly so that ``parse_config(serialize(cfg)) == cfg``.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from cirsim.cdyn import BRANCH_POLICIES, DensityGrid, IntegratorConfig
from cirsim.errors import ArgumentError, ParseError, ValidationError
from cirsim.mc import Axis
from cirsim.model import PotentialKind, PotentialSpec, ScatterParams, UnitSystem
from cirsim.quantum import QuantumNumerics
from cirsim.semiclassics import SamplingConfig


class Mode(str, Enum):
    CLASSICAL_SWEEP = "classical-sweep"
    QUANTUM_SWEEP = "quantum-sweep"
    FREESPACE_THETA = "freespace-theta"
    DENSITY_MAP = "density-map"
    CONVERGENCE = "convergence"
    BOHR_SOMMERFELD = "bohr-sommerfeld"
    SCATTERING_LENGTH = "scattering-length"


@dataclass(frozen=True)
class GridSpec:
    """``log lo hi n``, ``linear lo hi n`` or an explicit comma list."""

    spacing: str = "log"
    lo: float = 1e-3
    hi: float = 20.0
    n: int = 40
    values: tuple = ()

    def points(self) -> np.ndarray:
        if self.spacing == "list":
            return np.array(self.values, dtype=float)
        if self.spacing == "log":
            return np.geomspace(self.lo, self.hi, self.n)
        return np.linspace(self.lo, self.hi, self.n)

    def text(self) -> str:
        if self.spacing == "list":
            return ", ".join(repr(float(v)) for v in self.values)
        return f"{self.spacing} {self.lo!r} {self.hi!r} {self.n}"


@dataclass(frozen=True)
class SweepConfig:
    axis: Axis = Axis.V0
    grid: GridSpec = GridSpec()


@dataclass(frozen=True)
class FreespaceConfig:
    s: float = 4.0
    energy: float = 0.1
    tol: float = 1e-11


@dataclass(frozen=True)
class ConvergenceConfig:
    v0: tuple = (0.006, 0.043, 20.0)
    n_values: tuple = (100, 400, 1600)
    n_repeats: int = 20


@dataclass(frozen=True)
class DensityConfig:
    v0: tuple = (0.01, 1.0, 9.0, 100.0)
    grid: DensityGrid = DensityGrid()


@dataclass(frozen=True)
class LevelsConfig:
    n_max: int = 5


@dataclass(frozen=True)
class ExperimentConfig:
    mode: Mode = Mode.CLASSICAL_SWEEP
    params: ScatterParams = ScatterParams(1.0, 1e-5, 0)
    potential: PotentialSpec = PotentialSpec(PotentialKind.YUKAWA, 1.0, 1.0)
    units: UnitSystem = UnitSystem()
    n_events: int = 1600
    integrator: IntegratorConfig = IntegratorConfig()
    sampling: SamplingConfig = SamplingConfig()
    quantum: QuantumNumerics = QuantumNumerics()
    sweep: SweepConfig = SweepConfig()
    freespace: FreespaceConfig = FreespaceConfig()
    convergence: ConvergenceConfig = ConvergenceConfig()
    density: DensityConfig = DensityConfig()
    levels: LevelsConfig = LevelsConfig()
    output: str = "out"
    master_seed: int = 42
    source: str = field(default="", compare=False, repr=False)  # original text, echoed verbatim

    def ensemble(self):
        from cirsim.mc import EnsembleSpec

        return EnsembleSpec(self.params, self.potential, self.n_events, self.master_seed, self.integrator,
                            self.sampling, self.units)


# --------------------------------------------------------------------------
# value parsers


def _float(text):
    v = float(text)
    if math.isnan(v):
        raise ValueError("nan not allowed")
    return v


def _opt_float(text):
    return None if text.strip().lower() in ("none", "auto", "") else _float(text)


def _int(text):
    f = float(text)
    if f != int(f):
        raise ValueError(f"{text!r} is not an integer")
    return int(f)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _float_list(text):
    items = [s for s in re.split(r"[,\s]+", text.strip()) if s]
    if not items:
        raise ValueError("empty list")
    return tuple(_float(s) for s in items)


def _int_list(text):
    return tuple(_int(s) for s in _float_list(text))


def _pair(text):
    v = _float_list(text)
    if len(v) != 2:
        raise ValueError("expected two numbers")
    return v


def _grid(text):
    parts = text.replace(",", " ").split()
    if parts and parts[0].lower() in ("log", "linear"):
        if len(parts) != 4:
            raise ValueError("expected '<log|linear> lo hi n'")
        g = GridSpec(parts[0].lower(), _float(parts[1]), _float(parts[2]), _int(parts[3]))
        if g.n < 1 or not g.hi > g.lo or (g.spacing == "log" and not g.lo > 0):
            raise ValueError("need n >= 1, hi > lo (and lo > 0 for log spacing)")
        return g
    vals = _float_list(text)
    if np.any(np.diff(vals) <= 0):
        raise ValueError("grid values must be strictly increasing")
    return GridSpec("list", values=vals)


def _mode(text):
    key = text.strip().lower().replace("_", "-")
    for m in Mode:
        if key in (m.value, m.name.lower().replace("_", "-"), m.value.replace("-", "")):
            return m
    raise ValueError(f"unknown mode {text!r}; choose from {[m.value for m in Mode]}")


def _axis(text):
    for a in Axis:
        if text.strip().lower() == a.value.lower():
            return a
    raise ValueError(f"unknown axis {text!r}")


def _policy(text):
    t = text.strip().lower()
    if t not in BRANCH_POLICIES:
        raise ValueError(f"choose from {BRANCH_POLICIES}")
    return t


# section -> key -> (parser, default value, formatter)
_F = repr
SCHEMA = {
    "experiment": {
        "mode": (_mode, Mode.CLASSICAL_SWEEP, lambda m: m.value),
        "master_seed": (_int, 42, str),
        "output": (str.strip, "out", str),
    },
    "physics": {
        "e_perp": (_float, 1.0, _F),
        "e_par": (_float, 1e-5, _F),
        "lz": (_int, 0, str),
        "omega": (_float, 1.0, _F),
        "mu": (_float, 1.0, _F),
        "hbar": (_float, 1.0, _F),
        "z0": (_float, -10.0, _F),
        "n_events": (_int, 1600, str),
    },
    "potential": {
        "kind": (PotentialKind.parse, PotentialKind.YUKAWA, lambda k: k.value),
        "v0": (_float, 1.0, _F),
        "range": (_float, 1.0, _F),
    },
    "integrator": {
        "atol": (_float, 1e-9, _F),
        "rtol": (_float, 1e-9, _F),
        "h_init": (_float, 1e-2, _F),
        "h_min": (_float, 1e-12, _F),
        "h_max": (_float, 0.5, _F),
        "max_steps": (_int, 10_000_000, str),
        "z_cut": (_opt_float, None, lambda v: "auto" if v is None else repr(v)),
        "t_max": (_opt_float, None, lambda v: "auto" if v is None else repr(v)),
        "branch_policy": (_policy, "principal", str),
    },
    "sampling": {
        "delta_max": (_float, 0.5, _F),
        "complex_orbits": (_bool, True, lambda b: "true" if b else "false"),
    },
    "quantum": {
        "n_theta": (_int, 128, str),
        "n_r": (_int, 1000, str),
        "r_m": (_float, 20.0, _F),
        "gamma": (_float, 4.0, _F),
        "parity": (_bool, True, lambda b: "true" if b else "false"),
        "richardson": (_bool, True, lambda b: "true" if b else "false"),
    },
    "sweep": {
        "axis": (_axis, Axis.V0, lambda a: a.value),
        "grid": (_grid, GridSpec(), lambda g: g.text()),
    },
    "freespace": {
        "s": (_float, 4.0, _F),
        "energy": (_float, 0.1, _F),
        "tol": (_float, 1e-11, _F),
    },
    "convergence": {
        "v0": (_float_list, (0.006, 0.043, 20.0), lambda v: ", ".join(map(repr, v))),
        "n_values": (_int_list, (100, 400, 1600), lambda v: ", ".join(map(str, v))),
        "n_repeats": (_int, 20, str),
    },
    "density": {
        "v0": (_float_list, (0.01, 1.0, 9.0, 100.0), lambda v: ", ".join(map(repr, v))),
        "x_range": (_pair, (-2.5, 2.5), lambda v: ", ".join(map(repr, v))),
        "z_range": (_pair, (-10.0, 10.0), lambda v: ", ".join(map(repr, v))),
        "nx": (_int, 50, str),
        "nz": (_int, 200, str),
    },
    "levels": {
        "n_max": (_int, 5, str),
    },
}


def _line_of(text, section, key):
    sec = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("["):
            sec = s.strip("[] ").lower()
        elif sec == section and re.match(rf"{re.escape(key)}\s*[=:]", s, re.I):
            return i
    return None


def _read(text):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"), strict=True,
                                   default_section="__defaults__")
    cp.optionxform = str.lower
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key outside any [section]", exc.lineno) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ParseError(str(exc).split(": ", 1)[-1], exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ParseError("expected 'key = value'", lineno) from None
    return cp


def parse_config(text: str) -> ExperimentConfig:
    """Validated ExperimentConfig from a configuration document."""
    cp = _read(text)
    vals = {sec: {k: d for k, (_, d, _) in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in cp.sections():
        name = sec.strip().lower()
        if name not in SCHEMA:
            raise ValidationError(f"[{sec}]", "unknown section")
        for key, raw in cp.items(sec):
            if key not in SCHEMA[name]:
                raise ValidationError(f"{name}.{key}", f"unknown key (line {_line_of(text, name, key)})")
            try:
                vals[name][key] = SCHEMA[name][key][0](raw)
            except (ValueError, ArgumentError) as exc:
                raise ValidationError(f"{name}.{key}", f"{exc} (line {_line_of(text, name, key)})") from None
    return _build(vals, text)


def _build(v, text=""):
    def make(key, fn):
        try:
            return fn()
        except ArgumentError as exc:
            raise ValidationError(key, str(exc)) from None

    ph, pot, it, sm, qn = v["physics"], v["potential"], v["integrator"], v["sampling"], v["quantum"]
    units = make("physics.omega", lambda: UnitSystem(omega=ph["omega"], hbar=ph["hbar"], mu=ph["mu"]))
    if ph["e_perp"] < abs(ph["lz"]) * units.omega:
        raise ValidationError("physics.e_perp", f"e_perp={ph['e_perp']} below |lz|*omega={abs(ph['lz']) * units.omega}")
    params = make("physics.e_par", lambda: ScatterParams(ph["e_perp"], ph["e_par"], ph["lz"]))
    if ph["n_events"] < 1:
        raise ValidationError("physics.n_events", "must be >= 1")
    if not (pot["v0"] >= 0 and math.isfinite(pot["v0"])):
        raise ValidationError("potential.v0", f"depth must be finite and >= 0, got {pot['v0']}")
    potential = make("potential.range", lambda: PotentialSpec(pot["kind"], pot["v0"], pot["range"]))
    integ = make("integrator", lambda: IntegratorConfig(**it))
    sampling = make("sampling", lambda: SamplingConfig(sm["delta_max"], ph["z0"], sm["complex_orbits"]))
    numerics = make("quantum", lambda: QuantumNumerics(**qn))
    fs = v["freespace"]
    if fs["s"] < 0 or not fs["energy"] > 0 or not fs["tol"] > 0:
        raise ValidationError("freespace", "need s >= 0, energy > 0, tol > 0")
    cv = v["convergence"]
    if cv["n_repeats"] < 2 or min(cv["n_values"]) < 1:
        raise ValidationError("convergence", "need n_repeats >= 2 and n_values >= 1")
    dn = v["density"]
    if dn["nx"] < 1 or dn["nz"] < 1:
        raise ValidationError("density", "nx, nz must be >= 1")
    if v["levels"]["n_max"] < 0:
        raise ValidationError("levels.n_max", "must be >= 0")
    ex = v["experiment"]
    if not ex["output"]:
        raise ValidationError("experiment.output", "empty path")
    return ExperimentConfig(
        mode=ex["mode"], params=params, potential=potential, units=units, n_events=ph["n_events"],
        integrator=integ, sampling=sampling, quantum=numerics,
        sweep=SweepConfig(v["sweep"]["axis"], v["sweep"]["grid"]),
        freespace=FreespaceConfig(fs["s"], fs["energy"], fs["tol"]),
        convergence=ConvergenceConfig(cv["v0"], cv["n_values"], cv["n_repeats"]),
        density=DensityConfig(dn["v0"], DensityGrid(dn["x_range"], dn["z_range"], dn["nx"], dn["nz"])),
        levels=LevelsConfig(v["levels"]["n_max"]), output=ex["output"], master_seed=ex["master_seed"], source=text,
    )


def _values(cfg: ExperimentConfig) -> dict:
    it = cfg.integrator
    g = cfg.density.grid
    return {
        "experiment": {"mode": cfg.mode, "master_seed": cfg.master_seed, "output": cfg.output},
        "physics": {"e_perp": cfg.params.e_perp, "e_par": cfg.params.e_par, "lz": cfg.params.lz,
                    "omega": cfg.units.omega, "mu": cfg.units.mu, "hbar": cfg.units.hbar, "z0": cfg.sampling.z0,
                    "n_events": cfg.n_events},
        "potential": {"kind": cfg.potential.kind, "v0": cfg.potential.v0, "range": cfg.potential.range},
        "integrator": {f.name: getattr(it, f.name) for f in dataclasses.fields(it)},
        "sampling": {"delta_max": cfg.sampling.delta_max, "complex_orbits": cfg.sampling.complex_orbits},
        "quantum": {f.name: getattr(cfg.quantum, f.name) for f in dataclasses.fields(cfg.quantum)},
        "sweep": {"axis": cfg.sweep.axis, "grid": cfg.sweep.grid},
        "freespace": {"s": cfg.freespace.s, "energy": cfg.freespace.energy, "tol": cfg.freespace.tol},
        "convergence": {"v0": cfg.convergence.v0, "n_values": cfg.convergence.n_values,
                        "n_repeats": cfg.convergence.n_repeats},
        "density": {"v0": cfg.density.v0, "x_range": tuple(g.x_range), "z_range": tuple(g.z_range),
                    "nx": g.nx, "nz": g.nz},
        "levels": {"n_max": cfg.levels.n_max},
    }


def serialize(cfg: ExperimentConfig) -> str:
    """Complete document with every field written out."""
    out = []
    for sec, vals in _values(cfg).items():
        out.append(f"[{sec}]")
        for key, val in vals.items():
            out.append(f"{key} = {SCHEMA[sec][key][2](val)}")
        out.append("")
    return "\n".join(out)


def with_overrides(cfg: ExperimentConfig, *, seed: int | None = None, output: str | None = None) -> ExperimentConfig:
    changes = {}
    if seed is not None:
        changes["master_seed"] = int(seed)
    if output is not None:
        changes["output"] = str(output)
    return dataclasses.replace(cfg, **changes) if changes else cfg
