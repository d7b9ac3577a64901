import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cirsim import cli
from cirsim.config import GridSpec, Mode, parse_config, serialize, with_overrides
from cirsim.errors import ParseError, ValidationError
from cirsim.mc import Axis
from cirsim.model import PotentialKind


def test_defaults():
    cfg = parse_config("[physics]\n")
    assert (cfg.units.omega, cfg.units.mu, cfg.units.hbar) == (1.0, 1.0, 1.0)
    assert cfg.sampling.z0 == -10.0 and cfg.n_events == 1600 and cfg.master_seed == 42
    assert cfg.mode is Mode.CLASSICAL_SWEEP and cfg.potential.kind is PotentialKind.YUKAWA
    assert parse_config("") == cfg


def test_grid_forms():
    g = parse_config("[sweep]\ngrid = log 1e-3 20 40\n").sweep.grid
    assert np.allclose(g.points(), np.geomspace(1e-3, 20, 40))
    g = parse_config("[sweep]\ngrid = linear 0 2 5\n").sweep.grid
    assert np.allclose(g.points(), [0, 0.5, 1, 1.5, 2])
    assert parse_config("[sweep]\ngrid = 0.1, 0.5, 2\n").sweep.grid.points().tolist() == [0.1, 0.5, 2.0]


@pytest.mark.parametrize("text,key", [
    ("[physics]\ne_perp = 0.5\nlz = 1\n", "physics.e_perp"),
    ("[potential]\nkind = yukawa\nv0 = -1\n", "potential.v0"),
    ("[physics]\ne_prep = 1\n", "physics.e_prep"),
    ("[physics]\nn_events = 2.5\n", "physics.n_events"),
    ("[sweep]\ngrid = 1, 0.5\n", "sweep.grid"),
    ("[sweep]\ngrid = log 0 1 5\n", "sweep.grid"),
    ("[integrator]\nbranch_policy = wiggle\n", "integrator.branch_policy"),
    ("[quantum]\nn_theta = 7\n", "quantum"),
    ("[bogus]\nx = 1\n", "[bogus]"),
])
def test_validation_errors(text, key):
    with pytest.raises(ValidationError) as exc:
        parse_config(text)
    assert exc.value.key == key


def test_validation_cites_line():
    with pytest.raises(ValidationError) as exc:
        parse_config("[experiment]\nmode = convergence\n\n[physics]\ne_par = abc\n")
    assert "line 5" in str(exc.value)


@pytest.mark.parametrize("text,line", [
    ("e_perp = 1\n", 1),
    ("[physics]\ne_perp = 1\ne_perp = 2\n", 3),
    ("[physics]\n[physics]\n", 2),
    ("[physics]\nthis line has no separator\n", 2),
])
def test_parse_errors(text, line):
    with pytest.raises(ParseError) as exc:
        parse_config(text)
    assert exc.value.lineno == line


def test_inline_comments():
    cfg = parse_config("[physics]\ne_perp = 5.0  # transverse\n")
    assert cfg.params.e_perp == 5.0


pos = st.floats(1e-6, 1e3, allow_nan=False)


@given(
    mode=st.sampled_from(list(Mode)), seed=st.integers(0, 2**31), e_perp=st.floats(6.0, 50.0), e_par=pos,
    lz=st.integers(-6, 6), kind=st.sampled_from(["yukawa", "lj"]), v0=st.floats(0, 100), rng=st.floats(0.05, 5),
    grid=st.lists(st.floats(1e-4, 1e3), min_size=1, max_size=6, unique=True), axis=st.sampled_from(list(Axis)),
    atol=st.floats(1e-14, 1e-6), t_max=st.one_of(st.none(), pos), cplx=st.booleans(),
)
@settings(max_examples=60, deadline=None)
def test_round_trip(mode, seed, e_perp, e_par, lz, kind, v0, rng, grid, axis, atol, t_max, cplx):
    text = "\n".join([
        "[experiment]", f"mode = {mode.value}", f"master_seed = {seed}",
        "[physics]", f"e_perp = {e_perp!r}", f"e_par = {e_par!r}", f"lz = {lz}",
        "[potential]", f"kind = {kind}", f"v0 = {v0!r}", f"range = {rng!r}",
        "[integrator]", f"atol = {atol!r}", f"t_max = {'auto' if t_max is None else repr(t_max)}",
        "[sampling]", f"complex_orbits = {'yes' if cplx else 'no'}",
        "[sweep]", f"axis = {axis.value}", "grid = " + ", ".join(map(repr, sorted(grid))), "",
    ])
    cfg = parse_config(text)
    again = parse_config(serialize(cfg))
    assert again == cfg
    assert serialize(again) == serialize(cfg)


def test_overrides():
    cfg = parse_config("")
    c2 = with_overrides(cfg, seed=7, output="x")
    assert c2.master_seed == 7 and c2.output == "x" and cfg.master_seed == 42
    assert with_overrides(cfg) == cfg


# --------------------------------------------------------------------------
# command line


def _run(tmp_path, verb, text, *extra):
    cfg = tmp_path / "c.ini"
    cfg.write_text(text)
    return cli.main([verb, "--config", str(cfg), *extra])


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_bohr_sommerfeld(tmp_path):
    out = tmp_path / "bs"
    assert _run(tmp_path, "bohr-sommerfeld", "[levels]\nn_max = 2\n", "--out", str(out)) == 0
    rows = _rows(out / "levels.csv")
    assert rows[0] == ["n", "lz", "energy", "exact"]
    assert [float(r[2]) for r in rows[1:]] == pytest.approx([1.0, 3.0, 5.0], rel=1e-10)
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "ok" and man["mode"] == "bohr-sommerfeld" and man["master_seed"] == 42
    assert "wall_time_s" in man and "numpy" in man["versions"]
    assert man["columns"]["levels.csv"]["energy"] == "hbar*omega"
    assert (out / "config.ini").read_text() == "[levels]\nn_max = 2\n"
    assert parse_config((out / "config.resolved.ini").read_text()).levels.n_max == 2


SWEEP = """[physics]
e_par = 1e-2
n_events = 32
[sweep]
grid = 0.0, 0.3
"""


def test_classical_sweep_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(tmp_path, "classical-sweep", SWEEP, "--out", str(a)) == 0
    assert _run(tmp_path, "classical-sweep", SWEEP, "--out", str(b), "--workers", "2") == 0
    assert (a / "transmission.csv").read_bytes() == (b / "transmission.csv").read_bytes()
    rows = _rows(a / "transmission.csv")
    assert rows[0] == ["axis_value", "T", "stderr", "n_trans", "n_refl", "n_excluded"]
    assert float(rows[1][1]) == 1.0


def test_seed_flag_and_env(tmp_path, monkeypatch):
    monkeypatch.setenv("CIRSIM_SEED", "5")
    monkeypatch.setenv("CIRSIM_OUT", str(tmp_path / "env"))
    assert _run(tmp_path, "classical-sweep", SWEEP) == 0
    assert json.loads((tmp_path / "env" / "manifest.json").read_text())["master_seed"] == 5
    assert _run(tmp_path, "classical-sweep", SWEEP, "--seed", "9", "--out", str(tmp_path / "flag")) == 0
    assert json.loads((tmp_path / "flag" / "manifest.json").read_text())["master_seed"] == 9
    monkeypatch.setenv("CIRSIM_CONFIG", str(tmp_path / "c.ini"))
    assert cli.main(["bohr-sommerfeld", "--out", str(tmp_path / "cfgenv")]) == 0


def test_quantum_and_freespace(tmp_path):
    q = "[quantum]\nn_theta = 32\nn_r = 200\nrichardson = no\n[sweep]\ngrid = 0, 0.5\n"
    assert _run(tmp_path, "quantum-sweep", q, "--out", str(tmp_path / "q")) == 0
    rows = _rows(tmp_path / "q" / "quantum.csv")
    assert rows[0] == ["V0", "T", "R", "unitarity_defect", "n_open"] and len(rows) == 3
    assert _run(tmp_path, "freespace-theta", "[sweep]\ngrid = 0, 1, 4\n", "--out", str(tmp_path / "f")) == 0
    man = json.loads((tmp_path / "f" / "manifest.json").read_text())
    assert man["summary"]["v0_star"] == pytest.approx(4.8, abs=0.1)
    assert _run(tmp_path, "scattering-length", "[sweep]\ngrid = 0.2, 0.5\n", "--out", str(tmp_path / "a")) == 0
    assert _rows(tmp_path / "a" / "scattering_length.csv")[0] == ["V0", "a_s", "divergence_flag"]


def test_density_and_convergence(tmp_path):
    d = "[physics]\ne_par = 1e-2\nn_events = 16\n[density]\nv0 = 0.5\nnx = 5\nnz = 10\n"
    assert _run(tmp_path, "density-map", d, "--out", str(tmp_path / "d")) == 0
    rows = _rows(tmp_path / "d" / "density_V0_0.5.csv")
    assert rows[0] == ["x_center", "z_center", "mass"] and len(rows) == 51
    assert math.isclose(sum(float(r[2]) for r in rows[1:]), 1.0, abs_tol=1e-12)
    c = "[physics]\ne_par = 1e-2\n[convergence]\nv0 = 0.3\nn_values = 8, 16\nn_repeats = 2\n"
    assert _run(tmp_path, "convergence", c, "--out", str(tmp_path / "c")) == 0
    assert len(_rows(tmp_path / "c" / "convergence.csv")) == 3


def test_config_error_exit(tmp_path, capsys):
    out = tmp_path / "bad"
    assert _run(tmp_path, "classical-sweep", "[physics]\ne_prep = 1\n", "--out", str(out)) == 2
    rec = json.loads((out / "error.json").read_text())
    assert rec["error"] == "ValidationError" and rec["key"] == "physics.e_prep"
    assert _run(tmp_path, "classical-sweep", "junk\n", "--out", str(out)) == 2
    assert json.loads((out / "error.json").read_text())["line"] == 1


def test_runtime_failure_exit(tmp_path):
    # quantum sweeps only run over V0
    out = tmp_path / "fail"
    assert _run(tmp_path, "quantum-sweep", "[sweep]\naxis = EPar\ngrid = 0.1, 0.2\n", "--out", str(out)) == 2
    assert json.loads((out / "manifest.json").read_text())["status"] == "failed"
    # matching sphere too small: fails inside the pipeline
    bad = "[quantum]\nr_m = 3\nn_theta = 8\nn_r = 60\n[sweep]\ngrid = 0.5, 1\n"
    assert _run(tmp_path, "quantum-sweep", bad, "--out", str(out)) == 1
    assert (out / "error.json").exists() and (out / "quantum.csv").exists()


def test_unknown_verb():
    with pytest.raises(SystemExit):
        cli.main(["nonsense"])
