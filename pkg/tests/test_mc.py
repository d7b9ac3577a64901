import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cirsim import mc
from cirsim.cdyn import DensityGrid, IntegratorConfig
from cirsim.errors import ArgumentError, ExcludedBudgetExceeded, NoInteriorMinimum
from cirsim.model import PotentialSpec, ScatterParams


def fast(v0=0.05, n=64, **kw) -> mc.EnsembleSpec:
    # E_par = 1e-2 keeps trajectories short
    return mc.EnsembleSpec(ScatterParams(1.0, 1e-2, 0), PotentialSpec("yukawa", v0, 1.0), n_events=n, **kw)


def test_spec_validation_and_axis():
    with pytest.raises(ArgumentError):
        fast(n=0)
    s = fast()
    assert s.with_axis(mc.Axis.V0, 2.0).potential.v0 == 2.0
    assert s.with_axis(mc.Axis.EPERP, 5.0).params.e_perp == 5.0
    assert s.with_axis(mc.Axis.EPERP, 5.0).with_axis(mc.Axis.LZ, 2.0).params.lz == 2
    assert s.with_axis(mc.Axis.RANGE, 0.5).potential.range == 0.5
    assert s.digest() == fast().digest() and s.digest() != fast(n=65).digest()


def test_no_interaction():
    est = mc.estimate_transmission(fast(v0=0.0))
    assert est.t == 1.0 and est.stderr == 0.0 and est.n_trans == 64


def test_counts_and_range():
    est = mc.estimate_transmission(fast(v0=0.3))
    assert est.n_trans + est.n_refl + est.n_excluded == est.n_events == 64
    assert 0.0 <= est.t <= 1.0
    assert est.stderr == pytest.approx(math.sqrt(est.t * (1 - est.t) / (est.n_trans + est.n_refl)))


def test_worker_count_independent():
    s = fast(v0=0.3, n=80)
    a, ta, _ = mc.run_events(s, workers=1)
    b, tb, _ = mc.run_events(s, workers=2)
    assert np.array_equal(a, b) and np.array_equal(ta, tb)


def test_common_random_numbers():
    s = fast(n=40)
    curve = mc.sweep_transmission(s, mc.Axis.V0, [0.05, 0.3])
    alone = mc.estimate_transmission(s.with_axis(mc.Axis.V0, 0.3))
    assert curve.estimates[1].n_trans == alone.n_trans
    with pytest.raises(ArgumentError):
        mc.sweep_transmission(s, mc.Axis.V0, [0.3, 0.05])


def test_excluded_budget():
    s = fast(n=32, integrator=IntegratorConfig(t_max=1.0))
    with pytest.raises(ExcludedBudgetExceeded):
        mc.estimate_transmission(s)
    curve = mc.sweep_transmission(s, mc.Axis.V0, [0.1])
    assert curve.estimates[0].flag and math.isnan(curve.t[0])


def test_repeat_batches_trivial():
    mean, se = mc.repeat_batches(fast(v0=0.0, n=16), 4)
    assert mean == 1.0 and se == 0.0
    with pytest.raises(ArgumentError):
        mc.repeat_batches(fast(), 1)


def test_repeat_batches_scaling():
    s = fast(v0=0.3, n=24)
    se = [mc.repeat_batches(s, n)[1] for n in (4, 16, 64)]
    # expected ratio 2 per 4x; sigma from 4 batches is itself ~35% uncertain
    assert se[0] > se[1] > se[2] > 0
    assert 2.0 < se[0] / se[2] < 8.0


def _curve(x, t, n=1600):
    ests = [mc.TransmissionEstimate(float(v), 0.01, int(round(v * n)), n - int(round(v * n)), 0, fast()) for v in t]
    return mc.TransmissionCurve(mc.Axis.V0, np.asarray(x), ests)


@given(st.floats(-3.0, 1.0), st.floats(0.05, 0.5), st.floats(0.1, 3.0))
@settings(max_examples=30, deadline=None)
def test_locate_tmin_parabola(u0, tmin, a):
    x = mc.log_grid(1e-3, 20.0, 40)
    u = np.log(x)
    v, t = mc.locate_tmin(_curve(x, tmin + a * (u - u0) ** 2 / 100))
    assert math.log(v) == pytest.approx(u0, abs=1e-6)
    assert t == pytest.approx(tmin, abs=1e-9)


def test_locate_tmin_errors():
    x = mc.log_grid(1e-3, 20.0, 10)
    with pytest.raises(NoInteriorMinimum):
        mc.locate_tmin(_curve(x, np.linspace(0.9, 0.1, 10)))
    with pytest.raises(ArgumentError):
        mc.locate_tmin(_curve(x[:4], [0.5, 0.2, 0.3, 0.4]))


def test_bootstrap_errors():
    x = mc.log_grid(1e-3, 20.0, 40)
    u = np.log(x)
    c = _curve(x, 0.2 + 0.01 * (u + 2) ** 2)
    v, t, v_se, t_se = mc.locate_tmin_bootstrap(c, n_boot=200)
    assert (v, t) == mc.locate_tmin(c)
    assert 0 < t_se < 0.02 and 0 < v_se < v
    assert mc.locate_tmin_bootstrap(c, n_boot=200) == (v, t, v_se, t_se)


def test_transmission_csv_roundtrip(tmp_path):
    s = fast(n=32)
    c = mc.sweep_transmission(s, mc.Axis.V0, [0.0, 0.1])
    c.to_csv(tmp_path / "t.csv")
    d = mc.TransmissionCurve.from_csv(tmp_path / "t.csv", s)
    assert np.array_equal(c.grid, d.grid) and np.array_equal(c.t, d.t)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "axis_value,T,stderr,n_trans,n_refl,n_excluded"


def test_convergence_csv_roundtrip(tmp_path):
    rows = {0.043: [mc.ConvergenceRow(100, 0.5, 0.05, 0.011), mc.ConvergenceRow(400, 0.5, 0.025, 0.0056)]}
    mc.write_convergence_csv(tmp_path / "c.csv", rows)
    assert mc.read_convergence_csv(tmp_path / "c.csv") == rows


def test_convergence_study_shape():
    rows = mc.convergence_study(fast(v0=0.3), (16, 64), 3)
    assert [r.n_events for r in rows] == [16, 64]
    assert all(r.stderr == pytest.approx(r.sigma / math.sqrt(3)) for r in rows)


def test_density_map(tmp_path):
    grid = DensityGrid(nx=10, nz=40)
    dm = mc.density_map(fast(n=32), 0.5, grid)
    assert dm.mass.shape == (10, 40)
    assert dm.mass.sum() == pytest.approx(1.0, abs=1e-12)
    assert 0.0 < dm.fraction_within(2.0, 2.0) < 1.0
    dm.to_csv(tmp_path / "d.csv")
    back = mc.DensityMap.from_csv(tmp_path / "d.csv", grid)
    assert np.array_equal(back.mass, dm.mass)


def test_density_forces_real_case():
    s = fast(n=32)
    assert s.sampling.complex_orbits
    a = mc.density_map(s, 0.5, DensityGrid(nx=10, nz=40))
    b = mc.density_map(dataclasses.replace(s, sampling=dataclasses.replace(s.sampling, complex_orbits=False)), 0.5,
                       DensityGrid(nx=10, nz=40))
    assert np.array_equal(a.mass, b.mass)


def test_confined_theta(tmp_path):
    s = fast(n=32)
    c = mc.theta_vs_v0_confined(s, [1e-6, 0.5])
    assert abs(c.theta[0]) < 0.3 and c.estimates[0].t == 1.0
    c.to_csv(tmp_path / "th.csv")
    d = mc.ConfinedThetaCurve.from_csv(tmp_path / "th.csv", s)
    assert np.array_equal(d.theta, c.theta) and d.estimates[1].n_trans == c.estimates[1].n_trans
