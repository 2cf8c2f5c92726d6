import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hexid import excitation as E
from hexid import plant as P
from hexid.errors import FrequencyOutOfTable

TWO_PI = 2 * math.pi


def sine_trajectory(dof=0, amp=0.05, freq=1.0, T0=20.0, phase=0.0, periods=2):
    k = int(round(freq * T0))
    ph = np.zeros((2, 1, 1, 1)) + phase
    d = E.MultisineDesign([k], T0, 200.0, [[amp]], ph, (dof,), periods, 1.0)
    return E.build_trajectory(d, 0)


def damped_scalar_model(c=10.0):
    omega = np.array([1.0, 10.0])
    C = np.stack([c * np.eye(6)] * 2)
    return P.HydroModel(16.67 * np.eye(6), omega=omega, C_FL=C)


def test_frf_worked_example():
    H = P.plant_frf(damped_scalar_model(), TWO_PI)
    assert H[0, 0] == pytest.approx(16.67 - 1.5915494309189535j, abs=1e-12)
    assert np.count_nonzero(H - np.diag(np.diag(H))) == 0


def test_frf_stiffness_term():
    m = P.HydroModel(2.0 * np.eye(6), K=8.0 * np.eye(6))
    assert P.plant_frf(m, 2.0)[0, 0] == pytest.approx(0.0)


def test_table_nodes_exact_and_range():
    m = P.wet_cylinder()
    for i in (0, len(m.omega) // 2, len(m.omega) - 1):
        Mf, Cf = m.fluid(m.omega[i])
        assert np.array_equal(Mf, m.M_FL[i]) and np.array_equal(Cf, m.C_FL[i])
    with pytest.raises(FrequencyOutOfTable):
        m.fluid(m.omega[-1] * 1.5)
    with pytest.raises(FrequencyOutOfTable):
        P.plant_frf(m, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0))
def test_frf_symmetric_for_symmetric_tables(s):
    m = P.wet_cylinder()
    w = m.omega[0] + s * (m.omega[-1] - m.omega[0])
    H = P.plant_frf(m, w)
    np.testing.assert_allclose(H, H.T, atol=1e-12)


def test_model_validation():
    with pytest.raises(ValueError):
        P.HydroModel(-np.eye(6))
    with pytest.raises(ValueError):
        P.HydroModel(np.eye(6), omega=[2.0, 1.0])


def test_model_json_round_trip(tmp_path):
    m = P.wet_cylinder()
    m.save(tmp_path / "m.json")
    m2 = P.HydroModel.load(tmp_path / "m.json")
    assert m2.to_dict() == m.to_dict()


def test_surge_force_and_cell_offset():
    tr = sine_trajectory(0, 0.05, 1.0)
    model = P.point_mass(16.6, datum=(0, 0, -0.2536))
    rec = P.simulate_experiment(tr, model, P.LoadCellModel())
    fx = rec.wrench_meas[tr.steady, 0]
    assert np.max(np.abs(fx)) == pytest.approx(16.6 * 0.05 * TWO_PI ** 2, rel=1e-9)
    assert np.max(np.abs(fx)) == pytest.approx(32.767, abs=1e-3)
    np.testing.assert_allclose(rec.wrench_meas[:, 4], -0.2536 * rec.wrench_meas[:, 0], atol=1e-12)
    assert np.max(np.abs(rec.wrench_meas[tr.steady, 4])) == pytest.approx(8.3097, abs=1e-3)


def test_zero_motion_gives_zero_wrench():
    tr = sine_trajectory(amp=0.0)
    w, transient = P.ideal_wrench(tr, P.wet_cylinder())
    assert np.all(w == 0)
    assert transient[0] and not transient[tr.steady].any()


def test_spectrum_confined_to_excited_lines():
    d = E.design_multisine(dofs=(0, 2, 4), amplitude=0.005, optimize=False)
    tr = E.build_trajectory(d, 1)
    w, _ = P.ideal_wrench(tr, P.wet_cylinder())
    n = d.samples_per_period
    W = np.abs(np.fft.rfft(w[tr.steady][:n], axis=0))
    off = np.delete(W, d.harmonics, axis=0)
    assert off.max() < 1e-9 * W.max()
    # the steady segment is exactly periodic
    np.testing.assert_allclose(w[tr.steady][n:2 * n], w[tr.steady][:n], atol=1e-12)


def test_superposition():
    a, b = sine_trajectory(0, 0.01, 1.0), sine_trajectory(1, 0.02, 1.5, phase=0.7)
    both = E.Trajectory(a.t, a.poses + b.poses, a.velocity + b.velocity, a.accel + b.accel,
                        a.segments, a.fs, a.T0, a.periods)
    m = P.wet_cylinder()
    np.testing.assert_allclose(P.ideal_wrench(both, m)[0], P.ideal_wrench(a, m)[0] + P.ideal_wrench(b, m)[0],
                               atol=1e-10)


def test_gauge_fault_scales_lateral_forces():
    tr = sine_trajectory(0, 0.05, 1.0)
    m = P.point_mass(16.6)
    clean = P.simulate_experiment(tr, m).wrench_meas
    faulty = P.simulate_experiment(tr, m, P.LoadCellModel(gauge_fault=(1 / 1.15, 0.0))).wrench_meas
    big = np.abs(clean[:, 0]) > 1
    np.testing.assert_allclose(faulty[big, 0] / clean[big, 0], 0.8695652173913044, rtol=1e-12)
    np.testing.assert_array_equal(faulty[:, 2], clean[:, 2])
    with pytest.raises(ValueError):
        P.fault_gain(np.array([-100.0]), P.LoadCellModel(gauge_fault=(1.0, 0.02)))


def test_trigger_delay_phase_and_magnitude():
    fs, n = 200.0, 4000
    t = np.arange(n) / fs
    x = np.cos(TWO_PI * t)[:, None]
    y = P.delay_periodic(x, 0.0411, fs)
    X, Y = np.fft.rfft(x[:, 0]), np.fft.rfft(y[:, 0])
    k = 20
    lag = math.degrees(np.angle(X[k] / Y[k]))
    assert lag == pytest.approx(14.796, abs=1e-3)
    assert abs(Y[k]) == pytest.approx(abs(X[k]), rel=1e-12)


def test_noise_std():
    cell = P.LoadCellModel(noise_std=[1, 2, 3, 0.1, 0.2, 0.3])
    w = P.apply_load_cell(np.zeros((100_000, 6)), cell, rng=5)
    np.testing.assert_allclose(w.std(axis=0), cell.noise_std, rtol=0.05)
    with pytest.raises(ValueError):
        P.LoadCellModel(noise_std=-1)


def test_delay_requires_rate():
    with pytest.raises(ValueError):
        P.apply_load_cell(np.zeros((10, 6)), P.LoadCellModel(trigger_delay=0.01))


def test_record_round_trip_and_determinism(tmp_path):
    tr = sine_trajectory(2, 0.01, 0.5)
    cell = P.LoadCellModel(noise_std=2.0, trigger_delay=0.02)
    r1 = P.simulate_experiment(tr, P.wet_cylinder(), cell, seed=11)
    r2 = P.simulate_experiment(tr, P.wet_cylinder(), cell, seed=11)
    r3 = P.simulate_experiment(tr, P.wet_cylinder(), cell, seed=12)
    assert np.array_equal(r1.wrench_meas, r2.wrench_meas)
    assert not np.array_equal(r1.wrench_meas, r3.wrench_meas)
    r1.save(tmp_path / "r.csv")
    back = P.MeasurementRecord.load(tmp_path / "r.csv")
    for name in ("t", "disp_cmd", "accel_cmd", "wrench_meas", "segments"):
        assert np.array_equal(getattr(back, name), getattr(r1, name))
    assert back.metadata == r1.metadata and back.fs == 200.0


def test_quadratic_drag_residual():
    tr = sine_trajectory(0, 0.05, 1.0)
    base = P.point_mass()
    drag = P.HydroModel(base.M_s, residual=P.QuadraticDrag([5, 0, 0, 0, 0, 0]))
    diff = P.ideal_wrench(tr, drag)[0] - P.ideal_wrench(tr, base)[0]
    np.testing.assert_allclose(diff[:, 0], 5 * np.abs(tr.velocity[:, 0]) * tr.velocity[:, 0], atol=1e-12)
