import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hexid import excitation as E
from hexid.errors import OptimizerStalled, WorkspaceViolation, ZeroSignal

# brute-force minimum over the relative phase of max(CF_u, CF_udd) for harmonics (1, 3)
# with equal amplitudes, computed on a 0.001 rad grid with dense time sampling
TWO_TONE_MIN_CF = 1.539710511046831


@pytest.fixture(scope="module")
def siso():
    return E.design_multisine(optimize=False, seed=3)


def test_single_harmonic_crest_factor():
    t = np.arange(1000) / 1000
    assert E.crest_factor(np.cos(2 * np.pi * 5 * t)) == pytest.approx(math.sqrt(2), rel=1e-12)
    cu, ca = E.multisine_crest_factors([5], [1.0], [0.3])
    assert cu == pytest.approx(math.sqrt(2), rel=1e-12) and ca == pytest.approx(math.sqrt(2), rel=1e-12)


def test_constant_and_zero_signals():
    assert E.crest_factor(np.full(64, -2.5)) == 1.0
    with pytest.raises(ZeroSignal):
        E.crest_factor(np.zeros(8))


def test_random_phase_crest_factor_distribution():
    rng = np.random.default_rng(0)
    k = np.arange(8, 48)
    cf, _ = E.multisine_crest_factors(k, np.ones(40), rng.uniform(0, 2 * np.pi, (400, 40)), T0=20.0)
    assert 2.5 <= cf.mean() <= 3.5


def test_exact_peak_not_below_dense_sampling(rng):
    k = np.arange(8, 48)
    ph = rng.uniform(0, 2 * np.pi, 40)
    t = np.linspace(0, 20, 400_001)
    x = E.synthesize(k, 20.0, np.ones(40), ph, t)
    cu, _ = E.multisine_crest_factors(k, np.ones(40), ph, T0=20.0)
    dense = np.max(np.abs(x)) / math.sqrt(20)
    assert cu >= dense - 1e-12 and cu - dense < 1e-6


def test_two_tone_optimum_reached():
    opt = E.optimize_phases([1, 3], [[1.0, 1.0]], 1.0, rng=0)
    assert max(opt.cf_u[0, 0], opt.cf_a[0, 0]) <= TWO_TONE_MIN_CF + 1e-3
    assert opt.objective <= TWO_TONE_MIN_CF - math.sqrt(2) + 1e-3


def test_history_monotone_and_forty_line_target():
    k, T0 = E.harmonics_for_band(0.4, 2.35, 0.05)
    assert len(k) == 40
    opt = E.optimize_phases(k, np.full((1, 40), 0.01), T0, rng=1)
    assert np.all(np.diff(opt.history) < 0)
    assert opt.objective <= opt.initial_objective
    assert max(opt.cf_u.max(), opt.cf_a.max()) <= 1.9


def test_single_line_needs_no_optimization():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        opt = E.optimize_phases([4], [[1.0]], 1.0, rng=0)
    assert opt.objective == pytest.approx(0.0, abs=1e-12) and not opt.stalled


def test_optimizer_stall_reported():
    with pytest.warns(RuntimeWarning):
        opt = E.optimize_phases([1, 3, 5], [[1.0, 1.0, 1.0]], 1.0, rng=0, p_schedule=())
    assert opt.stalled and opt.history == [opt.initial_objective]
    with pytest.raises(OptimizerStalled):
        E.optimize_phases([1, 3, 5], [[1.0, 1.0, 1.0]], 1.0, rng=0, p_schedule=(), strict=True)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_orthogonal_input_matrices(n, seed):
    rng = np.random.default_rng(seed)
    F = 5
    A = rng.uniform(0.5, 2.0, (n, F))
    ph = E.orthogonal_set(rng.uniform(0, 7, (n, F)), rng.uniform(0, 7, (n, F)))
    d = E.MultisineDesign(np.arange(3, 3 + F), 10.0, 20.0, A, np.stack([ph, ph]), tuple(range(n)))
    for r in range(2):
        for line in range(F):
            U = d.input_matrix(r, line)
            np.testing.assert_allclose(U.conj().T @ U, n * np.diag(A[:, line] ** 2), atol=1e-12)


def test_dft_recovers_amplitudes_and_phases(siso):
    x = E.synthesize_multisine(siso, 0, experiment=1)
    N = siso.samples_per_period
    X = np.fft.rfft(x) * 2 / N
    lines = X[siso.harmonics]
    np.testing.assert_allclose(np.abs(lines), siso.amplitudes[0], atol=1e-10)
    np.testing.assert_allclose(np.exp(1j * np.angle(lines)), np.exp(1j * siso.phases[1, 0, 0]), atol=1e-10)
    others = np.delete(np.abs(X), siso.harmonics)
    assert others.max() < 1e-12


def test_acceleration_rms_quadrature(siso):
    a = E.synthesize_multisine(siso, 0, derivative=2)
    w = 2 * np.pi * siso.frequencies
    expected = math.sqrt(np.sum((siso.amplitudes[0] * w ** 2) ** 2) / 2)
    assert math.sqrt(np.mean(a ** 2)) == pytest.approx(expected, rel=1e-12)


def test_derivatives_consistent(siso):
    t = np.linspace(0, 3, 301)
    args = (siso.harmonics, siso.T0, siso.amplitudes[0], siso.phases[0, 0, 0])
    h = 1e-5
    fd = (E.synthesize(*args, t + h) - E.synthesize(*args, t - h)) / (2 * h)
    np.testing.assert_allclose(E.synthesize(*args, t, derivative=1), fd, atol=1e-7)


def test_ramp_boundary_conditions():
    x1, v1, T = np.array([0.02, -0.01]), np.array([0.05, 0.1]), 1.0
    a, b = E.ramp_polynomial(x1, v1, T)
    np.testing.assert_allclose(a * T ** 2 + b * T ** 3, x1, atol=1e-15)
    np.testing.assert_allclose(2 * a * T + 3 * b * T ** 2, v1, atol=1e-15)
    pos, vel, acc = E.ramp_segment(x1, v1, T, fs=100)
    assert pos.shape == (100, 2)
    np.testing.assert_array_equal(pos[0], 0.0)
    np.testing.assert_array_equal(vel[0], 0.0)
    with pytest.raises(ValueError):
        E.ramp_segment(x1, v1, 0.0)


def test_trajectory_structure_and_continuity(siso):
    tr = E.build_trajectory(siso, 1)
    fs, n_per = siso.fs, siso.samples_per_period
    assert tr.duration == pytest.approx(202.0)
    assert E.session_duration(siso) == pytest.approx(404.0)
    s = tr.steady
    assert s.start == 200 and s.stop - s.start == 10 * n_per
    steady = tr.poses[s]
    for p in range(1, 10):
        np.testing.assert_array_equal(steady[p * n_per:(p + 1) * n_per], steady[:n_per])
    # rest at both ends, position and velocity continuous at the junctions
    np.testing.assert_array_equal(tr.poses[0], 0.0)
    np.testing.assert_array_equal(tr.velocity[0], 0.0)
    assert np.abs(tr.velocity[-1]).max() < 2 * np.abs(tr.accel).max() / fs
    steps = np.abs(np.diff(tr.poses[:, 0]))
    vmax = np.abs(tr.velocity[:, 0]).max()
    assert steps.max() <= vmax / fs * 1.01
    dv = np.abs(np.diff(tr.velocity[:, 0]))
    assert dv.max() <= np.abs(tr.accel[:, 0]).max() / fs * 1.05
    assert tr.segment_labels[0] == "ramp_in" and tr.segment_labels[-1] == "ramp_out"


def test_mimo_session_length():
    d = E.design_multisine(dofs=range(6), amplitude=0.005, optimize=False)
    assert d.n_experiments == 12
    assert E.session_duration(d) == pytest.approx(2424.0)


def test_design_validation():
    with pytest.raises(ValueError):
        E.MultisineDesign([1, 1], 10.0, 20.0, [[1, 1]], np.zeros((2, 1, 1, 2)))
    with pytest.raises(ValueError):
        E.MultisineDesign([5], 10.0, 20.0, [[1]], np.zeros((1, 1, 1, 1)))
    with pytest.raises(ValueError):
        E.MultisineDesign([150], 10.0, 20.0, [[1]], np.zeros((2, 1, 1, 1)))


def test_design_json_round_trip(tmp_path, siso):
    siso.save(tmp_path / "d.json")
    d2 = E.MultisineDesign.load(tmp_path / "d.json")
    assert d2.to_dict() == siso.to_dict()


def test_trajectory_csv_round_trip(tmp_path, siso):
    tr = E.build_trajectory(siso, 0)
    tr.to_csv(tmp_path / "t.csv")
    back = E.Trajectory.from_csv(tmp_path / "t.csv", siso.T0, siso.periods)
    np.testing.assert_allclose(back.poses, tr.poses, atol=1e-14)
    np.testing.assert_array_equal(back.segments, tr.segments)
    assert back.fs == siso.fs


def test_workspace_guard(geom, table):
    ok = E.design_multisine(optimize=False)
    E.build_trajectory(ok, 0, geom=geom, table=table)
    big = E.design_multisine(optimize=False, amplitude=0.05)
    with pytest.raises(WorkspaceViolation):
        E.build_trajectory(big, 0, geom=geom)
