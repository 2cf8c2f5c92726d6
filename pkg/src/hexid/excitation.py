"""Orthogonal random-phase multisines with joint displacement/acceleration crest-factor optimization.

A design excites harmonics ``k`` of the period ``T0`` in ``n_u`` DOFs. Within a
realization, experiment ``m`` drives DOF ``j`` with phases

    phi[m, j, k] = alpha[j, k] + beta[m, k] + 2 pi m j / n_u

so the per-line input matrix ``U[m, j] = A[j, k] exp(i phi[m, j, k])`` is a
DFT matrix scaled by unit-modulus diagonals on both sides, and
``U^H U = n_u diag(A[:, k]^2)``. Only ``alpha`` and ``beta`` are optimized.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy.optimize import minimize

from .errors import OptimizerStalled, WorkspaceViolation, ZeroSignal
from .kinematics import DOF_NAMES

SQRT2 = math.sqrt(2.0)
P_SCHEDULE = (1, 2, 4, 8, 16, 32)
OVERSAMPLE = 16
SEGMENT_LABELS = ("ramp_in", "steady", "ramp_out")


@dataclass
class MultisineDesign:
    """Periodic multisine plan for ``n_u`` DOFs, ``realizations`` x ``n_u`` experiments.

    ``amplitudes`` is ``(n_u, F)`` (m or rad), ``phases`` is
    ``(realizations, n_u experiments, n_u DOFs, F)``.
    """

    harmonics: np.ndarray
    T0: float
    fs: float
    amplitudes: np.ndarray
    phases: np.ndarray
    dofs: tuple = (0,)
    periods: int = 10
    ramp: float = 1.0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.harmonics = np.asarray(self.harmonics, dtype=int).reshape(-1)
        self.amplitudes = np.asarray(self.amplitudes, dtype=float).reshape(len(self.dofs), -1)
        self.phases = np.asarray(self.phases, dtype=float)
        self.dofs = tuple(int(d) for d in self.dofs)
        self.validate()

    @property
    def n_u(self):
        return len(self.dofs)

    @property
    def realizations(self):
        return self.phases.shape[0]

    @property
    def n_experiments(self):
        return self.realizations * self.n_u

    @property
    def frequencies(self):
        return self.harmonics / self.T0

    @property
    def samples_per_period(self):
        return int(round(self.fs * self.T0))

    @property
    def duration(self):
        return self.periods * self.T0 + 2 * self.ramp

    def validate(self):
        F = len(self.harmonics)
        if F == 0 or np.any(self.harmonics <= 0) or len(np.unique(self.harmonics)) != F:
            raise ValueError("harmonics must be distinct positive integers")
        if self.phases.shape[1:] != (self.n_u, self.n_u, F) or self.amplitudes.shape != (self.n_u, F):
            raise ValueError("phase/amplitude arrays do not match harmonics and DOFs")
        if self.realizations < 2 and not self.info.get("allow_single_realization"):
            raise ValueError("at least two realizations are required")
        n = self.fs * self.T0
        if abs(n - round(n)) > 1e-9 or abs(self.fs * self.ramp - round(self.fs * self.ramp)) > 1e-9:
            raise ValueError("fs*T0 and fs*ramp must be integers")
        if 2 * self.harmonics.max() >= round(n):
            raise ValueError("highest harmonic above Nyquist")
        if self.periods < 1:
            raise ValueError("periods must be >= 1")

    def experiment_index(self, experiment):
        """(realization, experiment-within-realization) for a flat experiment number."""
        if not 0 <= experiment < self.n_experiments:
            raise IndexError("experiment out of range")
        return divmod(int(experiment), self.n_u)

    def input_matrix(self, realization, line):
        """Complex n_u x n_u input matrix at harmonic index ``line`` (rows: experiments)."""
        return self.amplitudes[None, :, line] * np.exp(1j * self.phases[realization, :, :, line])

    def to_dict(self):
        return dict(harmonics=self.harmonics.tolist(), T0=self.T0, fs=self.fs,
                    amplitudes=self.amplitudes.tolist(), phases=self.phases.tolist(),
                    dofs=list(self.dofs), periods=self.periods, ramp=self.ramp, info=self.info)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def harmonics_for_band(f_min, f_max, df):
    """Harmonic indices of ``T0 = 1/df`` covering ``[f_min, f_max]`` inclusive."""
    k0 = int(round(f_min / df))
    k1 = int(round(f_max / df))
    return np.arange(k0, k1 + 1), 1.0 / df


def orthogonal_set(alpha, beta=None):
    """Phases ``(n_u experiments, n_u DOFs, F)`` from per-DOF and per-experiment phases."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    n, F = alpha.shape
    beta = np.zeros((n, F)) if beta is None else np.asarray(beta, dtype=float).reshape(n, F)
    m = np.arange(n)
    dft = 2 * np.pi * np.outer(m, m) / n
    return alpha[None, :, :] + beta[:, None, :] + dft[:, :, None]


def synthesize(harmonics, T0, amplitudes, phases, t, derivative=0):
    """Sum of ``A cos(2 pi k t / T0 + phi)`` (or its ``derivative``-th time derivative) at times ``t``."""
    w = 2 * np.pi * np.asarray(harmonics) / T0
    arg = np.outer(np.asarray(t, dtype=float), w) + np.asarray(phases)
    coef = np.asarray(amplitudes) * w ** derivative
    shift = derivative * np.pi / 2
    return np.cos(arg + shift) @ coef


def synthesize_multisine(design: MultisineDesign, dof, experiment=0, derivative=0):
    """One period of DOF index ``dof`` (position within ``design.dofs``) sampled at ``fs``."""
    r, m = design.experiment_index(experiment)
    t = np.arange(design.samples_per_period) / design.fs
    return synthesize(design.harmonics, design.T0, design.amplitudes[dof], design.phases[r, m, dof], t, derivative)


def crest_factor(signal):
    """Peak over rms of a sampled signal covering whole periods."""
    x = np.asarray(signal, dtype=float)
    rms = math.sqrt(float(np.mean(x ** 2)))
    if not rms > 0:
        raise ZeroSignal("crest factor of a zero signal")
    return float(np.max(np.abs(x)) / rms)


def _grid_size(harmonics):
    return sfft.next_fast_len(2 * OVERSAMPLE * int(np.max(harmonics)), real=True)


def _signals(harmonics, coef, phases, N):
    """Real signals on an N-point period grid; ``phases`` is (..., F)."""
    spec = np.zeros(phases.shape[:-1] + (N // 2 + 1,), dtype=complex)
    spec[..., harmonics] = coef * (N / 2) * np.exp(1j * phases)
    return sfft.irfft(spec, N, axis=-1)


def multisine_crest_factors(harmonics, amplitudes, phases, T0=1.0):
    """Exact-peak crest factors ``(CF_u, CF_udd)`` of analytic multisines.

    The peak is located on the oversampled grid, then polished by Newton steps
    on the analytic derivative. ``phases`` may carry leading batch axes.
    """
    harmonics = np.asarray(harmonics)
    phases = np.asarray(phases, dtype=float)
    A = np.broadcast_to(np.asarray(amplitudes, dtype=float), phases.shape)
    w = 2 * np.pi * harmonics / T0
    N = _grid_size(harmonics)
    out = []
    for order in (0, 2):
        coef = A * w ** order * (-1) ** (order // 2)
        x = _signals(harmonics, coef, phases, N)
        rms = np.sqrt(np.sum(coef ** 2, axis=-1) / 2)
        if np.any(~(rms > 0)):
            raise ZeroSignal("crest factor of a zero signal")
        i = np.argmax(np.abs(x), axis=-1)
        t = i / N * T0
        for _ in range(8):
            arg = t[..., None] * w + phases
            d1 = -np.sum(coef * w * np.sin(arg), axis=-1)
            d2 = -np.sum(coef * w ** 2 * np.cos(arg), axis=-1)
            step = np.where(np.abs(d2) > 0, d1 / np.where(d2 == 0, 1, d2), 0.0)
            t = t - np.clip(step, -T0 / N, T0 / N)
        peak = np.abs(np.sum(coef * np.cos(t[..., None] * w + phases), axis=-1))
        grid_peak = np.max(np.abs(x), axis=-1)
        out.append(np.maximum(peak, grid_peak) / rms)
    return out[0], out[1]


def time_factor(harmonics, amplitudes, phases, T0=1.0):
    """Measurement time per line relative to a single sine of the same peak: CF^2 u_rms^2 / (F min_k A_k^2 / 2)."""
    A = np.asarray(amplitudes, dtype=float)
    cf, _ = multisine_crest_factors(harmonics, A, phases, T0)
    rms2 = np.sum(A ** 2) / 2
    return float(cf ** 2 * rms2 / (len(A) * np.min(A) ** 2 / 2))


class _Problem:
    """Joint l2p objective over all n_u^2 experiment/DOF signals of one realization."""

    def __init__(self, harmonics, amplitudes, T0):
        self.k = np.asarray(harmonics)
        self.A = np.asarray(amplitudes, dtype=float)  # (n, F)
        self.n, self.F = self.A.shape
        self.T0 = T0
        w = 2 * np.pi * self.k / T0
        self.coef_u = self.A
        self.coef_a = -self.A * w ** 2
        self.N = _grid_size(self.k)
        self.rms_u = np.sqrt(np.sum(self.coef_u ** 2, axis=-1) / 2)
        self.rms_a = np.sqrt(np.sum(self.coef_a ** 2, axis=-1) / 2)

    def unpack(self, z):
        alpha = z[: self.n * self.F].reshape(self.n, self.F)
        beta = z[self.n * self.F:].reshape(self.n, self.F) if self.n > 1 else None
        return orthogonal_set(alpha, beta)

    def pack(self, alpha, beta):
        return np.concatenate([alpha.ravel(), beta.ravel()]) if self.n > 1 else alpha.ravel()

    def lp(self, z, p):
        phi = self.unpack(z)  # (m, j, F)
        cu = np.broadcast_to(self.coef_u, phi.shape)
        ca = np.broadcast_to(self.coef_a, phi.shape)
        x = _signals(self.k, cu, phi, self.N) / self.rms_u[None, :, None]
        y = _signals(self.k, ca, phi, self.N) / self.rms_a[None, :, None]
        scale = np.maximum(np.max(np.abs(x), axis=-1), np.max(np.abs(y), axis=-1))[..., None]
        xs, ys = x / scale, y / scale
        S = np.mean(xs ** (2 * p) + ys ** (2 * p), axis=-1, keepdims=True)
        f = scale * S ** (1.0 / (2 * p))
        pre = S ** (1.0 / (2 * p) - 1) / self.N
        gx = pre * xs ** (2 * p - 1) / self.rms_u[None, :, None]
        gy = pre * ys ** (2 * p - 1) / self.rms_a[None, :, None]
        Gx = sfft.rfft(gx, axis=-1)[..., self.k]
        Gy = sfft.rfft(gy, axis=-1)[..., self.k]
        e = np.exp(1j * phi)
        dphi = -cu * np.imag(e * np.conj(Gx)) - ca * np.imag(e * np.conj(Gy))
        grad_alpha = dphi.sum(axis=0)
        if self.n > 1:
            return float(f.sum()), self.pack(grad_alpha, dphi.sum(axis=1))
        return float(f.sum()), grad_alpha.ravel()

    def cf_objective(self, z):
        cu, ca = self.crest_factors(z)
        return float(np.sum(np.maximum(cu, ca)) - SQRT2 * self.n ** 2)

    def crest_factors(self, z):
        phi = self.unpack(z)
        return multisine_crest_factors(self.k, np.broadcast_to(self.A, phi.shape), phi, self.T0)


@dataclass
class PhaseOptimization:
    phases: np.ndarray  # (n_u, n_u, F)
    objective: float
    initial_objective: float
    history: list
    cf_u: np.ndarray
    cf_a: np.ndarray
    cf_u0: np.ndarray
    cf_a0: np.ndarray
    stalled: bool = False


def optimize_phases(harmonics, amplitudes, T0, rng=None, p_schedule=P_SCHEDULE, maxiter=200,
                    init=None, strict=False) -> PhaseOptimization:
    """Minimize the summed crest-factor gap of one realization's orthogonal set.

    Each stage minimizes the joint l2p norm of displacement and acceleration
    (both rms-normalized) with L-BFGS, warm-started from the previous stage.
    A stage's result is accepted only if the true crest-factor objective
    ``sum max(CF_u, CF_udd) - sqrt(2) n_u^2`` improves, so the accepted
    sequence never increases. ``init`` optionally gives starting ``(alpha, beta)``.
    If nothing improves, the initial phases are returned with ``stalled=True``
    and a warning (or :class:`OptimizerStalled` when ``strict``).
    """
    rng = np.random.default_rng(rng)
    A = np.atleast_2d(np.asarray(amplitudes, dtype=float))
    prob = _Problem(harmonics, A, T0)
    if init is None:
        alpha = rng.uniform(0, 2 * np.pi, A.shape)
        beta = rng.uniform(0, 2 * np.pi, A.shape)
    else:
        alpha, beta = init
    z0 = prob.pack(np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float))
    cu0, ca0 = prob.crest_factors(z0)
    best_z, best = z0, prob.cf_objective(z0)
    start = best
    history = [best]
    z = z0
    if best > 1e-12 and prob.F > 1:
        for p in p_schedule:
            res = minimize(prob.lp, z, args=(p,), jac=True, method="L-BFGS-B",
                           options=dict(maxiter=maxiter, gtol=1e-10, ftol=1e-13))
            z = res.x
            val = prob.cf_objective(z)
            if val < best:
                best, best_z = val, z
                history.append(val)
    stalled = len(history) == 1 and start > 1e-12
    if stalled:
        msg = "phase optimization did not improve the crest-factor objective"
        if strict:
            raise OptimizerStalled(msg)
        warnings.warn(msg, RuntimeWarning)
    cu, ca = prob.crest_factors(best_z)
    return PhaseOptimization(np.mod(prob.unpack(best_z), 2 * np.pi), best, start, history,
                             cu, ca, cu0, ca0, stalled)


def design_multisine(dofs=(0,), f_min=0.4, f_max=2.35, df=0.05, fs=200.0, amplitude=0.01,
                     rotation_scale=1.0, periods=10, realizations=2, ramp=1.0, seed=0,
                     optimize=True, maxiter=200) -> MultisineDesign:
    """Flat-amplitude orthogonal multisine design for the listed DOF indices.

    ``amplitude`` is the per-harmonic displacement amplitude (m); rotational
    DOFs use ``amplitude * rotation_scale`` radians.
    """
    dofs = tuple(int(d) for d in dofs)
    harmonics, T0 = harmonics_for_band(f_min, f_max, df)
    scale = np.array([rotation_scale if d >= 3 else 1.0 for d in dofs])
    A = np.outer(amplitude * scale, np.ones(len(harmonics)))
    rng = np.random.default_rng(seed)
    phases, reports = [], []
    for _ in range(realizations):
        if optimize:
            opt = optimize_phases(harmonics, A, T0, rng=rng, maxiter=maxiter)
            phases.append(opt.phases)
            reports.append(dict(objective=opt.objective, initial_objective=opt.initial_objective,
                                cf_u=opt.cf_u.tolist(), cf_udd=opt.cf_a.tolist(), stalled=opt.stalled))
        else:
            phases.append(orthogonal_set(rng.uniform(0, 2 * np.pi, A.shape), rng.uniform(0, 2 * np.pi, A.shape)))
    info = dict(seed=seed, band=[f_min, f_max], df=df, optimization=reports,
                allow_single_realization=realizations < 2)
    return MultisineDesign(harmonics, T0, fs, A, np.array(phases), dofs, periods, ramp, info)


def ramp_segment(target_position, target_velocity, duration=1.0, fs=200.0):
    """Cubic from rest at the origin to ``(x1, v1)`` after ``duration``.

    Returns position, velocity and acceleration sampled at ``i / fs`` for
    ``i < fs * duration`` (the endpoint belongs to the next segment).
    """
    x1 = np.asarray(target_position, dtype=float)
    v1 = np.asarray(target_velocity, dtype=float)
    T = float(duration)
    if not T > 0:
        raise ValueError("duration must be positive")
    a = (3 * x1 - v1 * T) / T ** 2
    b = (v1 * T - 2 * x1) / T ** 3
    n = int(round(fs * T))
    tau = (np.arange(n) / fs).reshape((-1,) + (1,) * x1.ndim)
    pos = a * tau ** 2 + b * tau ** 3
    vel = 2 * a * tau + 3 * b * tau ** 2
    acc = 2 * a + 6 * b * tau
    return pos, vel, acc


def ramp_polynomial(target_position, target_velocity, duration=1.0):
    """Coefficients ``(a, b)`` of ``x = a t^2 + b t^3``."""
    x1 = np.asarray(target_position, dtype=float)
    v1 = np.asarray(target_velocity, dtype=float)
    T = float(duration)
    return (3 * x1 - v1 * T) / T ** 2, (v1 * T - 2 * x1) / T ** 3


@dataclass
class Trajectory:
    """Sampled 6-DOF motion of the datum with analytic velocity and acceleration."""

    t: np.ndarray
    poses: np.ndarray
    velocity: np.ndarray
    accel: np.ndarray
    segments: np.ndarray  # 0 ramp_in, 1 steady, 2 ramp_out
    fs: float
    T0: float
    periods: int
    experiment: int = 0

    @property
    def steady(self):
        idx = np.flatnonzero(self.segments == 1)
        return slice(int(idx[0]), int(idx[-1]) + 1)

    @property
    def duration(self):
        return len(self.t) / self.fs

    @property
    def segment_labels(self):
        return [SEGMENT_LABELS[s] for s in self.segments]

    def to_csv(self, path):
        header = "t," + ",".join(DOF_NAMES) + ",segment"
        with open(path, "w") as f:
            f.write(header + "\n")
            for ti, p, s in zip(self.t, self.poses, self.segments):
                f.write(f"{ti:.6f}," + ",".join(f"{v:.12g}" for v in p) + f",{SEGMENT_LABELS[s]}\n")

    @classmethod
    def from_csv(cls, path, T0, periods):
        import csv
        with open(path) as f:
            rows = list(csv.reader(f))[1:]
        t = np.array([float(r[0]) for r in rows])
        poses = np.array([[float(v) for v in r[1:7]] for r in rows])
        seg = np.array([SEGMENT_LABELS.index(r[7]) for r in rows])
        fs = 1.0 / (t[1] - t[0])
        vel = np.gradient(poses, t, axis=0)
        return cls(t, poses, vel, np.gradient(vel, t, axis=0), seg, round(fs, 9), T0, periods)


def build_trajectory(design: MultisineDesign, experiment=0, geom=None, table=None, threshold=2.0) -> Trajectory:
    """Ramp-in, ``periods`` identical periods and ramp-out for one experiment, all six DOFs.

    With ``geom`` the trajectory is checked against the usable leg travel, and
    with ``table`` also for yoke collisions; violations raise
    :class:`WorkspaceViolation`.
    """
    r, m = design.experiment_index(experiment)
    n_per = design.samples_per_period
    n_ramp = int(round(design.fs * design.ramp))
    tp = np.arange(n_per) / design.fs
    one = np.zeros((n_per, 6))
    onev = np.zeros((n_per, 6))
    onea = np.zeros((n_per, 6))
    x0 = np.zeros(6)
    v0 = np.zeros(6)
    for j, d in enumerate(design.dofs):
        args = (design.harmonics, design.T0, design.amplitudes[j], design.phases[r, m, j])
        one[:, d] = synthesize(*args, tp)
        onev[:, d] = synthesize(*args, tp, derivative=1)
        onea[:, d] = synthesize(*args, tp, derivative=2)
        x0[d] = synthesize(*args, [0.0])[0]
        v0[d] = synthesize(*args, [0.0], derivative=1)[0]
    rin = ramp_segment(x0, v0, design.ramp, design.fs)
    # ramp-out mirrors a ramp-in toward (x0, -v0), run backward from the steady end
    tau = design.ramp - (np.arange(n_ramp) / design.fs)
    a, b = ramp_polynomial(x0, -v0, design.ramp)
    tt = tau[:, None]
    rout = (a * tt ** 2 + b * tt ** 3, -(2 * a * tt + 3 * b * tt ** 2), 2 * a + 6 * b * tt)
    P = design.periods
    poses = np.vstack([rin[0], np.tile(one, (P, 1)), rout[0]])
    vel = np.vstack([rin[1], np.tile(onev, (P, 1)), rout[1]])
    acc = np.vstack([rin[2], np.tile(onea, (P, 1)), rout[2]])
    seg = np.concatenate([np.zeros(n_ramp, int), np.ones(P * n_per, int), np.full(n_ramp, 2)])
    t = np.arange(len(seg)) / design.fs
    traj = Trajectory(t, poses, vel, acc, seg, design.fs, design.T0, P, experiment)
    if geom is not None:
        check_workspace(traj, geom, table, threshold)
    return traj


def check_workspace(traj, geom, table=None, threshold=2.0):
    from .kinematics import leg_lengths
    L = leg_lengths(traj.poses, geom)
    bad = (L < geom.travel_min) | (L > geom.travel_max)
    if bad.any():
        i = int(np.flatnonzero(bad.any(axis=1))[0])
        raise WorkspaceViolation(f"leg travel exceeded at t = {traj.t[i]:.3f} s")
    if table is not None:
        from .joints import assert_no_collision
        chk = assert_no_collision(traj.poses, geom, table, threshold)
        if not chk.ok:
            raise WorkspaceViolation(f"U-joint clearance below {threshold} mm at sample {chk.index}, leg {chk.leg}")


def session_duration(design: MultisineDesign):
    """Total motion time (s) of all experiments of a design run back to back."""
    return design.n_experiments * design.duration
