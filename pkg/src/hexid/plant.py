"""Synthetic towing-tank plant: lumped hydrodynamic model plus an imperfect load cell.

The body model maps commanded datum accelerations to the wrench the load cell
must supply, line by line in frequency:

    F(w) = [M_s + M_FL(w) - (i / w) C_FL(w) - K / w^2] a(w).

The steady segment of a periodic trajectory is synthesized exactly on its
excited lines. Ramps get the periodic response faded in/out by a cubic window
and are flagged transient.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Optional

import numpy as np

from .dynamics import Wrench, cylinder_payload, translate_wrench
from .errors import FrequencyOutOfTable
from .kinematics import DOF_NAMES

WRENCH_NAMES = ("Fx", "Fy", "Fz", "Mx", "My", "Mz")


@dataclass
class HydroModel:
    """Lumped 6-DOF body model about the reference point ``datum`` (platform frame).

    ``omega`` (rad/s) tabulates ``M_FL`` and ``C_FL`` as ``(n, 6, 6)`` arrays.
    Without tables the fluid terms are zero at every frequency.
    ``residual(t, pos, vel, acc)`` may add ``(N, 6)`` nonlinear forces.
    """

    M_s: np.ndarray
    omega: Optional[np.ndarray] = None
    M_FL: Optional[np.ndarray] = None
    C_FL: Optional[np.ndarray] = None
    K: Optional[np.ndarray] = None
    datum: np.ndarray = field(default_factory=lambda: np.zeros(3))
    residual: Optional[Callable] = None
    name: str = "model"

    def __post_init__(self):
        self.M_s = np.asarray(self.M_s, dtype=float).reshape(6, 6)
        if not np.allclose(self.M_s, self.M_s.T) or np.any(np.linalg.eigvalsh(self.M_s) <= 0):
            raise ValueError("M_s must be symmetric positive definite")
        self.K = np.zeros((6, 6)) if self.K is None else np.asarray(self.K, dtype=float).reshape(6, 6)
        self.datum = np.asarray(self.datum, dtype=float).reshape(3)
        if self.omega is not None:
            self.omega = np.asarray(self.omega, dtype=float).reshape(-1)
            n = len(self.omega)
            self.M_FL = np.zeros((n, 6, 6)) if self.M_FL is None else np.asarray(self.M_FL, dtype=float).reshape(n, 6, 6)
            self.C_FL = np.zeros((n, 6, 6)) if self.C_FL is None else np.asarray(self.C_FL, dtype=float).reshape(n, 6, 6)
            if np.any(np.diff(self.omega) <= 0):
                raise ValueError("frequency table must be strictly increasing")
        for a in (self.M_s, self.K, self.M_FL, self.C_FL):
            if a is not None and not np.all(np.isfinite(a)):
                raise ValueError("model matrices must be finite")

    def fluid(self, w):
        """Interpolated ``(M_FL, C_FL)`` at ``w`` rad/s."""
        if self.omega is None:
            return np.zeros((6, 6)), np.zeros((6, 6))
        lo, hi = self.omega[0], self.omega[-1]
        tol = 1e-9 * max(1.0, hi)
        if w < lo - tol or w > hi + tol:
            raise FrequencyOutOfTable(f"omega = {w:.6g} rad/s outside table [{lo:.6g}, {hi:.6g}]")
        i = int(np.clip(np.searchsorted(self.omega, w), 1, len(self.omega) - 1)) if len(self.omega) > 1 else 0
        if len(self.omega) == 1:
            return self.M_FL[0].copy(), self.C_FL[0].copy()
        w0, w1 = self.omega[i - 1], self.omega[i]
        s = float(np.clip((w - w0) / (w1 - w0), 0.0, 1.0))
        if s == 0.0:
            return self.M_FL[i - 1].copy(), self.C_FL[i - 1].copy()
        if s == 1.0:
            return self.M_FL[i].copy(), self.C_FL[i].copy()
        return ((1 - s) * self.M_FL[i - 1] + s * self.M_FL[i],
                (1 - s) * self.C_FL[i - 1] + s * self.C_FL[i])

    def total_mass(self, w):
        return self.M_s + self.fluid(w)[0]

    def to_dict(self):
        d = dict(name=self.name, M_s=self.M_s.tolist(), K=self.K.tolist(), datum=self.datum.tolist())
        if self.omega is not None:
            d.update(omega=self.omega.tolist(), M_FL=self.M_FL.tolist(), C_FL=self.C_FL.tolist())
        return d

    @classmethod
    def from_dict(cls, d):
        d = {k: v for k, v in d.items() if k in ("M_s", "omega", "M_FL", "C_FL", "K", "datum", "name")}
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)


def plant_frf(model: HydroModel, w) -> np.ndarray:
    """6x6 complex acceleration -> force matrix at ``w`` rad/s."""
    w = float(w)
    if not w > 0:
        raise FrequencyOutOfTable("omega must be positive")
    M_FL, C_FL = model.fluid(w)
    return (model.M_s + M_FL) - 1j / w * C_FL - model.K / w ** 2


def dry_cylinder(mass=16.67, inertia=None, datum=(0.0, 0.0, -0.375)) -> HydroModel:
    """Rigid cylinder in air about its CG: diagonal mass, configurable roll/pitch/yaw inertias."""
    if inertia is None:
        inertia = np.diag(cylinder_payload(mass).inertia)
    M = np.diag([mass, mass, mass, *np.asarray(inertia, dtype=float).reshape(3)])
    return HydroModel(M, datum=datum, name="dry_cylinder")


def point_mass(mass=16.6, datum=(0.0, 0.0, 0.0)) -> HydroModel:
    """Pure translational mass with tiny rotational inertia, for single-DOF checks."""
    return HydroModel(np.diag([mass, mass, mass, 1e-3, 1e-3, 1e-3]), datum=datum, name="point_mass")


def wet_cylinder(path=None) -> HydroModel:
    """Submerged-cylinder fixture; the bundled tables are smooth invented curves, not panel-code output."""
    if path is None:
        with resources.files("hexid").joinpath("data/wet_cylinder.json").open() as f:
            return HydroModel.from_dict(json.load(f))
    return HydroModel.load(path)


@dataclass
class LoadCellModel:
    """Imperfect six-axis load cell.

    ``gauge_fault`` is ``(g0, g1)``: the x/y force sensitivity is
    ``g0 + g1 * (Fz + static_fz)``. ``datum`` is the measurement origin in the
    platform frame. ``noise_std`` is a scalar or per-channel 6-vector.
    """

    noise_std: object = 0.0
    trigger_delay: float = 0.0
    gauge_fault: tuple = (1.0, 0.0)
    datum: np.ndarray = field(default_factory=lambda: np.zeros(3))
    static_fz: float = 0.0

    def __post_init__(self):
        self.noise_std = np.broadcast_to(np.asarray(self.noise_std, dtype=float), (6,)).copy()
        self.datum = np.asarray(self.datum, dtype=float).reshape(3)
        self.gauge_fault = tuple(float(g) for g in self.gauge_fault)
        if np.any(self.noise_std < 0):
            raise ValueError("noise_std must be non-negative")
        if not self.gauge_fault[0] > 0:
            raise ValueError("fault multiplier must be positive")

    def to_dict(self):
        return dict(noise_std=self.noise_std.tolist(), trigger_delay=self.trigger_delay,
                    gauge_fault=list(self.gauge_fault), datum=self.datum.tolist(), static_fz=self.static_fz)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def fault_gain(fz, cell: LoadCellModel):
    g = cell.gauge_fault[0] + cell.gauge_fault[1] * (np.asarray(fz) + cell.static_fz)
    if np.any(g <= 0):
        raise ValueError("gauge fault multiplier became non-positive")
    return g


def delay_periodic(x, tau, fs, axis=0):
    """Delay a periodic record by ``tau`` seconds through the phase factor exp(-i w tau)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[axis]
    X = np.fft.rfft(x, axis=axis)
    w = 2 * np.pi * np.fft.rfftfreq(n, 1.0 / fs)
    shape = [1] * x.ndim
    shape[axis] = -1
    X = X * np.exp(-1j * w * tau).reshape(shape)
    if n % 2 == 0 and tau != 0:
        # the Nyquist bin of a real signal cannot carry a phase; keep its real part
        idx = [slice(None)] * x.ndim
        idx[axis] = -1
        X[tuple(idx)] = X[tuple(idx)].real
    return np.fft.irfft(X, n, axis=axis)


def apply_load_cell(wrench, cell: LoadCellModel, fs=None, steady=None, rng=None):
    """Pass an ideal ``(N, 6)`` wrench series (at the cell datum) through the cell.

    Order: gauge fault on raw Fx/Fy, trigger delay, additive Gaussian noise.
    The delay acts on the ``steady`` slice (whole record if None) as a
    periodic shift; samples outside it are delayed by linear interpolation.
    """
    w = np.array(wrench, dtype=float)
    g = fault_gain(w[:, 2], cell)
    w[:, 0] *= g
    w[:, 1] *= g
    if cell.trigger_delay:
        if fs is None:
            raise ValueError("a sample rate is needed to apply a delay")
        steady = slice(0, len(w)) if steady is None else steady
        t = np.arange(len(w)) / fs
        shifted = np.column_stack([np.interp(t - cell.trigger_delay, t, w[:, c], left=0.0) for c in range(6)])
        shifted[steady] = delay_periodic(w[steady], cell.trigger_delay, fs)
        w = shifted
    if np.any(cell.noise_std > 0):
        rng = np.random.default_rng(rng)
        w = w + rng.standard_normal(w.shape) * cell.noise_std
    return w


@dataclass
class MeasurementRecord:
    t: np.ndarray
    disp_cmd: np.ndarray
    accel_cmd: np.ndarray
    wrench_meas: np.ndarray
    segments: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.t)
        for name in ("disp_cmd", "accel_cmd", "wrench_meas"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != (n, 6):
                raise ValueError(f"{name} must be ({n}, 6)")
            setattr(self, name, a)
        self.segments = np.asarray(self.segments, dtype=int)
        if len(self.segments) != n:
            raise ValueError("segment labels must match the time grid")

    @property
    def fs(self):
        return float(self.metadata["fs"])

    @property
    def steady(self):
        idx = np.flatnonzero(self.segments == 1)
        return slice(int(idx[0]), int(idx[-1]) + 1)

    def save(self, path):
        """Write ``path`` (CSV) and ``path + '.json'`` (metadata sidecar) atomically."""
        cols = ["t"] + [f"{d}_disp" for d in DOF_NAMES] + [f"{d}_acc" for d in DOF_NAMES] + list(WRENCH_NAMES) + ["segment"]
        tmp = f"{path}.tmp"
        with open(tmp, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(cols)
            for i in range(len(self.t)):
                wr.writerow([repr(float(self.t[i]))] + [repr(float(v)) for v in self.disp_cmd[i]]
                            + [repr(float(v)) for v in self.accel_cmd[i]]
                            + [repr(float(v)) for v in self.wrench_meas[i]] + [int(self.segments[i])])
        os.replace(tmp, path)
        with open(f"{path}.json.tmp", "w") as f:
            json.dump(self.metadata, f, indent=1)
        os.replace(f"{path}.json.tmp", f"{path}.json")

    @classmethod
    def load(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        with open(f"{path}.json") as f:
            meta = json.load(f)
        return cls(data[:, 0], data[:, 1:7], data[:, 7:13], data[:, 13:19], data[:, 19].astype(int), meta)


def _window(n):
    s = (np.arange(n) + 0.5) / n
    return 3 * s ** 2 - 2 * s ** 3


def ideal_wrench(trajectory, model: HydroModel, rel_tol=1e-12):
    """Noise-free wrench about the model datum (N x 6) and the per-sample transient flag."""
    steady = trajectory.steady
    n_per = int(round(trajectory.fs * trajectory.T0))
    acc = trajectory.accel[steady][:n_per]
    A = np.fft.rfft(acc, axis=0)
    F = np.zeros_like(A)
    scale = np.max(np.abs(A)) if A.size else 0.0
    lines = np.flatnonzero(np.max(np.abs(A), axis=1) > rel_tol * scale) if scale > 0 else []
    for k in lines:
        if k == 0:
            continue
        w = 2 * np.pi * k / trajectory.T0
        F[k] = plant_frf(model, w) @ A[k]
    one = np.fft.irfft(F, n_per, axis=0)
    n = len(trajectory.t)
    start = steady.start
    idx = (np.arange(n) - start) % n_per
    out = one[idx]
    transient = trajectory.segments != 1
    n_in = start
    n_out = n - steady.stop
    if n_in:
        out[:n_in] *= _window(n_in)[:, None]
    if n_out:
        out[steady.stop:] *= _window(n_out)[::-1, None]
    if model.residual is not None:
        out = out + np.asarray(model.residual(trajectory.t, trajectory.poses, trajectory.velocity, trajectory.accel))
    return out, transient


def translate_series(wrench, old_datum, new_datum):
    """Translate an ``(N, 6)`` wrench series between platform-frame datums (small-motion, home axes)."""
    arm = np.asarray(old_datum, dtype=float) - np.asarray(new_datum, dtype=float)
    w = np.array(wrench, dtype=float)
    w[:, 3:] += np.cross(arm, w[:, :3])
    return w


def simulate_experiment(trajectory, model: HydroModel, cell: Optional[LoadCellModel] = None, seed=None,
                        metadata=None) -> MeasurementRecord:
    """Measured wrench record for one experiment; ``seed`` drives the cell noise."""
    cell = LoadCellModel() if cell is None else cell
    ideal, transient = ideal_wrench(trajectory, model)
    at_cell = translate_series(ideal, model.datum, cell.datum)
    meas = apply_load_cell(at_cell, cell, trajectory.fs, trajectory.steady, rng=seed)
    meta = dict(fs=trajectory.fs, T0=trajectory.T0, periods=trajectory.periods,
                experiment=int(trajectory.experiment), seed=seed, model=model.name,
                motion_datum=model.datum.tolist(), cell=cell.to_dict(), transient_segments=["ramp_in", "ramp_out"])
    meta.update(metadata or {})
    return MeasurementRecord(trajectory.t, trajectory.poses, trajectory.accel, meas, trajectory.segments, meta)


class QuadraticDrag:
    """Residual hook: quadratic drag, ``c |v| v`` per DOF of extra force needed to drive the body."""

    def __init__(self, coeffs):
        self.c = np.broadcast_to(np.asarray(coeffs, dtype=float), (6,))

    def __call__(self, t, pos, vel, acc):
        v = np.asarray(vel, dtype=float)
        return self.c * np.abs(v) * v
