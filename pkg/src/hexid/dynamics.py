"""Quasi-static actuator loads and motion-plan limit checks.

Legs are massless two-force members. With ``l_hat_i`` pointing from the base
joint to the platform joint and tension positive, equilibrium of the platform
under an external load applied at a datum ``D`` reads

    F_ext = sum_i F_i l_hat_i,    M_ext = sum_i (P_i - D) x l_hat_i F_i,

with every vector expressed in the base frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularPose
from .kinematics import HOME, HexapodGeometry, Pose, inverse_kinematics, leg_lengths, platform_origin, rotation_matrix, rotation_matrices

GRAVITY = np.array([0.0, 0.0, -9.81])
COND_LIMIT = 1e12


@dataclass(frozen=True)
class Wrench:
    """Force (N) and moment (N m) in base-frame components about ``datum``.

    ``datum`` is a point in the platform frame.
    """

    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    moment: np.ndarray = field(default_factory=lambda: np.zeros(3))
    datum: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("force", "moment", "datum"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float).reshape(3))

    def as_vector(self):
        return np.concatenate([self.force, self.moment])

    @classmethod
    def from_vector(cls, v, datum=(0.0, 0.0, 0.0)):
        v = np.asarray(v, dtype=float).reshape(6)
        return cls(v[:3], v[3:], datum)


def _as_pose(pose):
    return pose if isinstance(pose, Pose) else Pose.from_array(pose)


def load_transform_matrix(pose, geom: HexapodGeometry, datum=(0.0, 0.0, 0.0)) -> np.ndarray:
    """6x6 map from axial leg forces (tension positive) to the wrench at ``datum``."""
    pose = _as_pose(pose)
    sol = inverse_kinematics(pose, geom, check=False)
    R = rotation_matrix(pose)
    origin = platform_origin(pose, geom)
    attach = origin + geom.platform_points @ R.T
    d = origin + R @ np.asarray(datum, dtype=float)
    TL = np.empty((6, 6))
    TL[:3] = sol.unit.T
    TL[3:] = np.cross(attach - d, sol.unit).T
    return TL


def actuator_forces(wrench: Wrench, pose, geom: HexapodGeometry) -> np.ndarray:
    """Axial leg forces (N, tension positive) balancing ``wrench``."""
    TL = load_transform_matrix(pose, geom, wrench.datum)
    if np.linalg.cond(TL) > COND_LIMIT:
        raise SingularPose("load transform matrix is singular at this pose")
    return np.linalg.solve(TL, wrench.as_vector())


def load_transform_series(poses, geom: HexapodGeometry, datum=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Vectorized :func:`load_transform_matrix` for ``(N, 6)`` poses, shape ``(N, 6, 6)``."""
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    R = rotation_matrices(poses[:, 3:])
    off = geom.p_cm_offset
    origin = np.array([0.0, 0.0, geom.home_height]) + off + poses[:, :3] - R @ off
    attach = origin[:, None, :] + np.einsum("nij,kj->nki", R, geom.platform_points)
    links = attach - geom.base_points
    unit = links / np.linalg.norm(links, axis=2, keepdims=True)
    d = origin + R @ np.asarray(datum, dtype=float)
    TL = np.empty((len(poses), 6, 6))
    TL[:, :3] = np.swapaxes(unit, 1, 2)
    TL[:, 3:] = np.swapaxes(np.cross(attach - d[:, None, :], unit), 1, 2)
    return TL


def actuator_force_series(wrenches, poses, geom: HexapodGeometry, datum=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Leg forces ``(N, 6)`` for ``(N, 6)`` wrench vectors about ``datum`` along ``poses``."""
    TL = load_transform_series(poses, geom, datum)
    if np.any(np.linalg.cond(TL) > COND_LIMIT):
        raise SingularPose("load transform matrix is singular along the trajectory")
    return np.linalg.solve(TL, np.asarray(wrenches, dtype=float)[..., None])[..., 0]


def translate_wrench(w: Wrench, new_datum, pose=HOME) -> Wrench:
    """The same load expressed about ``new_datum`` (platform frame)."""
    new_datum = np.asarray(new_datum, dtype=float).reshape(3)
    arm = rotation_matrix(_as_pose(pose)) @ (w.datum - new_datum)
    return Wrench(w.force, w.moment + np.cross(arm, w.force), new_datum)


@dataclass(frozen=True)
class Payload:
    """Rigid payload: mass (kg), inertia about its CG in platform axes (kg m^2), CG in the platform frame."""

    mass: float
    inertia: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    cg: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        I = np.asarray(self.inertia, dtype=float)
        object.__setattr__(self, "inertia", np.diag(I) if I.ndim == 1 else I.reshape(3, 3))
        object.__setattr__(self, "cg", np.array(self.cg, dtype=float).reshape(3))
        object.__setattr__(self, "mass", float(self.mass))


def cylinder_payload(mass=16.67, diameter=0.2159, length=0.6096, cg=(0.0, 0.0, -0.375)) -> Payload:
    """Solid-cylinder estimate of the vertical test cylinder, CG below the platform origin."""
    r2 = (diameter / 2) ** 2
    ixx = mass * (3 * r2 + length ** 2) / 12
    return Payload(mass, [ixx, ixx, mass * r2 / 2], cg)


def _vee(S):
    return np.stack([S[..., 2, 1] - S[..., 1, 2], S[..., 0, 2] - S[..., 2, 0], S[..., 1, 0] - S[..., 0, 1]], axis=-1) / 2


def payload_wrenches(t, poses, payload: Payload, geom: HexapodGeometry) -> np.ndarray:
    """Inertia plus gravity load of ``payload`` on the platform at each sample, about its CG.

    Returns ``(N, 6)`` base-frame wrenches. Rates come from central differences.
    """
    t = np.asarray(t, dtype=float)
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    R = rotation_matrices(poses[:, 3:])
    d = geom.p_cm_offset
    origin = np.array([0.0, 0.0, geom.home_height]) + d + poses[:, :3] - R @ d
    c = origin + R @ payload.cg
    if len(t) > 2:
        acc = np.gradient(np.gradient(c, t, axis=0), t, axis=0)
        w = _vee(np.gradient(R, t, axis=0) @ np.transpose(R, (0, 2, 1)))
        wdot = np.gradient(w, t, axis=0)
    else:
        acc = np.zeros_like(c)
        w = wdot = np.zeros_like(c)
    Iw = R @ payload.inertia @ np.transpose(R, (0, 2, 1))
    force = payload.mass * (GRAVITY - acc)
    moment = -(np.einsum("nij,nj->ni", Iw, wdot) + np.cross(w, np.einsum("nij,nj->ni", Iw, w)))
    return np.hstack([force, moment])


def _trajectory_arrays(trajectory):
    if hasattr(trajectory, "poses"):
        return np.asarray(trajectory.t, dtype=float), np.asarray(trajectory.poses, dtype=float)
    t, poses = trajectory
    return np.asarray(t, dtype=float), np.atleast_2d(np.asarray(poses, dtype=float))


def check_limits(trajectory, payload: Payload, geom: HexapodGeometry, extra_wrench=None):
    """Worst-case force, speed and acceleration per actuator along a trajectory.

    ``trajectory`` is ``(t, poses)`` or any object with ``t`` and ``poses``.
    ``extra_wrench`` optionally adds ``(N, 6)`` external loads about the payload CG.
    Returns a dict (JSON-serializable) with per-actuator peaks and a list of
    violations; ``report["ok"]`` is true when nothing exceeds the ratings.
    """
    t, poses = _trajectory_arrays(trajectory)
    L = leg_lengths(poses, geom)
    if len(t) > 2:
        speed = np.gradient(L, t, axis=0)
        accel = np.gradient(speed, t, axis=0)
    else:
        speed = accel = np.zeros_like(L)
    loads = payload_wrenches(t, poses, payload, geom)
    if extra_wrench is not None:
        loads = loads + np.asarray(extra_wrench, dtype=float)
    forces = actuator_force_series(loads, poses, geom, payload.cg)

    violations = []
    for name, arr, limit in (("force", forces, geom.thrust_limit), ("speed", speed, geom.speed_limit),
                             ("acceleration", accel, geom.accel_limit)):
        peak = np.max(np.abs(arr), axis=0)
        for leg in np.flatnonzero(peak > limit):
            k = int(np.argmax(np.abs(arr[:, leg])))
            violations.append(dict(kind=name, leg=int(leg) + 1, value=float(peak[leg]), limit=limit, time=float(t[k])))
    report = dict(
        ok=not violations,
        limits=dict(force=geom.thrust_limit, speed=geom.speed_limit, acceleration=geom.accel_limit),
        actuators=[dict(leg=i + 1, max_force=float(np.max(np.abs(forces[:, i]))),
                        max_speed=float(np.max(np.abs(speed[:, i]))),
                        max_acceleration=float(np.max(np.abs(accel[:, i]))))
                   for i in range(6)],
        violations=violations,
    )
    return report


def report_json(report, path=None):
    text = json.dumps(report, indent=2)
    if path is not None:
        with open(path, "w") as f:
            f.write(text)
    return text
