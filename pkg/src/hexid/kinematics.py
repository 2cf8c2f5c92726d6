"""Pose <-> leg-length kinematics for a six-leg (CSSP) hexapod.

Poses are ``[x, y, z, theta, phi, psi]``: translations in meters relative to
the home position of the motion datum, and roll/pitch/yaw in radians applied
in the order roll -> pitch -> yaw, i.e. ``R = Rz(psi) @ Ry(phi) @ Rx(theta)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import NamedTuple

import numpy as np

from .errors import NoConvergence, OutOfStroke

DOF_NAMES = ("x", "y", "z", "theta", "phi", "psi")
AXIS_LABELS = ("X", "Y", "Z", "Rx", "Ry", "Rz")


def wrap_angle(a):
    """Wrap angles into (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return w if w.ndim else float(w)


@dataclass(frozen=True)
class Pose:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    theta: float = 0.0
    phi: float = 0.0
    psi: float = 0.0

    def __post_init__(self):
        for name in ("theta", "phi", "psi"):
            object.__setattr__(self, name, wrap_angle(float(getattr(self, name))))
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @classmethod
    def from_array(cls, v):
        v = np.asarray(v, dtype=float).reshape(6)
        return cls(*v)

    def as_array(self):
        return np.array([self.x, self.y, self.z, self.theta, self.phi, self.psi])

    @property
    def translation(self):
        return np.array([self.x, self.y, self.z])


HOME = Pose()


def rotation_matrix(pose) -> np.ndarray:
    """Rotation taking platform-frame vectors to the base frame."""
    if isinstance(pose, Pose):
        th, ph, ps = pose.theta, pose.phi, pose.psi
    else:
        th, ph, ps = np.asarray(pose, dtype=float)[-3:]
    ct, st = math.cos(th), math.sin(th)
    cp, sp = math.cos(ph), math.sin(ph)
    cs, ss = math.cos(ps), math.sin(ps)
    return np.array([
        [cs * cp, cs * st * sp - ss * ct, ct * cs * sp + ss * st],
        [ss * cp, ss * st * sp + cs * ct, ss * sp * ct - cs * st],
        [-sp, cp * st, ct * cp],
    ])


def rotation_matrices(angles) -> np.ndarray:
    """Vectorized :func:`rotation_matrix` for an ``(N, 3)`` array of (theta, phi, psi)."""
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    th, ph, ps = angles[:, 0], angles[:, 1], angles[:, 2]
    ct, st = np.cos(th), np.sin(th)
    cp, sp = np.cos(ph), np.sin(ph)
    cs, ss = np.cos(ps), np.sin(ps)
    R = np.empty((len(angles), 3, 3))
    R[:, 0, 0] = cs * cp
    R[:, 0, 1] = cs * st * sp - ss * ct
    R[:, 0, 2] = ct * cs * sp + ss * st
    R[:, 1, 0] = ss * cp
    R[:, 1, 1] = ss * st * sp + cs * ct
    R[:, 1, 2] = ss * sp * ct - cs * st
    R[:, 2, 0] = -sp
    R[:, 2, 1] = cp * st
    R[:, 2, 2] = ct * cp
    return R


def euler_from_matrix(R):
    """Inverse of :func:`rotation_matrix` (away from phi = +-pi/2)."""
    R = np.asarray(R, dtype=float)
    phi = -math.asin(max(-1.0, min(1.0, R[2, 0])))
    theta = math.atan2(R[2, 1], R[2, 2])
    psi = math.atan2(R[1, 0], R[0, 0])
    return theta, phi, psi


@dataclass(frozen=True, eq=False)
class HexapodGeometry:
    """Attachment points, limits and offsets of a hexapod.

    ``base_points`` already have the U-joint yoke-axis height removed, so the
    base joint centers sit in the plane z = 0. ``home_height`` is the height of
    the platform origin above the base origin at the home pose.
    ``joint_mount`` tilts the U-joint neutral axes from the plate normals (0)
    to the home leg directions (1).

    ``l_min``/``l_max`` bound the mechanical stroke. ``stroke_margin`` is kept
    free at both ends, so the usable travel is ``[travel_min, travel_max]``;
    that is what the kinematic checks enforce.
    """

    platform_points: np.ndarray
    base_points: np.ndarray
    home_height: float
    l_min: float
    l_max: float
    p_cm_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yoke_base_angle: float = math.radians(20.0)
    platform_yoke_angle: float = 0.0
    joint_mount: float = 0.0
    stroke_margin: float = 0.0
    thrust_limit: float = 2200.0
    speed_limit: float = 0.82
    accel_limit: float = 8.9

    def __post_init__(self):
        p = np.array(self.platform_points, dtype=float).reshape(6, 3)
        b = np.array(self.base_points, dtype=float).reshape(6, 3)
        if np.any(np.linalg.norm(p, axis=1) <= 0) or np.any(np.linalg.norm(b, axis=1) <= 0):
            raise ValueError("attachment points must be away from the frame origins")
        if not self.l_max > self.l_min:
            raise ValueError("l_max must exceed l_min")
        object.__setattr__(self, "platform_points", p)
        object.__setattr__(self, "base_points", b)
        object.__setattr__(self, "p_cm_offset", np.array(self.p_cm_offset, dtype=float).reshape(3))
        if not 0.0 <= self.joint_mount <= 1.0:
            raise ValueError("joint_mount must lie in [0, 1]")
        if not 0.0 <= 2 * self.stroke_margin < self.l_max - self.l_min:
            raise ValueError("stroke_margin must leave positive travel")
        for name in ("home_height", "l_min", "l_max", "yoke_base_angle", "platform_yoke_angle", "joint_mount", "stroke_margin",
                     "thrust_limit", "speed_limit", "accel_limit"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def stroke(self):
        return self.l_max - self.l_min

    @property
    def travel_min(self):
        return self.l_min + self.stroke_margin

    @property
    def travel_max(self):
        return self.l_max - self.stroke_margin

    def with_offset(self, offset):
        """Copy of this geometry with motions prescribed about ``offset`` (platform frame)."""
        d = self.to_dict()
        d["p_cm_offset"] = list(np.asarray(offset, dtype=float))
        return HexapodGeometry.from_dict(d)

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return HexapodGeometry.from_dict(d)

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, allow_nan=True)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def cssp_geometry(platform_radius=0.4, base_radius=0.8, home_height=0.6,
                  l_min=None, stroke=0.475, pair_spacing=20.0, platform_pair_spacing=None, **kw):
    """Build a CSSP geometry with attachment points alternating 100/20 degrees apart.

    Base joints are grouped in pairs centered on 0, 120 and 240 degrees; platform
    joints in pairs centered on 60, 180 and 300 degrees. Each leg joins a base
    point to the neighboring platform point of the adjacent pair.  When
    ``l_min`` is None the home pose sits at mid-stroke.
    ``platform_pair_spacing`` defaults to ``pair_spacing``.
    """
    half = pair_spacing / 2.0
    phalf = half if platform_pair_spacing is None else platform_pair_spacing / 2.0
    base_deg = []
    plat_deg = []
    for c in (0.0, 120.0, 240.0):
        base_deg += [c - half, c + half]
        plat_deg += [c - 60.0 + phalf, c + 60.0 - phalf]
    base_deg = np.radians(base_deg)
    plat_deg = np.radians(plat_deg)
    b = np.column_stack([base_radius * np.cos(base_deg), base_radius * np.sin(base_deg), np.zeros(6)])
    p = np.column_stack([platform_radius * np.cos(plat_deg), platform_radius * np.sin(plat_deg), np.zeros(6)])
    home_len = float(np.linalg.norm(p[0] + [0, 0, home_height] - b[0]))
    if l_min is None:
        l_min = home_len - stroke / 2
    return HexapodGeometry(platform_points=p, base_points=b, home_height=home_height,
                           l_min=l_min, l_max=l_min + stroke, **kw)


def default_geometry(**kw):
    """Desk model of the 0.8 m platform / 1.6 m base, 475 mm stroke hexapod.

    Attachment radii, home height, joint yoke orientation and the usable travel
    are reconstructed values (not published) picked so the range-of-motion sweep
    lands near the measured ranges. ``heave_floor`` places the bottom of the
    usable travel: the retracted length is chosen so a pure heave to that depth
    reaches it.
    """
    params = dict(DEFAULT_CSSP)
    params.update(kw)
    floor = params.pop("heave_floor", None)
    if floor is not None and params.get("l_min") is None:
        probe = cssp_geometry(**{**params, "l_min": 0.01, "stroke_margin": 0.0})
        params["l_min"] = float(leg_lengths([0, 0, floor, 0, 0, 0], probe)[0, 0]) - params.get("stroke_margin", 0.0)
    return cssp_geometry(**params)


DEFAULT_CSSP = dict(platform_radius=0.376, base_radius=0.681, home_height=0.765,
                    l_min=None, stroke=0.475, pair_spacing=20.0, platform_pair_spacing=9.734,
                    platform_yoke_angle=math.radians(-75.673), yoke_base_angle=math.radians(20.0),
                    stroke_margin=0.0235, heave_floor=-0.268)


class IKSolution(NamedTuple):
    lengths: np.ndarray  # (6,)
    links: np.ndarray  # (6, 3) base-frame link vectors, base joint -> platform joint
    unit: np.ndarray  # (6, 3)
    out_of_stroke: np.ndarray  # (6,) bool


def platform_origin(pose, geom):
    """Base-frame position of the platform origin for ``pose`` (p_CM)."""
    pose = pose if isinstance(pose, Pose) else Pose.from_array(pose)
    R = rotation_matrix(pose)
    d = geom.p_cm_offset
    return np.array([0.0, 0.0, geom.home_height]) + d + pose.translation - R @ d


def inverse_kinematics(pose, geom: HexapodGeometry, check=True) -> IKSolution:
    """Leg lengths and link vectors for ``pose``.

    Raises :class:`OutOfStroke` when ``check`` is true and any length falls
    outside the usable travel ``[travel_min, travel_max]``; with ``check=False`` the offending legs are only
    flagged in the result.
    """
    pose = pose if isinstance(pose, Pose) else Pose.from_array(pose)
    R = rotation_matrix(pose)
    links = platform_origin(pose, geom) + geom.platform_points @ R.T - geom.base_points
    lengths = np.linalg.norm(links, axis=1)
    bad = (lengths < geom.travel_min) | (lengths > geom.travel_max) | ~(lengths > 0)
    if check and bad.any():
        raise OutOfStroke(np.flatnonzero(bad), lengths)
    return IKSolution(lengths, links, links / lengths[:, None], bad)


def leg_lengths(poses, geom: HexapodGeometry) -> np.ndarray:
    """Vectorized leg lengths for an ``(N, 6)`` pose array; no limit checks."""
    if isinstance(poses, Pose):
        poses = poses.as_array()
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    R = rotation_matrices(poses[:, 3:])
    d = geom.p_cm_offset
    origin = np.array([0.0, 0.0, geom.home_height]) + d + poses[:, :3] - R @ d
    pts = origin[:, None, :] + np.einsum("nij,kj->nki", R, geom.platform_points)
    return np.linalg.norm(pts - geom.base_points[None], axis=2)


def forward_kinematics(lengths, geom: HexapodGeometry, guess=HOME, tol=1e-10,
                       max_iter=100, damping=1e-8, step=1e-6) -> Pose:
    """Pose whose leg lengths match ``lengths``, by damped Newton iteration.

    The 6x6 Jacobian is formed by central differences. Raises
    :class:`NoConvergence` if the infinity-norm residual does not drop below
    ``tol`` within ``max_iter`` iterations.
    """
    target = np.asarray(lengths, dtype=float).reshape(6)
    q = (guess if isinstance(guess, Pose) else Pose.from_array(guess)).as_array()

    def resid(v):
        return leg_lengths(v, geom)[0] - target

    r = resid(q)
    for _ in range(max_iter):
        if np.max(np.abs(r)) < tol:
            return Pose.from_array(q)
        eye = np.eye(6) * step
        J = (leg_lengths(q + eye, geom) - leg_lengths(q - eye, geom)).T / (2 * step)
        dq = np.linalg.solve(J.T @ J + damping * np.eye(6), -J.T @ r)
        q = q + dq
        r = resid(q)
        if not np.all(np.isfinite(r)):
            break
    if np.all(np.isfinite(r)) and np.max(np.abs(r)) < tol:
        return Pose.from_array(q)
    raise NoConvergence(f"residual {np.max(np.abs(r)):.3e} m after {max_iter} iterations")


@dataclass
class RangeResult:
    dof: int
    min: float
    max: float
    min_bound: str
    max_bound: str

    @property
    def name(self):
        return AXIS_LABELS[self.dof]


def _limit_at(v, geom, table, threshold, joint_limit):
    """Return the name of the first active constraint for pose ``v`` (or None)."""
    sol = inverse_kinematics(v, geom, check=False)
    if sol.out_of_stroke.any():
        return "actuator"
    if table is None and joint_limit is None:
        return None
    from . import joints
    try:
        angles = joints.joint_angles(v, geom)
    except Exception:
        return "joint"
    if joint_limit is not None and np.max(np.abs(angles)) > joint_limit:
        return "joint"
    if table is not None:
        if np.max(np.abs(angles)) > math.radians(table.max_angle):
            return "joint"
        if np.min(joints.clearance_from_angles(angles, table)) < threshold:
            return "joint"
    return None


def sweep_range_of_motion(geom: HexapodGeometry, dof: int, step=None, table=None,
                          threshold=2.0, joint_limit=None, cap=None) -> RangeResult:
    """March a single DOF away from home in both directions until a limit binds.

    Bounds are tagged ``"actuator"`` (stroke), ``"joint"`` (U-joint clearance or
    angle) or ``"cap"`` when the configured hard cap is reached first. The
    returned extremes are the last feasible samples.
    """
    rotational = dof >= 3
    if step is None:
        step = math.radians(0.1) if rotational else 1e-3
    if step <= 0:
        raise ValueError("step must be positive")
    if cap is None:
        cap = math.radians(179.0) if rotational else 2.0
    out = {}
    for sign in (1, -1):
        last, bound = 0.0, "cap"
        n = int(math.floor(cap / step + 1e-9))
        for i in range(1, n + 1):
            v = np.zeros(6)
            v[dof] = sign * i * step
            lim = _limit_at(v, geom, table, threshold, joint_limit)
            if lim is not None:
                bound = lim
                break
            last = sign * i * step
        out[sign] = (last, bound)
    return RangeResult(dof, out[-1][0], out[1][0], out[-1][1], out[1][1])
