"""U-joint axes, joint angles and yoke clearance lookup.

Each leg has a base U-joint (AB) and a platform U-joint (CD). A joint's first
revolute axis ``u`` is fixed to its body; its neutral axis ``n`` is the leg
direction at the home pose when ``geom.joint_mount == 1`` and the plate normal
when it is 0 (yokes bolted flat to the plates). For a leg direction ``l`` (pointing away from the
joint) the two joint angles satisfy::

    l = Rot(u, alpha) @ Rot(w, beta) @ n,    w = n x u

so that ``beta = asin(l . u)`` and ``alpha = atan2(-l . w, l . n)``. The second
axis is ``v = normalize(l x u)`` and ``c = u x v``.

Yokes are modeled as capsules: two prongs holding the ends of the cross arm and
a bridge joining them. Clearance is the minimum surface distance between the
fixed yoke and the moving yoke of one joint.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
import struct
from dataclasses import dataclass, asdict

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import AngleOutOfTable, GimbalDegenerate
from .kinematics import HOME, HexapodGeometry, Pose, inverse_kinematics, rotation_matrix, rotation_matrices

DEFAULT_THRESHOLD_MM = 2.0


@dataclass(frozen=True)
class JointAxes:
    u: np.ndarray
    v: np.ndarray
    c: np.ndarray
    l: np.ndarray
    alpha: float
    beta: float
    frame: str  # "base" for AB joints, "platform" for CD joints


def _fixed_axes(geom: HexapodGeometry):
    """Neutral and first-axis unit vectors for base (AB) and platform (CD) joints.

    A base joint's first axis sits ``yoke_base_angle`` off the edge joining it
    to its nearest neighbor, turned away from that neighbor, so paired joints
    mirror each other. Platform first axes are the local tangent turned by
    ``platform_yoke_angle``.
    """
    home = inverse_kinematics(HOME, geom, check=False)
    out = {}
    for name, pts, sign in (("base", geom.base_points, 1.0), ("platform", geom.platform_points, -1.0)):
        n = sign * ((1 - geom.joint_mount) * np.array([0.0, 0.0, 1.0]) + geom.joint_mount * home.unit)
        n /= np.linalg.norm(n, axis=1)[:, None]
        if name == "base":
            dist = np.linalg.norm(pts[:, None, :2] - pts[None, :, :2], axis=2)
            np.fill_diagonal(dist, np.inf)
            edge = pts[np.argmin(dist, axis=1), :2] - pts[:, :2]
            ang = np.arctan2(edge[:, 1], edge[:, 0]) + geom.yoke_base_angle * np.where(np.arange(6) % 2 == 0, 1.0, -1.0)
        else:
            ang = np.arctan2(pts[:, 1], pts[:, 0]) + np.pi / 2 + geom.platform_yoke_angle
        t = np.column_stack([np.cos(ang), np.sin(ang), np.zeros(6)])
        u = t - np.sum(t * n, axis=1)[:, None] * n
        u /= np.linalg.norm(u, axis=1)[:, None]
        out[name] = (n, u, np.cross(n, u))
    return out


def _decompose(l, n, u, w, frame):
    vu = np.cross(u, l)
    if np.linalg.norm(vu) < 1e-9:
        raise GimbalDegenerate(f"leg direction parallel to the first {frame} joint axis")
    beta = math.asin(max(-1.0, min(1.0, float(l @ u))))
    alpha = math.atan2(-float(l @ w), float(l @ n))
    v = np.cross(l, u)
    v /= np.linalg.norm(v)
    c = np.cross(u, v)
    return JointAxes(u=u, v=v, c=c, l=l, alpha=alpha, beta=beta, frame=frame)


def joint_axes(pose, geom: HexapodGeometry, leg: int):
    """Axes and angles of both U-joints of ``leg`` (1..6).

    Returns ``(ab, cd)``; AB vectors are in the base frame, CD vectors in the
    platform frame.
    """
    if not 1 <= leg <= 6:
        raise ValueError("leg must be in 1..6")
    i = leg - 1
    pose = pose if isinstance(pose, Pose) else Pose.from_array(pose)
    sol = inverse_kinematics(pose, geom, check=False)
    R = rotation_matrix(pose)
    axes = _fixed_axes(geom)
    n, u, w = (a[i] for a in axes["base"])
    ab = _decompose(sol.unit[i], n, u, w, "base")
    n, u, w = (a[i] for a in axes["platform"])
    cd = _decompose(-R.T @ sol.unit[i], n, u, w, "platform")
    return ab, cd


def joint_angles(pose, geom: HexapodGeometry, _axes=None) -> np.ndarray:
    """Joint angles, radians, shape ``(6, 2, 2)``: leg x (AB, CD) x (alpha, beta)."""
    pose = pose if isinstance(pose, Pose) else Pose.from_array(pose)
    sol = inverse_kinematics(pose, geom, check=False)
    R = rotation_matrix(pose)
    axes = _axes or _fixed_axes(geom)
    out = np.empty((6, 2, 2))
    for j, (name, l) in enumerate((("base", sol.unit), ("platform", -sol.unit @ R))):
        n, u, w = axes[name]
        if np.any(np.linalg.norm(np.cross(u, l), axis=1) < 1e-9):
            raise GimbalDegenerate(f"leg direction parallel to a {name} joint axis")
        out[:, j, 1] = np.arcsin(np.clip(np.sum(l * u, axis=1), -1, 1))
        out[:, j, 0] = np.arctan2(-np.sum(l * w, axis=1), np.sum(l * n, axis=1))
    return out


def joint_angles_series(poses, geom: HexapodGeometry, _axes=None) -> np.ndarray:
    """Vectorized :func:`joint_angles` for ``(N, 6)`` poses, shape ``(N, 6, 2, 2)``."""
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    R = rotation_matrices(poses[:, 3:])
    d = geom.p_cm_offset
    origin = np.array([0.0, 0.0, geom.home_height]) + d + poses[:, :3] - R @ d
    links = origin[:, None, :] + np.einsum("nij,kj->nki", R, geom.platform_points) - geom.base_points
    unit = links / np.linalg.norm(links, axis=2, keepdims=True)
    axes = _axes or _fixed_axes(geom)
    out = np.empty((len(poses), 6, 2, 2))
    for j, (name, l) in enumerate((("base", unit), ("platform", -np.einsum("nki,nij->nkj", unit, R)))):
        n, u, w = axes[name]
        if np.any(np.linalg.norm(np.cross(u, l), axis=2) < 1e-9):
            raise GimbalDegenerate(f"leg direction parallel to a {name} joint axis")
        out[..., j, 1] = np.arcsin(np.clip(np.sum(l * u, axis=2), -1, 1))
        out[..., j, 0] = np.arctan2(-np.sum(l * w, axis=2), np.sum(l * n, axis=2))
    return out


# -- yoke capsule model ------------------------------------------------------

@dataclass(frozen=True)
class YokeModel:
    """Capsule yoke dimensions in millimeters.

    ``half_width``: distance from the cross center to each prong axis;
    ``depth``: prong length from the cross plane to the bridge;
    ``radius``: capsule radius of prongs and bridge.
    """

    half_width: float = 22.303
    depth: float = 24.33
    radius: float = 4.851

    def __post_init__(self):
        if min(self.half_width, self.depth, self.radius) <= 0:
            raise ValueError("yoke dimensions must be positive")


def _rot_x(a):
    c, s = np.cos(a), np.sin(a)
    R = np.zeros(np.shape(a) + (3, 3))
    R[..., 0, 0] = 1
    R[..., 1, 1] = c
    R[..., 1, 2] = -s
    R[..., 2, 1] = s
    R[..., 2, 2] = c
    return R


def _rot_y(a):
    c, s = np.cos(a), np.sin(a)
    R = np.zeros(np.shape(a) + (3, 3))
    R[..., 1, 1] = 1
    R[..., 0, 0] = c
    R[..., 0, 2] = s
    R[..., 2, 0] = -s
    R[..., 2, 2] = c
    return R


def yoke_segments(yoke: YokeModel):
    """Capsule axis segments ``(fixed, moving)`` in the joint's home frame.

    Frame: x = first axis u, y = w, z = neutral axis n. Each entry is a list of
    ``(start, end)`` pairs.
    """
    a, h = yoke.half_width, yoke.depth
    e1, e2, e3 = np.eye(3)
    fixed = [(a * e1, a * e1 - h * e3), (-a * e1, -a * e1 - h * e3), (-a * e1 - h * e3, a * e1 - h * e3)]
    moving = [(a * e2, a * e2 + h * e3), (-a * e2, -a * e2 + h * e3), (-a * e2 + h * e3, a * e2 + h * e3)]
    return fixed, moving


def segment_distance(p1, q1, p2, q2):
    """Minimum distance between segments ``p1q1`` and ``p2q2`` (broadcasting over leading axes)."""
    p1, q1, p2, q2 = (np.asarray(x, dtype=float) for x in (p1, q1, p2, q2))
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.sum(d1 * d1, -1)
    e = np.sum(d2 * d2, -1)
    f = np.sum(d2 * r, -1)
    b = np.sum(d1 * d2, -1)
    c = np.sum(d1 * r, -1)
    denom = a * e - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 1e-12 * a * e, np.clip((b * f - c * e) / denom, 0, 1), 0.0)
        t = (b * s + f) / e
        s = np.where(t < 0, np.clip(-c / a, 0, 1), np.where(t > 1, np.clip((b - c) / a, 0, 1), s))
    t = np.clip(t, 0, 1)
    diff = (p1 + d1 * s[..., None]) - (p2 + d2 * t[..., None])
    return np.linalg.norm(diff, axis=-1)


def yoke_clearance(alpha, beta, yoke: YokeModel):
    """Yoke-to-yoke surface distance, mm, for joint angles in radians (broadcasts)."""
    alpha, beta = np.broadcast_arrays(np.asarray(alpha, float), np.asarray(beta, float))
    Q = _rot_x(alpha) @ _rot_y(beta)
    fixed, moving = yoke_segments(yoke)
    best = np.full(alpha.shape, np.inf)
    for p1, q1 in fixed:
        for p2, q2 in moving:
            dist = segment_distance(p1, q1, Q @ p2, Q @ q2)
            best = np.minimum(best, dist)
    return np.maximum(best - 2 * yoke.radius, 0.0)


@dataclass(eq=False)
class ClearanceTable:
    """Yoke clearance (mm) on a square grid of joint angles (degrees)."""

    angles: np.ndarray  # 1-D grid, degrees, shared by both axes
    min_distance: np.ndarray  # (n, n): [alpha index, beta index]
    yoke: YokeModel

    def __post_init__(self):
        self._interp = RegularGridInterpolator((self.angles, self.angles), self.min_distance,
                                               method="linear", bounds_error=True)

    @property
    def step(self):
        return float(self.angles[1] - self.angles[0])

    @property
    def max_angle(self):
        return float(self.angles[-1])

    def lookup(self, alpha_deg, beta_deg):
        """Bilinear interpolation at absolute joint angles in degrees."""
        a = np.abs(np.asarray(alpha_deg, float))
        b = np.abs(np.asarray(beta_deg, float))
        if np.any(a > self.max_angle) or np.any(b > self.max_angle):
            raise AngleOutOfTable(f"joint angle beyond {self.max_angle} deg")
        pts = np.stack(np.broadcast_arrays(a, b), axis=-1)
        return self._interp(pts)

    def header(self):
        return {
            "format": "hexid-clearance-table",
            "version": 1,
            "grid": {"start": float(self.angles[0]), "step": self.step, "count": len(self.angles)},
            "yoke": asdict(self.yoke),
            "dtype": "<f8",
            "sha256": hashlib.sha256(self.min_distance.astype("<f8").tobytes()).hexdigest(),
        }

    def save(self, path):
        blob = self.min_distance.astype("<f8").tobytes()
        head = json.dumps(self.header(), sort_keys=True).encode()
        tmp = f"{path}.tmp"
        with open(tmp, "wb") as f:
            f.write(b"HXCT")
            f.write(struct.pack("<I", len(head)))
            f.write(head)
            f.write(blob)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            data = f.read()
        if data[:4] != b"HXCT":
            raise ValueError(f"{path}: not a clearance table file")
        (hlen,) = struct.unpack("<I", data[4:8])
        head = json.loads(data[8:8 + hlen])
        blob = data[8 + hlen:]
        if hashlib.sha256(blob).hexdigest() != head["sha256"]:
            raise ValueError(f"{path}: checksum mismatch")
        g = head["grid"]
        angles = np.round(g["start"] + g["step"] * np.arange(g["count"]), 10)
        dist = np.frombuffer(blob, dtype="<f8").reshape(g["count"], g["count"]).copy()
        return cls(angles, dist, YokeModel(**head["yoke"]))


def build_clearance_table(yoke: YokeModel = YokeModel(), step=0.1, max_angle=90.0) -> ClearanceTable:
    """Evaluate the yoke clearance on a ``[0, max_angle]^2`` grid (degrees)."""
    n = int(round(max_angle / step)) + 1
    angles = np.round(np.arange(n) * step, 10)
    A, B = np.meshgrid(np.radians(angles), np.radians(angles), indexing="ij")
    dist = np.empty_like(A)
    for i in range(0, n, 64):  # bounded memory
        dist[i:i + 64] = yoke_clearance(A[i:i + 64], B[i:i + 64], yoke)
    return ClearanceTable(angles, dist, yoke)


def load_or_build(path, yoke: YokeModel = YokeModel(), step=0.1, max_angle=90.0) -> ClearanceTable:
    """Load a cached table, rebuilding it when missing, corrupt or built for other parameters."""
    try:
        table = ClearanceTable.load(path)
        if (table.yoke == yoke and abs(table.step - step) < 1e-12
                and abs(table.max_angle - max_angle) < 1e-9):
            return table
    except (OSError, ValueError, KeyError):
        pass
    table = build_clearance_table(yoke, step, max_angle)
    table.save(path)
    return table


_DEFAULT_TABLES: dict = {}


def default_table(step=0.5) -> ClearanceTable:
    """Memoized table for the default yoke model (kept in memory only)."""
    if step not in _DEFAULT_TABLES:
        _DEFAULT_TABLES[step] = build_clearance_table(YokeModel(), step)
    return _DEFAULT_TABLES[step]


def clearance_from_angles(angles, table: ClearanceTable) -> np.ndarray:
    """Per-leg minimum clearance (mm) from a ``(6, 2, 2)`` joint-angle array."""
    deg = np.degrees(np.asarray(angles))
    vals = table.lookup(deg[..., 0], deg[..., 1])
    return vals.min(axis=1)


def clearance_at(pose, geom: HexapodGeometry, table: ClearanceTable) -> np.ndarray:
    """Per-leg minimum yoke clearance in mm at ``pose``."""
    return clearance_from_angles(joint_angles(pose, geom), table)


@dataclass
class CollisionCheck:
    ok: bool
    index: int | None = None
    leg: int | None = None
    clearance: float | None = None

    def __bool__(self):
        return self.ok


def assert_no_collision(poses, geom: HexapodGeometry, table: ClearanceTable,
                        threshold=DEFAULT_THRESHOLD_MM) -> CollisionCheck:
    """Scan a trajectory and report the first sample whose clearance is below ``threshold``.

    ``poses`` is an ``(N, 6)`` array or an object with a ``poses`` attribute.
    Samples whose joint angles leave the table count as violations with zero
    clearance.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    poses = np.atleast_2d(getattr(poses, "poses", poses))
    axes = _fixed_axes(geom)
    for start in range(0, len(poses), 4096):
        chunk = poses[start:start + 4096]
        try:
            deg = np.degrees(joint_angles_series(chunk, geom, axes))
        except GimbalDegenerate:
            deg = None
        if deg is None or np.max(np.abs(deg)) > table.max_angle:
            # locate the first offending sample exactly
            for k, v in enumerate(chunk):
                try:
                    c = clearance_from_angles(joint_angles(v, geom, axes), table)
                except (AngleOutOfTable, GimbalDegenerate):
                    return CollisionCheck(False, start + k, None, 0.0)
                leg = int(np.argmin(c))
                if c[leg] < threshold:
                    return CollisionCheck(False, start + k, leg + 1, float(c[leg]))
            continue
        c = table.lookup(deg[..., 0], deg[..., 1]).min(axis=2)  # (n, 6)
        bad = np.flatnonzero(c.min(axis=1) < threshold)
        if len(bad):
            k = int(bad[0])
            leg = int(np.argmin(c[k]))
            return CollisionCheck(False, start + k, leg + 1, float(c[k, leg]))
    return CollisionCheck(True)


def contour_csv(table: ClearanceTable, path, stride=1):
    """Write ``alpha_deg,beta_deg,clearance_mm`` rows for plotting."""
    a = table.angles[::stride]
    d = table.min_distance[::stride, ::stride]
    A, B = np.meshgrid(a, a, indexing="ij")
    buf = io.StringIO()
    buf.write("alpha_deg,beta_deg,clearance_mm\n")
    np.savetxt(buf, np.column_stack([A.ravel(), B.ravel(), d.ravel()]), fmt="%.4f", delimiter=",")
    with open(path, "w") as f:
        f.write(buf.getvalue())
