"""Eye-to-hand calibration (AX = XB) with dual quaternions, and camera-to-platform pose composition.

Frame notation: ``T_{X/Y}`` maps coordinates in frame Y into frame X, so the
chain ``T_{P/B} = T_{P/Ch} T_{Ch/Cam} T_{Cam/B}`` composes left to right.
Under this notation the platform pose in the base frame (platform coordinates
to base coordinates) is ``T_{B/P} = T_{P/B}^-1``.

Data per time step: ``P_i`` the platform pose in the base (``T_{B/P}``) and
``O_i`` the board pose in the camera (``T_{Cam/Ch}``). Then
``P_i = X O_i Z^-1`` with the fixed unknowns ``X = T_{B/Cam}`` and
``Z = T_{P/Ch}``; relative motions ``A = P_i P_j^-1`` and ``B = O_i O_j^-1``
satisfy ``A X = X B``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DegenerateMotionSet, IllConditioned
from .kinematics import Pose, euler_from_matrix, rotation_matrix


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-10 or np.linalg.det(R) < 0:
            raise ValueError("rotation must be proper orthonormal")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_pose(cls, pose):
        pose = pose if isinstance(pose, Pose) else Pose.from_array(pose)
        return cls(rotation_matrix(pose), pose.translation)

    @classmethod
    def random(cls, rng=None, scale=1.0):
        rng = np.random.default_rng(rng)
        return cls(Rotation.random(random_state=rng).as_matrix(), rng.normal(0, scale, 3))

    @property
    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def inverse(self):
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def __matmul__(self, other):
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def to_pose(self) -> Pose:
        return Pose(*self.translation, *euler_from_matrix(self.rotation))


def _close(R):
    """Nearest rotation matrix (guards round-off growth)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.linalg.det(U @ Vt)])
    return U @ D @ Vt


def rotation_error(R1, R2):
    """Angle (rad) of ``R1^T R2``."""
    return float(np.linalg.norm(Rotation.from_matrix(np.asarray(R1).T @ np.asarray(R2)).as_rotvec()))


def perturb(T: RigidTransform, rot_std, trans_std, rng) -> RigidTransform:
    """Right-multiply by a random small motion (isotropic rotation vector and translation noise)."""
    dR = Rotation.from_rotvec(rng.normal(0, rot_std, 3)).as_matrix()
    return RigidTransform(_close(T.rotation @ dR), T.translation + rng.normal(0, trans_std, 3))


@dataclass
class HandEyeDataset:
    platform_poses: list  # P_i = T_{B/P}
    board_poses: list  # O_i = T_{Cam/Ch}
    rot_noise: float = 0.0
    trans_noise: float = 0.0

    def __post_init__(self):
        if len(self.platform_poses) != len(self.board_poses):
            raise ValueError("pose lists differ in length")

    def pairs(self):
        """Relative motions ``(A_i, B_i)`` between consecutive samples."""
        P, O = self.platform_poses, self.board_poses
        A = [P[i] @ P[i - 1].inverse() for i in range(1, len(P))]
        B = [O[i] @ O[i - 1].inverse() for i in range(1, len(O))]
        return A, B

    def to_json(self):
        return json.dumps(dict(platform_poses=[T.matrix.tolist() for T in self.platform_poses],
                               board_poses=[T.matrix.tolist() for T in self.board_poses],
                               rot_noise=self.rot_noise, trans_noise=self.trans_noise))

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls([RigidTransform.from_matrix(m) for m in d["platform_poses"]],
                   [RigidTransform.from_matrix(m) for m in d["board_poses"]], d["rot_noise"], d["trans_noise"])


def check_motion_set(A, min_angle=1e-6, min_sine=1e-3):
    """Raise DegenerateMotionSet unless two rotation axes are non-parallel."""
    axes = []
    for T in A:
        rv = Rotation.from_matrix(T.rotation).as_rotvec()
        ang = np.linalg.norm(rv)
        if ang > min_angle:
            axes.append(rv / ang)
    for i in range(len(axes)):
        for j in range(i + 1, len(axes)):
            if np.linalg.norm(np.cross(axes[i], axes[j])) > min_sine:
                return
    raise DegenerateMotionSet("relative rotations lack two non-parallel axes")


def synthesize_tracking_data(true_X: RigidTransform, true_Z: RigidTransform, poses, rot_noise=0.0,
                             trans_noise=0.0, rng=None) -> HandEyeDataset:
    """Board-in-camera observations ``O_i = X^-1 P_i Z`` for commanded platform ``poses``.

    Noise (rad, m) perturbs the observations only.
    """
    rng = np.random.default_rng(rng)
    P = [p if isinstance(p, RigidTransform) else RigidTransform.from_pose(p) for p in poses]
    Xi = true_X.inverse()
    O = [Xi @ Pi @ true_Z for Pi in P]
    if rot_noise or trans_noise:
        O = [perturb(o, rot_noise, trans_noise, rng) for o in O]
    ds = HandEyeDataset(P, O, rot_noise, trans_noise)
    check_motion_set(ds.pairs()[0])
    return ds


def _quat(R):
    x, y, z, w = Rotation.from_matrix(R).as_quat()
    return np.array([w, x, y, z])


def _qmul(p, q):
    w1, v1 = p[0], p[1:]
    w2, v2 = q[0], q[1:]
    return np.concatenate([[w1 * w2 - v1 @ v2], w1 * v2 + w2 * v1 + np.cross(v1, v2)])


def _qconj(q):
    return np.concatenate([[q[0]], -q[1:]])


def dual_quaternion(T: RigidTransform):
    """Unit dual quaternion ``(real, dual)`` of a rigid motion, scalar part first."""
    qr = _quat(T.rotation)
    qd = 0.5 * _qmul(np.concatenate([[0.0], T.translation]), qr)
    return qr, qd


def _skew(v):
    return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])


def solve_hand_eye(A, B=None, ratio=10.0) -> RigidTransform:
    """Daniilidis dual-quaternion solution of ``A_i X = X B_i``.

    ``A`` may be a :class:`HandEyeDataset`. Raises :class:`IllConditioned`
    when the sixth singular value is not at least ``ratio`` times the seventh.
    """
    if isinstance(A, HandEyeDataset):
        A, B = A.pairs()
    check_motion_set(A)
    rows = []
    for Ta, Tb in zip(A, B):
        a, ad = dual_quaternion(Ta)
        b, bd = dual_quaternion(Tb)
        if a[0] * b[0] < 0:  # screw congruence: same sign of the scalar parts
            b, bd = -b, -bd
        S = np.zeros((6, 8))
        S[:3, 0] = a[1:] - b[1:]
        S[:3, 1:4] = _skew(a[1:] + b[1:])
        S[3:, 0] = ad[1:] - bd[1:]
        S[3:, 1:4] = _skew(ad[1:] + bd[1:])
        S[3:, 4] = a[1:] - b[1:]
        S[3:, 5:8] = _skew(a[1:] + b[1:])
        rows.append(S)
    T = np.vstack(rows)
    _, s, Vt = np.linalg.svd(T)
    if len(s) < 8:
        s = np.concatenate([s, np.zeros(8 - len(s))])
    if not s[5] > ratio * max(s[6], 1e-300) or s[5] < 1e-12:
        raise IllConditioned("null space of the hand-eye system is not two-dimensional")
    v7, v8 = Vt[6], Vt[7]
    u1, w1 = v7[:4], v7[4:]
    u2, w2 = v8[:4], v8[4:]
    qa = u1 @ w1
    qb = u1 @ w2 + u2 @ w1
    qc = u2 @ w2
    if abs(qa) > 1e-14:
        disc = max(qb * qb - 4 * qa * qc, 0.0)
        roots = [(-qb + np.sqrt(disc)) / (2 * qa), (-qb - np.sqrt(disc)) / (2 * qa)]
    else:
        roots = [-qc / qb] if abs(qb) > 1e-14 else [0.0]
    best = None
    for r in roots:
        val = r * r * (u1 @ u1) + 2 * r * (u1 @ u2) + u2 @ u2
        if best is None or val > best[0]:
            best = (val, r)
    val, r = best
    l2 = 1.0 / np.sqrt(val)
    l1 = r * l2
    q = l1 * v7 + l2 * v8
    qr, qd = q[:4], q[4:]
    n = np.linalg.norm(qr)
    qr, qd = qr / n, qd / n
    qd = qd - (qr @ qd) * qr  # enforce orthogonality of real and dual parts
    t = 2 * _qmul(qd, _qconj(qr))[1:]
    R = Rotation.from_quat([qr[1], qr[2], qr[3], qr[0]]).as_matrix()
    return RigidTransform(_close(R), t)


def mean_transform(transforms, iters=50, tol=1e-14) -> RigidTransform:
    """Log-mean (Karcher) rotation and arithmetic mean translation."""
    Rs = [T.rotation for T in transforms]
    Rm = Rs[0]
    for _ in range(iters):
        delta = np.mean([Rotation.from_matrix(Rm.T @ R).as_rotvec() for R in Rs], axis=0)
        Rm = _close(Rm @ Rotation.from_rotvec(delta).as_matrix())
        if np.linalg.norm(delta) < tol:
            break
    return RigidTransform(Rm, np.mean([T.translation for T in transforms], axis=0))


def estimate_board_offset(dataset: HandEyeDataset, X: RigidTransform) -> RigidTransform:
    """``Z = T_{P/Ch}`` averaged over ``Z_i = P_i^-1 X O_i``."""
    return mean_transform([P.inverse() @ X @ O for P, O in zip(dataset.platform_poses, dataset.board_poses)])


def calibrate(dataset: HandEyeDataset, ratio=10.0):
    """``(X, Z)``: camera pose in base ``T_{B/Cam}`` and board pose in platform ``T_{P/Ch}``."""
    X = solve_hand_eye(dataset, ratio=ratio)
    return X, estimate_board_offset(dataset, X)


def compose_chain(T_P_Ch: RigidTransform, T_Ch_Cam: RigidTransform, T_Cam_B: RigidTransform) -> RigidTransform:
    """``T_{P/B} = T_{P/Ch} T_{Ch/Cam} T_{Cam/B}``."""
    return T_P_Ch @ T_Ch_Cam @ T_Cam_B


def platform_pose_from_camera(board_in_camera: RigidTransform, X: RigidTransform, Z: RigidTransform) -> Pose:
    """Platform pose in the base frame from one board observation and the calibrated fixed frames."""
    T_P_B = compose_chain(Z, board_in_camera.inverse(), X.inverse())
    return T_P_B.inverse().to_pose()
