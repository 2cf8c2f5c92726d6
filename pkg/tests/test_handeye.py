import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hexid import handeye as H
from hexid import joints as J
from hexid import kinematics as K
from hexid.errors import DegenerateMotionSet, IllConditioned

TRUE_X = H.RigidTransform.from_pose([0.5, -0.2, 0.25, 0.0, 0.3, 2.8])  # camera in base
TRUE_Z = H.RigidTransform.from_pose([0.05, -0.03, 0.02, 0.1, -0.05, 0.4])  # board on platform
SPAN = np.array([0.3, 0.3, 0.2, 0.5, 0.5, 0.95])


def reachable_poses(rng, n, geom, table):
    """Random platform poses inside the usable leg travel and clear of the yokes, base frame."""
    c = rng.uniform(-1, 1, (40 * n, 6)) * SPAN
    L = K.leg_lengths(c, geom)
    c = c[np.all((L > geom.travel_min) & (L < geom.travel_max), axis=1)]
    keep = [p for p in c[:4 * n] if J.assert_no_collision(p[None], geom, table).ok]
    p = np.array(keep[:n])
    p[:, 2] += geom.home_height
    return p


@pytest.fixture(scope="module")
def poses(geom, table):
    return reachable_poses(np.random.default_rng(0), 31, geom, table)


def test_rigid_transform_invariants(rng):
    a, b, c = (H.RigidTransform.random(rng) for _ in range(3))
    np.testing.assert_allclose(((a @ b) @ c).matrix, (a @ (b @ c)).matrix, atol=1e-14)
    np.testing.assert_allclose((a.inverse() @ a).matrix, np.eye(4), atol=1e-10)
    with pytest.raises(ValueError):
        H.RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_identity_fixed_frames_give_equal_motions(poses):
    ds = H.synthesize_tracking_data(H.RigidTransform.identity(), H.RigidTransform.identity(), poses)
    for A, B in zip(*ds.pairs()):
        np.testing.assert_allclose(A.matrix, B.matrix, atol=1e-12)
    X = H.solve_hand_eye(ds)
    np.testing.assert_allclose(X.matrix, np.eye(4), atol=1e-10)


def test_synthetic_pairs_satisfy_ax_xb(poses, rng):
    X, Z = H.RigidTransform.random(rng), H.RigidTransform.random(rng)
    ds = H.synthesize_tracking_data(X, Z, poses)
    for A, B in zip(*ds.pairs()):
        np.testing.assert_allclose((A @ X).matrix, (X @ B).matrix, atol=1e-12)


def test_noiseless_recovery(poses):
    ds = H.synthesize_tracking_data(TRUE_X, TRUE_Z, poses)
    X, Z = H.calibrate(ds)
    assert H.rotation_error(TRUE_X.rotation, X.rotation) < 1e-8
    assert np.linalg.norm(TRUE_X.translation - X.translation) < 1e-8
    assert H.rotation_error(TRUE_Z.rotation, Z.rotation) < 1e-8
    assert np.linalg.norm(TRUE_Z.translation - Z.translation) < 1e-8


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_noiseless_recovery_random_frames(seed):
    rng = np.random.default_rng(seed)
    X, Z = H.RigidTransform.random(rng), H.RigidTransform.random(rng, 0.1)
    p = rng.uniform(-1, 1, (8, 6)) * SPAN
    ds = H.synthesize_tracking_data(X, Z, p)
    Xe = H.solve_hand_eye(ds)
    assert H.rotation_error(X.rotation, Xe.rotation) < 1e-8
    assert np.linalg.norm(X.translation - Xe.translation) < 1e-8


def test_chain_reproduces_commanded_poses(poses):
    ds = H.synthesize_tracking_data(TRUE_X, TRUE_Z, poses)
    X, Z = H.calibrate(ds)
    for O, p in zip(ds.board_poses, poses):
        got = H.platform_pose_from_camera(O, X, Z).as_array()
        np.testing.assert_allclose(got, p, atol=1e-9)


def test_identity_chain_is_home():
    I = H.RigidTransform.identity()
    np.testing.assert_allclose(H.platform_pose_from_camera(I, I, I).as_array(), 0.0, atol=0)


def test_pure_translation_rejected():
    p = np.zeros((6, 6))
    p[:, :3] = np.random.default_rng(1).normal(0, 0.05, (6, 3))
    with pytest.raises(DegenerateMotionSet):
        H.synthesize_tracking_data(TRUE_X, TRUE_Z, p)


def test_single_axis_rejected():
    p = np.zeros((6, 6))
    p[:, 5] = np.linspace(-0.5, 0.5, 6)
    with pytest.raises(DegenerateMotionSet):
        H.synthesize_tracking_data(TRUE_X, TRUE_Z, p)


def test_inconsistent_motions_ill_conditioned(rng):
    A = [H.RigidTransform.random(rng) for _ in range(10)]
    B = [H.RigidTransform.random(rng) for _ in range(10)]
    with pytest.raises(IllConditioned):
        H.solve_hand_eye(A, B)


def test_gauge_invariance(poses, rng):
    ds = H.synthesize_tracking_data(TRUE_X, TRUE_Z, poses)
    G = H.RigidTransform.random(rng)
    moved = H.HandEyeDataset(ds.platform_poses, [G @ O for O in ds.board_poses])
    X, Z = H.calibrate(ds)
    X2, Z2 = H.calibrate(moved)
    np.testing.assert_allclose(X2.matrix, (X @ G.inverse()).matrix, atol=1e-9)
    np.testing.assert_allclose(Z2.matrix, Z.matrix, atol=1e-9)
    for O, O2 in zip(ds.board_poses, moved.board_poses):
        np.testing.assert_allclose(H.platform_pose_from_camera(O2, X2, Z2).as_array(),
                                   H.platform_pose_from_camera(O, X, Z).as_array(), atol=1e-9)


def test_residual_shrinks_with_noise(poses):
    res = []
    for s in (1e-2, 1e-3, 1e-4, 0.0):
        ds = H.synthesize_tracking_data(TRUE_X, TRUE_Z, poses, s, s, np.random.default_rng(3))
        X = H.solve_hand_eye(ds)
        res.append(sum(np.linalg.norm((A @ X).matrix - (X @ B).matrix) for A, B in zip(*ds.pairs())))
    assert all(a > b for a, b in zip(res, res[1:]))
    assert res[-1] < 1e-10


def test_noise_monte_carlo(geom, table):
    # 0.1 deg / 0.1 mm per-axis observation noise, 30 pairs of reachable poses;
    # translation bound set from the 95th percentile of a 200-seed oracle run (3.02 mm)
    rot, trans = [], []
    for s in range(60):
        rng = np.random.default_rng(1000 + s)
        ds = H.synthesize_tracking_data(TRUE_X, TRUE_Z, reachable_poses(rng, 31, geom, table),
                                        math.radians(0.1), 1e-4, rng)
        X = H.solve_hand_eye(ds)
        rot.append(math.degrees(H.rotation_error(TRUE_X.rotation, X.rotation)))
        trans.append(np.linalg.norm(TRUE_X.translation - X.translation))
    assert np.mean(np.array(rot) < 0.5) >= 0.95
    assert np.mean(np.array(trans) < 3.5e-3) >= 0.95


def test_chain_with_board_noise(poses):
    ds = H.synthesize_tracking_data(TRUE_X, TRUE_Z, poses, 0.0, 1e-3, np.random.default_rng(9))
    X, Z = H.calibrate(ds)
    err = np.array([H.platform_pose_from_camera(O, X, Z).translation - p[:3] for O, p in zip(ds.board_poses, poses)])
    assert math.sqrt(np.mean(err ** 2)) < 2e-3


def test_dataset_json_round_trip(poses):
    ds = H.synthesize_tracking_data(TRUE_X, TRUE_Z, poses, 1e-3, 1e-3, 0)
    back = H.HandEyeDataset.from_json(ds.to_json())
    for a, b in zip(ds.board_poses + ds.platform_poses, back.board_poses + back.platform_poses):
        np.testing.assert_array_equal(a.matrix, b.matrix)
    with pytest.raises(ValueError):
        H.HandEyeDataset(ds.platform_poses, ds.board_poses[:-1])
