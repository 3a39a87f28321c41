"""
포즈 대수 테스트: 오일러 변환, 상대 동작, 적용, MAE
"""

import math

import numpy as np
import pytest

from app.core.exceptions import PoseGeometryError
from app.utils.pose_geometry import (
    Action6,
    Pose6,
    action_mae,
    apply_action,
    apply_actions_batch,
    euler_to_matrix,
    matrix_to_euler,
    relative_action,
    relative_actions_batch,
    wrap_angle,
)


def _rx(a):
    c, s = math.cos(math.radians(a)), math.sin(math.radians(a))
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _ry(b):
    c, s = math.cos(math.radians(b)), math.sin(math.radians(b))
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rz(g):
    c, s = math.cos(math.radians(g)), math.sin(math.radians(g))
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def _homogeneous(pos, rot):
    T = np.eye(4)
    T[:3, :3] = _rz(rot[2]) @ _ry(rot[1]) @ _rx(rot[0])
    T[:3, 3] = pos
    return T


def _random_poses(rng, n):
    pos = rng.uniform(-100.0, 100.0, (n, 3))
    rot = np.column_stack(
        [rng.uniform(-180.0, 180.0, n), rng.uniform(-88.9, 88.9, n), rng.uniform(-180.0, 180.0, n)]
    )
    return pos, rot


class TestEulerMatrix:
    def test_zero_is_identity(self):
        assert np.allclose(euler_to_matrix((0, 0, 0)), np.eye(3), atol=0)

    def test_rx90_maps_y_to_z(self):
        R = euler_to_matrix((90, 0, 0))
        assert np.allclose(R @ np.array([0, 1, 0]), [0, 0, 1], atol=1e-12)

    def test_matches_matrix_product(self):
        expected = _rz(30) @ _ry(20) @ _rx(10)
        assert np.allclose(euler_to_matrix((10, 20, 30)), expected, atol=1e-12)

    def test_orthonormal(self, rng):
        _, rot = _random_poses(rng, 50)
        for r in rot:
            R = euler_to_matrix(r)
            assert np.allclose(R @ R.T, np.eye(3), atol=1e-9)
            assert abs(np.linalg.det(R) - 1.0) < 1e-9

    def test_identity_to_zero(self):
        assert matrix_to_euler(np.eye(3)) == (0.0, 0.0, 0.0)

    def test_round_trip_angles(self):
        assert np.allclose(matrix_to_euler(euler_to_matrix((10, 20, 30))), (10, 20, 30), atol=1e-9)

    def test_round_trip_matrices(self, rng):
        _, rot = _random_poses(rng, 200)
        for r in rot:
            R = euler_to_matrix(r)
            back = matrix_to_euler(R)
            assert -90.0 <= back[1] <= 90.0
            assert np.allclose(euler_to_matrix(back), R, atol=1e-6)

    def test_gimbal_lock_sets_gamma_zero(self):
        R = euler_to_matrix((25.0, 90.0, 40.0))
        alpha, beta, gamma = matrix_to_euler(R)
        assert beta == 90.0
        assert gamma == 0.0
        assert np.allclose(euler_to_matrix((alpha, beta, gamma)), R, atol=1e-9)

    def test_gimbal_lock_negative_pitch(self):
        R = euler_to_matrix((-70.0, -90.0, 15.0))
        alpha, beta, gamma = matrix_to_euler(R)
        assert beta == -90.0
        assert gamma == 0.0
        assert np.allclose(euler_to_matrix((alpha, beta, gamma)), R, atol=1e-9)

    def test_rejects_non_orthonormal(self):
        with pytest.raises(PoseGeometryError):
            matrix_to_euler(np.diag([1.0, 1.0, 1.1]))

    def test_rejects_wrong_shape(self):
        with pytest.raises(PoseGeometryError):
            matrix_to_euler(np.eye(4))


class TestWrapAngle:
    def test_range(self):
        values = np.array([-540.0, -180.0, 179.999, 180.0, 359.0, 720.0])
        wrapped = wrap_angle(values)
        assert np.all(wrapped >= -180.0) and np.all(wrapped < 180.0)
        assert wrap_angle(180.0) == -180.0
        assert wrap_angle(359.0) == pytest.approx(-1.0)

    def test_pose_wraps_rotation(self):
        pose = Pose6((0, 0, 0), (190.0, 0.0, -200.0))
        assert pose.rot == pytest.approx((-170.0, 0.0, 160.0))

    def test_pose_rejects_nan(self):
        with pytest.raises(PoseGeometryError):
            Pose6((0, float("nan"), 0), (0, 0, 0))


class TestRelativeAction:
    def test_same_pose_is_exact_zero(self, rng):
        pos, rot = _random_poses(rng, 20)
        for p, r in zip(pos, rot):
            pose = Pose6(tuple(p), tuple(r))
            assert relative_action(pose, pose) == Action6.zero()
        batch = relative_actions_batch(pos, rot, pos, rot)
        assert np.all(batch[:, 3:] == 0.0)

    def test_pure_translation(self):
        a = relative_action(Pose6((0, 0, 0), (0, 0, 0)), Pose6((3, -4, 12), (0, 0, 0)))
        assert a.dpos == pytest.approx((3, -4, 12), abs=1e-12)
        assert a.drot == (0.0, 0.0, 0.0)

    def test_matches_homogeneous_oracle(self, rng):
        pos_i, rot_i = _random_poses(rng, 500)
        pos_j, rot_j = _random_poses(rng, 500)
        actions = relative_actions_batch(pos_i, rot_i, pos_j, rot_j)
        for k in range(500):
            rel = np.linalg.inv(_homogeneous(pos_i[k], rot_i[k])) @ _homogeneous(pos_j[k], rot_j[k])
            assert np.allclose(actions[k, :3], rel[:3, 3], atol=1e-9)
            assert np.allclose(euler_to_matrix(actions[k, 3:]), rel[:3, :3], atol=1e-9)

    def test_round_trip_10k(self):
        rng = np.random.default_rng(20240601)
        pos_i, rot_i = _random_poses(rng, 10_000)
        pos_j, rot_j = _random_poses(rng, 10_000)
        actions = relative_actions_batch(pos_i, rot_i, pos_j, rot_j)
        new_pos, new_rot = apply_actions_batch(pos_i, rot_i, actions)
        assert np.max(np.abs(new_pos - pos_j)) < 1e-6
        assert np.max(np.abs(wrap_angle(new_rot - rot_j))) < 1e-6

    def test_angles_in_range(self, rng):
        pos_i, rot_i = _random_poses(rng, 1000)
        pos_j, rot_j = _random_poses(rng, 1000)
        drot = relative_actions_batch(pos_i, rot_i, pos_j, rot_j)[:, 3:]
        assert np.all(drot >= -180.0) and np.all(drot < 180.0)
        assert np.all(np.abs(drot[:, 1]) <= 90.0)


class TestApplyAction:
    def test_zero_action(self):
        p = Pose6((1, 2, 3), (10, -20, 30))
        assert apply_action(p, Action6.zero()) == p

    def test_identity_rotation_shift(self):
        p = apply_action(Pose6((5, 5, 5), (0, 0, 0)), Action6((1, 2, 3), (0, 0, 0)))
        assert p.pos == pytest.approx((6, 7, 8))

    def test_relative_of_applied_recovers_action(self, rng):
        pos, rot = _random_poses(rng, 100)
        for k in range(100):
            p = Pose6(tuple(pos[k]), tuple(rot[k]))
            a = Action6(tuple(rng.uniform(-20, 20, 3)), tuple(rng.uniform(-40, 40, 3)))
            back = relative_action(p, apply_action(p, a))
            assert np.allclose(back.as_array(), a.as_array(), atol=1e-6)


class TestActionMae:
    def test_identical_is_zero(self):
        a = [Action6((1, 2, 3), (4, 5, 6))]
        assert action_mae(a, a) == (0.0, 0.0)

    def test_mean_of_abs(self):
        pred = [Action6((3, 0, 0), (0, 6, 0))]
        gt = [Action6.zero()]
        assert action_mae(pred, gt) == pytest.approx((1.0, 2.0))

    def test_wrapped_rotation_error(self):
        pred = [Action6((0, 0, 0), (0, 0, 179))]
        gt = [Action6((0, 0, 0), (0, 0, -179))]
        _, rot = action_mae(pred, gt)
        assert rot == pytest.approx(2.0 / 3.0)

    def test_symmetric(self, rng):
        pred = [Action6.from_array(rng.uniform(-50, 50, 6)) for _ in range(10)]
        gt = [Action6.from_array(rng.uniform(-50, 50, 6)) for _ in range(10)]
        assert action_mae(pred, gt) == pytest.approx(action_mae(gt, pred), abs=1e-12)

    def test_rejects_empty_and_mismatch(self):
        with pytest.raises(PoseGeometryError):
            action_mae([], [])
        with pytest.raises(PoseGeometryError):
            action_mae([Action6.zero()], [Action6.zero(), Action6.zero()])
