"""
6-DOF 포즈 대수

- 위치는 mm, 자세는 x/y/z 축 오일러 각(도).
- 회전 규약: 외재적 x-y-z, 즉 R = Rz(γ)·Ry(β)·Rx(α). 모든 모듈이 이 규약을 공유함.
- 상대 동작 a_{i→j}는 출발 포즈 i의 로컬 좌표계로 표현:
  dpos = R_iᵀ(pos_j − pos_i), drot = euler(R_iᵀ R_j).
- 각도는 항상 [-180, 180)로 래핑. matrix_to_euler의 pitch는 [-90, 90].
- 짐벌락(|β| = 90°, 1e-7 이내)에서는 γ = 0으로 두고 모호성을 α에 몰아넣음.
- 모든 계산은 float64.
"""

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

from app.core.exceptions import PoseGeometryError

Vec3 = Tuple[float, float, float]

ORTHONORMAL_TOLERANCE = 1e-4
GIMBAL_TOLERANCE_DEG = 1e-7


def wrap_angle(deg):
    """각도(스칼라 또는 배열)를 [-180, 180)로 래핑"""
    wrapped = np.mod(np.asarray(deg, dtype=np.float64) + 180.0, 360.0) - 180.0
    # np.mod 결과가 360.0으로 반올림되는 경우 방지
    wrapped = np.where(wrapped >= 180.0, wrapped - 360.0, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def _as_vec3(values: Iterable[float], name: str) -> Vec3:
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.shape != (3,):
        raise PoseGeometryError(f"{name}는 길이 3이어야 함 (받은 shape {arr.shape})")
    if not np.all(np.isfinite(arr)):
        raise PoseGeometryError(f"{name}에 유한하지 않은 값이 있음: {arr.tolist()}")
    return (float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class Pose6:
    """절대 프로브 포즈: pos(mm), rot(도, x/y/z 오일러 각)"""

    pos: Vec3
    rot: Vec3

    def __post_init__(self):
        object.__setattr__(self, "pos", _as_vec3(self.pos, "pos"))
        rot = _as_vec3(self.rot, "rot")
        object.__setattr__(self, "rot", tuple(float(r) for r in wrap_angle(np.array(rot))))

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Pose6":
        return cls(pos=tuple(values[:3]), rot=tuple(values[3:6]))

    def as_array(self) -> np.ndarray:
        return np.array(self.pos + self.rot, dtype=np.float64)


@dataclass(frozen=True)
class Action6:
    """상대 동작: dpos(mm, 출발 포즈 로컬 좌표), drot(도, [-180, 180))"""

    dpos: Vec3
    drot: Vec3

    def __post_init__(self):
        object.__setattr__(self, "dpos", _as_vec3(self.dpos, "dpos"))
        drot = _as_vec3(self.drot, "drot")
        object.__setattr__(self, "drot", tuple(float(r) for r in wrap_angle(np.array(drot))))

    @classmethod
    def zero(cls) -> "Action6":
        return cls((0.0, 0.0, 0.0), (0.0, 0.0, 0.0))

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Action6":
        return cls(dpos=tuple(values[:3]), drot=tuple(values[3:6]))

    def as_array(self) -> np.ndarray:
        return np.array(self.dpos + self.drot, dtype=np.float64)


# ---------------------------------------------------------------------------
# 회전 행렬 <-> 오일러 각 (배치 버전이 기본, 스칼라 버전은 얇은 래퍼)
# ---------------------------------------------------------------------------


def euler_to_matrix_batch(rot_deg: np.ndarray) -> np.ndarray:
    """[N, 3] 오일러 각(도) -> [N, 3, 3] 회전 행렬, R = Rz·Ry·Rx"""
    rot = np.radians(np.asarray(rot_deg, dtype=np.float64).reshape(-1, 3))
    ca, cb, cg = np.cos(rot[:, 0]), np.cos(rot[:, 1]), np.cos(rot[:, 2])
    sa, sb, sg = np.sin(rot[:, 0]), np.sin(rot[:, 1]), np.sin(rot[:, 2])

    R = np.empty((rot.shape[0], 3, 3), dtype=np.float64)
    R[:, 0, 0] = cg * cb
    R[:, 0, 1] = cg * sb * sa - sg * ca
    R[:, 0, 2] = cg * sb * ca + sg * sa
    R[:, 1, 0] = sg * cb
    R[:, 1, 1] = sg * sb * sa + cg * ca
    R[:, 1, 2] = sg * sb * ca - cg * sa
    R[:, 2, 0] = -sb
    R[:, 2, 1] = cb * sa
    R[:, 2, 2] = cb * ca
    return R


def orthonormality_residual(R: np.ndarray) -> np.ndarray:
    """각 행렬의 max|R·Rᵀ − I|와 det 부호 위반을 합친 잔차"""
    R = np.asarray(R, dtype=np.float64).reshape(-1, 3, 3)
    gram = R @ np.swapaxes(R, -1, -2)
    residual = np.abs(gram - np.eye(3)).max(axis=(1, 2))
    det = np.linalg.det(R)
    return np.maximum(residual, np.abs(det - 1.0))


def matrix_to_euler_batch(R: np.ndarray, check: bool = True) -> np.ndarray:
    """[N, 3, 3] 회전 행렬 -> [N, 3] 오일러 각(도)"""
    R = np.asarray(R, dtype=np.float64).reshape(-1, 3, 3)
    if check:
        residual = orthonormality_residual(R)
        bad = residual > ORTHONORMAL_TOLERANCE
        if np.any(bad):
            raise PoseGeometryError(
                f"정규직교 행렬이 아님 (잔차 {float(residual.max()):.3e})",
                details={"max_residual": float(residual.max())},
            )

    cos_beta = np.hypot(R[:, 0, 0], R[:, 1, 0])
    beta = np.degrees(np.arctan2(-R[:, 2, 0], cos_beta))
    alpha = np.degrees(np.arctan2(R[:, 2, 1], R[:, 2, 2]))
    gamma = np.degrees(np.arctan2(R[:, 1, 0], R[:, 0, 0]))

    gimbal = np.abs(np.abs(beta) - 90.0) < GIMBAL_TOLERANCE_DEG
    if np.any(gimbal):
        sign = np.where(beta >= 0.0, 1.0, -1.0)
        # β = ±90°: R[0,1] = ±sin α, R[1,1] = cos α (γ = 0 기준)
        alpha_lock = np.degrees(np.arctan2(sign * R[:, 0, 1], R[:, 1, 1]))
        alpha = np.where(gimbal, alpha_lock, alpha)
        gamma = np.where(gimbal, 0.0, gamma)
        beta = np.where(gimbal, 90.0 * sign, beta)

    out = np.stack([wrap_angle(alpha), beta, wrap_angle(gamma)], axis=1)
    # β = 90 은 래핑 대상이 아님 ([-90, 90] 범위 유지)
    return out


def euler_to_matrix(rot: Sequence[float]) -> np.ndarray:
    """오일러 각(도) -> 3x3 회전 행렬"""
    arr = np.asarray(rot, dtype=np.float64)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise PoseGeometryError(f"유효하지 않은 오일러 각: {arr.tolist()}")
    return euler_to_matrix_batch(arr[None, :])[0]


def matrix_to_euler(R: np.ndarray) -> Vec3:
    """3x3 회전 행렬 -> 오일러 각(도). 정규직교가 아니면 PoseGeometryError."""
    arr = np.asarray(R, dtype=np.float64)
    if arr.shape != (3, 3):
        raise PoseGeometryError(f"3x3 행렬이 필요함 (받은 shape {arr.shape})")
    e = matrix_to_euler_batch(arr[None])[0]
    return (float(e[0]), float(e[1]), float(e[2]))


# ---------------------------------------------------------------------------
# 상대 동작
# ---------------------------------------------------------------------------


def relative_actions_batch(
    src_pos: np.ndarray, src_rot: np.ndarray, dst_pos: np.ndarray, dst_rot: np.ndarray
) -> np.ndarray:
    """
    배치 상대 동작. 입력은 [N, 3] 또는 브로드캐스트 가능한 [1, 3].

    Returns:
        [N, 6] 배열 (dpos mm, drot 도)
    """
    src_pos = np.asarray(src_pos, dtype=np.float64).reshape(-1, 3)
    src_rot = np.asarray(src_rot, dtype=np.float64).reshape(-1, 3)
    dst_pos = np.asarray(dst_pos, dtype=np.float64).reshape(-1, 3)
    dst_rot = np.asarray(dst_rot, dtype=np.float64).reshape(-1, 3)
    n = max(len(src_pos), len(dst_pos))

    R_src = euler_to_matrix_batch(src_rot)
    R_dst = euler_to_matrix_batch(dst_rot)
    R_src_t = np.swapaxes(R_src, -1, -2)

    delta = dst_pos - src_pos
    dpos = np.einsum("nij,nj->ni", np.broadcast_to(R_src_t, (n, 3, 3)), np.broadcast_to(delta, (n, 3)))
    rel = np.broadcast_to(R_src_t, (n, 3, 3)) @ np.broadcast_to(R_dst, (n, 3, 3))
    drot = matrix_to_euler_batch(rel, check=False)

    # 영 법칙: 같은 자세이면 회전 차이는 정확히 0
    same_rot = np.all(np.broadcast_to(src_rot, (n, 3)) == np.broadcast_to(dst_rot, (n, 3)), axis=1)
    drot[same_rot] = 0.0
    return np.concatenate([dpos, drot], axis=1)


def relative_action(p_i: Pose6, p_j: Pose6) -> Action6:
    """p_i에서 p_j로 가는 상대 동작 (p_i 로컬 좌표)"""
    if p_i == p_j:
        return Action6.zero()
    out = relative_actions_batch(
        np.array(p_i.pos), np.array(p_i.rot), np.array(p_j.pos), np.array(p_j.rot)
    )[0]
    return Action6.from_array(out)


def apply_actions_batch(
    pos: np.ndarray, rot: np.ndarray, actions: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """배치 동작 적용. actions는 [N, 6]. (pos', rot') 반환"""
    pos = np.asarray(pos, dtype=np.float64).reshape(-1, 3)
    rot = np.asarray(rot, dtype=np.float64).reshape(-1, 3)
    actions = np.asarray(actions, dtype=np.float64).reshape(-1, 6)
    n = max(len(pos), len(actions))

    R_p = np.broadcast_to(euler_to_matrix_batch(rot), (n, 3, 3))
    new_pos = np.broadcast_to(pos, (n, 3)) + np.einsum("nij,nj->ni", R_p, np.broadcast_to(actions[:, :3], (n, 3)))
    R_new = R_p @ euler_to_matrix_batch(np.broadcast_to(actions[:, 3:], (n, 3)))
    new_rot = matrix_to_euler_batch(R_new, check=False)

    zero_rot = np.all(np.broadcast_to(actions[:, 3:], (n, 3)) == 0.0, axis=1)
    new_rot[zero_rot] = wrap_angle(np.broadcast_to(rot, (n, 3))[zero_rot])
    return new_pos, new_rot


def apply_action(p: Pose6, a: Action6) -> Pose6:
    """포즈 p에 로컬 좌표 동작 a를 적용한 결과 포즈"""
    new_pos, new_rot = apply_actions_batch(
        np.array(p.pos), np.array(p.rot), a.as_array()[None, :]
    )
    return Pose6(pos=tuple(new_pos[0]), rot=tuple(new_rot[0]))


# ---------------------------------------------------------------------------
# 거리와 평가 지표
# ---------------------------------------------------------------------------


def pose_distance_components(
    pos: np.ndarray, rot: np.ndarray, ref_pos: np.ndarray, ref_rot: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """(병진 거리 mm, 래핑된 오일러 차이의 노름 도)"""
    pos = np.asarray(pos, dtype=np.float64)
    rot = np.asarray(rot, dtype=np.float64)
    trans = np.linalg.norm(pos - np.asarray(ref_pos, dtype=np.float64), axis=-1)
    angle = np.linalg.norm(wrap_angle(rot - np.asarray(ref_rot, dtype=np.float64)), axis=-1)
    return trans, angle


def pose_distance(pos: np.ndarray, rot: np.ndarray, ref_pos: np.ndarray, ref_rot: np.ndarray):
    """mm와 도를 동일 가중치로 더한 포즈 거리"""
    trans, angle = pose_distance_components(pos, rot, ref_pos, ref_rot)
    return trans + angle


def action_mae(pred: Sequence[Action6], gt: Sequence[Action6]) -> Tuple[float, float]:
    """
    예측 동작과 정답 동작 사이의 MAE.

    Returns:
        (병진 MAE mm, 회전 MAE 도). 회전은 래핑된 차이 기준.
    """
    if len(pred) == 0 or len(gt) == 0:
        raise PoseGeometryError("action_mae: 빈 입력")
    if len(pred) != len(gt):
        raise PoseGeometryError(f"action_mae: 길이 불일치 ({len(pred)} vs {len(gt)})")
    p = np.stack([a.as_array() for a in pred])
    g = np.stack([a.as_array() for a in gt])
    return action_mae_arrays(p, g)


def action_mae_arrays(pred: np.ndarray, gt: np.ndarray) -> Tuple[float, float]:
    """[..., 6] 배열 버전의 action_mae"""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.size == 0:
        raise PoseGeometryError("action_mae: 빈 입력")
    trans = float(np.mean(np.abs(pred[..., :3] - gt[..., :3])))
    rot = float(np.mean(np.abs(wrap_angle(pred[..., 3:] - gt[..., 3:]))))
    return trans, rot
