"""
키프레임(앵커) 샘플링

- segmental: 후보를 n개 연속 구간으로 나누고 구간마다 하나씩 무작위 선택
- semantic: 현재 프레임과 이미 고른 앵커에 대한 뷰 분포 코사인 유사도 합이
  가장 낮은 K개 중 하나를 무작위로 고르는 과정을 n번 반복
- uniform: 비복원 균등 추출
그리고 타깃 유사 프레임 제외 규칙 (포즈 근접 / 특징 코사인).
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import ValidationFailure
from app.models.config_models import SamplerStrategy
from app.utils.pose_geometry import pose_distance_components

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# 유사도
# ---------------------------------------------------------------------------


def cosine_similarity(z1: Sequence[float], z2: Sequence[float]) -> float:
    """dot(z1, z2) / (‖z1‖‖z2‖)"""
    a = np.asarray(z1, dtype=np.float64)
    b = np.asarray(z2, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValidationFailure("cosine_similarity: 노름이 0인 분포")
    return float(np.dot(a, b) / (na * nb))


def cosine_to_many(zs: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """[n] 각 행과 ref 사이의 코사인 유사도"""
    zs = np.asarray(zs, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    norms = np.linalg.norm(zs, axis=1)
    ref_norm = np.linalg.norm(ref)
    if ref_norm == 0.0 or np.any(norms == 0.0):
        raise ValidationFailure("cosine_similarity: 노름이 0인 분포")
    return (zs @ ref) / (norms * ref_norm)


def redundancy_score(
    candidate_z: Sequence[float],
    current_z: Sequence[float],
    selected_zs: Sequence[Sequence[float]] = (),
) -> float:
    """현재 프레임과 선택된 앵커들에 대한 코사인 유사도의 합"""
    total = cosine_similarity(candidate_z, current_z)
    for z in selected_zs:
        total += cosine_similarity(candidate_z, z)
    return total


def anchor_diversity(z_current: Sequence[float], z_anchors: Sequence[Sequence[float]]) -> float:
    """{현재} ∪ 앵커 집합의 평균 쌍별 코사인 유사도 (낮을수록 다양). 앵커가 없으면 0."""
    zs = [np.asarray(z_current, dtype=np.float64)] + [np.asarray(z, dtype=np.float64) for z in z_anchors]
    if len(zs) < 2:
        return 0.0
    sims = [cosine_similarity(zs[i], zs[j]) for i in range(len(zs)) for j in range(i + 1, len(zs))]
    return float(np.mean(sims))


# ---------------------------------------------------------------------------
# 샘플러
# ---------------------------------------------------------------------------


def segment_bounds(pool_size: int, n: int) -> List[Tuple[int, int]]:
    """n개 연속 구간의 [start, end). 앞쪽 구간이 남는 원소를 하나씩 더 가짐."""
    base, extra = divmod(pool_size, n)
    bounds, start = [], 0
    for s in range(n):
        size = base + (1 if s < extra else 0)
        bounds.append((start, start + size))
        start += size
    return bounds


def segmental_sample(pool: Sequence[int], n: int, rng: np.random.Generator) -> List[int]:
    """구간마다 균등하게 하나씩. 후보가 n개 이하면 전체 반환."""
    pool = [int(i) for i in pool]
    if n <= 0:
        return []
    if len(pool) <= n:
        return sorted(pool)
    picks = [pool[start + int(rng.integers(end - start))] for start, end in segment_bounds(len(pool), n)]
    return picks


def uniform_sample(pool: Sequence[int], n: int, rng: np.random.Generator) -> List[int]:
    """비복원 균등 추출, 정렬하여 반환"""
    pool = [int(i) for i in pool]
    if n <= 0:
        return []
    if len(pool) <= n:
        return sorted(pool)
    chosen = rng.choice(len(pool), size=n, replace=False)
    return sorted(pool[int(i)] for i in chosen)


def semantic_selection_order(
    pool: Sequence[int],
    pool_z: np.ndarray,
    current_z: Sequence[float],
    n: int,
    K: int,
    rng: np.random.Generator,
) -> List[int]:
    """선택된 순서 그대로의 semantic 샘플 (검증용으로 노출)"""
    pool_arr = np.asarray(pool, dtype=np.int64)
    if n <= 0:
        return []
    if len(pool_arr) <= n:
        return [int(i) for i in pool_arr]
    pool_z = np.asarray(pool_z, dtype=np.float64)

    scores = cosine_to_many(pool_z, np.asarray(current_z, dtype=np.float64))
    available = np.ones(len(pool_arr), dtype=bool)
    order: List[int] = []
    for _ in range(n):
        candidates = np.flatnonzero(available)
        # 점수 오름차순, 동점은 이른 프레임 먼저
        ranked = candidates[np.lexsort((pool_arr[candidates], scores[candidates]))]
        k = min(K, len(ranked))
        pick = int(ranked[int(rng.integers(k))])
        available[pick] = False
        order.append(int(pool_arr[pick]))
        scores = scores + cosine_to_many(pool_z, pool_z[pick])
    return order


def semantic_sample(
    pool: Sequence[int],
    pool_z: np.ndarray,
    current_z: Sequence[float],
    n: int,
    K: int,
    rng: np.random.Generator,
) -> List[int]:
    """중복이 가장 적은 K개 후보 중 무작위 선택을 n번 반복. 프레임 순으로 정렬하여 반환."""
    if K < 1:
        raise ValidationFailure(f"K는 1 이상이어야 함 ({K})")
    return sorted(semantic_selection_order(pool, pool_z, current_z, n, K, rng))


def sample_anchors(
    strategy: SamplerStrategy,
    pool: Sequence[int],
    n: int,
    rng: np.random.Generator,
    viewdist: Optional[np.ndarray] = None,
    current_idx: Optional[int] = None,
    K: int = 128,
) -> List[int]:
    """
    전략별 디스패치. semantic은 스캔 전체의 viewdist와 현재 프레임 인덱스가 필요함.
    """
    if strategy == SamplerStrategy.SEGMENTAL:
        return segmental_sample(pool, n, rng)
    if strategy == SamplerStrategy.UNIFORM:
        return uniform_sample(pool, n, rng)
    if viewdist is None or current_idx is None:
        raise ValidationFailure("semantic 샘플링에는 viewdist와 current_idx가 필요함")
    pool_idx = np.asarray(pool, dtype=np.int64)
    return semantic_sample(pool_idx, viewdist[pool_idx], viewdist[current_idx], n, K, rng)


# ---------------------------------------------------------------------------
# 제외 규칙
# ---------------------------------------------------------------------------


def near_target_mask(
    pos: np.ndarray,
    rot: np.ndarray,
    target_poses: np.ndarray,
    trans_threshold_mm: float,
    rot_threshold_deg: float,
) -> np.ndarray:
    """[T] 어느 한 타깃에 대해 위치와 회전 임계값을 모두 만족하면 True"""
    target_poses = np.asarray(target_poses, dtype=np.float64).reshape(-1, 6)
    trans, angle = pose_distance_components(
        np.asarray(pos)[:, None, :], np.asarray(rot)[:, None, :], target_poses[None, :, :3], target_poses[None, :, 3:]
    )
    return np.any((trans <= trans_threshold_mm) & (angle <= rot_threshold_deg), axis=1)


def exclude_near_target(
    pool: Sequence[int],
    pos: np.ndarray,
    rot: np.ndarray,
    target_pose: np.ndarray,
    trans_threshold_mm: float,
    rot_threshold_deg: float,
) -> List[int]:
    """타깃 포즈의 두 임계값 안에 모두 들어오는 프레임을 후보에서 제거"""
    pool_arr = np.asarray(pool, dtype=np.int64)
    if pool_arr.size == 0:
        return []
    near = near_target_mask(pos[pool_arr], rot[pool_arr], target_pose, trans_threshold_mm, rot_threshold_deg)
    return [int(i) for i in pool_arr[~near]]


def exclude_similar_features(
    pool: Sequence[int],
    target_feature: np.ndarray,
    features: np.ndarray,
    cosine_threshold: float,
) -> List[int]:
    """타깃 프레임 특징과 코사인 유사도가 임계값 이상인 프레임을 제거"""
    pool_arr = np.asarray(pool, dtype=np.int64)
    if pool_arr.size == 0:
        return []
    targets = np.asarray(target_feature, dtype=np.float64).reshape(-1, features.shape[1])
    similar = np.zeros(len(pool_arr), dtype=bool)
    for target in targets:
        similar |= cosine_to_many(features[pool_arr], target) >= cosine_threshold
    return [int(i) for i in pool_arr[~similar]]
