"""
앵커 집합 구성

현재 프레임 t_c와 샘플링된 과거 키프레임 t_i들로부터
(f_i^v, a_{t_c→t_i}) 쌍을 만듦. 체인 헤드용으로 이전 앵커→다음 앵커 동작도 함께 보관.
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from app.core.exceptions import ValidationFailure
from app.models.scan_models import ScanTrajectory
from app.utils.pose_geometry import relative_actions_batch
from app.vector_stores.feature_provider import FeatureProvider


@dataclass(frozen=True)
class AnchorSet:
    scan_id: str
    current_idx: int
    indices: List[int]  # 프레임 오름차순
    current_feature: np.ndarray  # [C]
    anchor_features: np.ndarray  # [n, C]
    anchor_actions: np.ndarray  # [n, 6] 현재 → 앵커
    chain_actions: np.ndarray  # [n + 1, 6] 이전 토큰 → 다음 토큰, 첫 토큰은 0, 마지막은 현재 프레임

    @property
    def size(self) -> int:
        return len(self.indices)


def build_anchor_set(
    scan: ScanTrajectory,
    current_idx: int,
    sampled_indices: Sequence[int],
    provider: FeatureProvider,
) -> AnchorSet:
    """샘플된 인덱스로 AnchorSet 생성. 인덱스는 모두 current_idx보다 작아야 함."""
    if not 0 <= current_idx < scan.n_frames:
        raise ValidationFailure(
            f"{scan.scan_id}: 현재 프레임 {current_idx}가 범위를 벗어남", details={"frames": scan.n_frames}
        )
    indices = sorted(int(i) for i in sampled_indices)
    if len(set(indices)) != len(indices):
        raise ValidationFailure(f"{scan.scan_id}: 중복된 앵커 인덱스 {indices}")
    if indices and (indices[0] < 0 or indices[-1] >= current_idx):
        raise ValidationFailure(
            f"{scan.scan_id}: 앵커 인덱스는 [0, {current_idx}) 안에 있어야 함",
            details={"indices": indices, "current": current_idx},
        )

    idx = np.asarray(indices, dtype=np.int64)
    current_feature = np.asarray(provider.lookup(scan.scan_id, current_idx), dtype=np.float64)
    anchor_features = np.asarray(provider.lookup_many(scan.scan_id, indices), dtype=np.float64).reshape(
        len(indices), provider.dim
    )

    cur_pos, cur_rot = scan.pos[current_idx], scan.rot[current_idx]
    if len(indices):
        anchor_actions = relative_actions_batch(cur_pos, cur_rot, scan.pos[idx], scan.rot[idx])
    else:
        anchor_actions = np.zeros((0, 6))

    # 체인 순서: 앵커들(시간순) 다음 현재 프레임
    chain_idx = np.append(idx, current_idx)
    chain_actions = np.zeros((len(chain_idx), 6))
    if len(chain_idx) > 1:
        chain_actions[1:] = relative_actions_batch(
            scan.pos[chain_idx[:-1]], scan.rot[chain_idx[:-1]], scan.pos[chain_idx[1:]], scan.rot[chain_idx[1:]]
        )

    return AnchorSet(
        scan_id=scan.scan_id,
        current_idx=int(current_idx),
        indices=indices,
        current_feature=current_feature,
        anchor_features=anchor_features,
        anchor_actions=anchor_actions,
        chain_actions=chain_actions,
    )
