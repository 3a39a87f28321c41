"""
네 가지 헤드가 공통으로 쓰는 패딩된 배치 텐서
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from app.core.exceptions import ShapeError
from app.graph.anchors import AnchorSet
from app.models.schemas import NUM_VIEWS


@dataclass
class GraphBatch:
    """
    B개 샘플, 최대 앵커 수 N.
    체인 토큰은 [앵커 0..n-1, 패딩..., 현재]로 배치되어 현재 토큰은 항상 인덱스 N.
    """

    current_feature: np.ndarray  # [B, C]
    anchor_feature: np.ndarray  # [B, N, C]
    anchor_action: np.ndarray  # [B, N, 6]
    anchor_mask: np.ndarray  # [B, N] bool
    chain_action: np.ndarray  # [B, N + 1, 6]
    chain_position: np.ndarray  # [B, N + 1] int
    labels: np.ndarray  # [B, 10, 6]
    label_mask: np.ndarray  # [B, 10] bool

    @property
    def size(self) -> int:
        return int(self.current_feature.shape[0])

    @property
    def max_anchors(self) -> int:
        return int(self.anchor_feature.shape[1])

    @property
    def anchor_counts(self) -> np.ndarray:
        return self.anchor_mask.sum(axis=1)

    @property
    def chain_mask(self) -> np.ndarray:
        """[B, N + 1] 앵커 마스크 + 항상 유효한 현재 토큰"""
        return np.concatenate([self.anchor_mask, np.ones((self.size, 1), dtype=bool)], axis=1)

    def permute_anchors(self, perm: Sequence[int]) -> "GraphBatch":
        """모든 샘플의 앵커 슬롯 순서를 바꾼 사본 (체인 레이아웃은 유지)"""
        perm = np.asarray(perm, dtype=np.int64)
        return GraphBatch(
            current_feature=self.current_feature,
            anchor_feature=self.anchor_feature[:, perm],
            anchor_action=self.anchor_action[:, perm],
            anchor_mask=self.anchor_mask[:, perm],
            chain_action=self.chain_action,
            chain_position=self.chain_position,
            labels=self.labels,
            label_mask=self.label_mask,
        )


def collate_anchor_sets(
    sets: Sequence[AnchorSet],
    labels: Optional[Sequence[np.ndarray]] = None,
    label_masks: Optional[Sequence[np.ndarray]] = None,
    dtype=np.float64,
) -> GraphBatch:
    """AnchorSet 목록을 패딩하여 GraphBatch로. labels가 없으면 0 라벨, 마스크 False."""
    if not sets:
        raise ShapeError("collate: 빈 배치")
    B = len(sets)
    C = int(sets[0].current_feature.shape[0])
    N = max(s.size for s in sets)

    current = np.zeros((B, C), dtype=dtype)
    anchor_feature = np.zeros((B, N, C), dtype=dtype)
    anchor_action = np.zeros((B, N, 6), dtype=dtype)
    anchor_mask = np.zeros((B, N), dtype=bool)
    chain_action = np.zeros((B, N + 1, 6), dtype=dtype)
    chain_position = np.zeros((B, N + 1), dtype=np.int64)
    label_arr = np.zeros((B, NUM_VIEWS, 6), dtype=dtype)
    label_mask = np.zeros((B, NUM_VIEWS), dtype=bool)

    for b, s in enumerate(sets):
        if s.current_feature.shape[0] != C:
            raise ShapeError(f"collate: 특징 차원 불일치 {s.current_feature.shape[0]} != {C}")
        n = s.size
        current[b] = s.current_feature
        anchor_feature[b, :n] = s.anchor_features
        anchor_action[b, :n] = s.anchor_actions
        anchor_mask[b, :n] = True
        chain_action[b, :n] = s.chain_actions[:n]
        chain_action[b, N] = s.chain_actions[n]
        chain_position[b, :n] = np.arange(n)
        chain_position[b, N] = n
        if labels is not None:
            label_arr[b] = labels[b]
            label_mask[b] = True if label_masks is None else np.asarray(label_masks[b], dtype=bool)

    return GraphBatch(
        current_feature=current,
        anchor_feature=anchor_feature,
        anchor_action=anchor_action,
        anchor_mask=anchor_mask,
        chain_action=chain_action,
        chain_position=chain_position,
        labels=label_arr,
        label_mask=label_mask,
    )
