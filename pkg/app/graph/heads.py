"""
그래프 헤드

- StarGraphHead: 앵커 토큰 h_i = [f_i^v; A(a_{c→i})] → self-attention 정제 → 2C→C 투영
  → 현재 특징이 질의하는 cross-attention(전역 위치 추정) → 뷰별 디코더
- SingleFrameHead: 현재 특징에 디코더만 적용
- ChainGraphHead: 시간순 토큰(이전→다음 동작) + 사인 위치 인코딩, 비인과 self-attention
- FullyConnectedGraphHead: 앵커와 현재 토큰 전체의 self-attention, 위치 인코딩 없음

모든 헤드는 GraphBatch를 받아 [B, 10, 6] 예측을 반환함.
"""

import logging
from collections import OrderedDict
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from app.autograd import functional as F
from app.autograd.layers import AttentionBlock, Linear, Module, MultiHeadAttention, ParamFactory, sinusoidal_positions
from app.autograd.tensor import Tensor, concat, constant, no_grad
from app.core.exceptions import CheckpointError, ShapeError
from app.graph.anchors import AnchorSet
from app.graph.batch import GraphBatch, collate_anchor_sets
from app.graph.encoders import ActionEncoder
from app.models.config_models import ModelConfig, ModelKind
from app.models.schemas import NUM_VIEWS
from app.utils.pose_geometry import Action6

logger = logging.getLogger(__name__)


class ViewDecoders(Module):
    """
    뷰 k마다 독립된 2층 MLP (C → C → 6, 사이에 GELU).
    10개 디코더의 가중치를 [10, ...]로 쌓아 한 번의 배치 matmul로 계산.
    """

    def __init__(self, factory: ParamFactory, dim: int, name: str = "decoders"):
        self.dim = dim
        self.w1 = factory.uniform(f"{name}.w1", (NUM_VIEWS, dim, dim), fan_in=dim)
        self.b1 = factory.uniform(f"{name}.b1", (NUM_VIEWS, 1, dim), fan_in=dim)
        self.w2 = factory.uniform(f"{name}.w2", (NUM_VIEWS, dim, 6), fan_in=dim)
        self.b2 = factory.uniform(f"{name}.b2", (NUM_VIEWS, 1, 6), fan_in=dim)

    def __call__(self, x: Tensor) -> Tensor:
        """x: [B, C] → [B, 10, 6]"""
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ShapeError(f"디코더 입력은 [B, {self.dim}] 이어야 함: {x.shape}")
        b = x.shape[0]
        h = F.gelu(x.reshape(1, b, self.dim) @ self.w1 + self.b1)
        return (h @ self.w2 + self.b2).transpose(1, 0, 2)

    def zero_(self) -> None:
        for p in self.parameters():
            p.data[...] = 0.0


class GraphHead(Module):
    """헤드 공통 기반: 입력 상수화, 추론, 상태 사전"""

    kind: ModelKind

    def __init__(self, config: ModelConfig, factory: ParamFactory):
        self.config = config
        self.dim = config.feature_dim
        self.dtype = factory.dtype

    def _const(self, array: np.ndarray) -> Tensor:
        return constant(np.asarray(array, dtype=self.dtype))

    def _check_batch(self, batch: GraphBatch) -> None:
        if batch.current_feature.shape[1] != self.dim:
            raise ShapeError(
                f"특징 차원 불일치: 배치 C={batch.current_feature.shape[1]}, 모델 C={self.dim}"
            )

    def forward(self, batch: GraphBatch) -> Tensor:
        raise NotImplementedError

    def __call__(self, batch: GraphBatch) -> Tensor:
        self._check_batch(batch)
        return self.forward(batch)

    def predict(self, batch: GraphBatch) -> np.ndarray:
        """기울기 기록 없이 [B, 10, 6] float64 예측"""
        with no_grad():
            return self(batch).data.astype(np.float64)

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, p.data) for name, p in self.named_parameters())

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        params = OrderedDict(self.named_parameters())
        missing = [name for name in params if name not in state]
        unexpected = [name for name in state if name not in params]
        if missing or unexpected:
            raise CheckpointError(
                "체크포인트 파라미터 이름이 모델과 다름",
                details={"missing": missing[:10], "unexpected": unexpected[:10]},
            )
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise CheckpointError(f"{name}: shape {value.shape} != 모델 {p.shape}")
            p.data = value.astype(self.dtype, copy=True)
            p.m = np.zeros_like(p.data)
            p.v = np.zeros_like(p.data)
            p.step = 0


class SingleFrameHead(GraphHead):
    kind = ModelKind.SINGLE

    def __init__(self, config: ModelConfig, factory: ParamFactory):
        super().__init__(config, factory)
        self.decoders = ViewDecoders(factory, self.dim)

    def forward(self, batch: GraphBatch) -> Tensor:
        return self.decoders(self._const(batch.current_feature))


class StarGraphHead(GraphHead):
    kind = ModelKind.STAR

    def __init__(self, config: ModelConfig, factory: ParamFactory):
        super().__init__(config, factory)
        C = self.dim
        self.encoder = ActionEncoder(
            factory, C, config.standardize_actions, config.action_scale_mm, config.action_scale_deg
        )
        self.blocks = [
            AttentionBlock(factory, f"refine.{i}", 2 * C, config.heads, config.mlp_ratio, config.pre_norm)
            for i in range(config.depth)
        ]
        self.proj = Linear(factory, "proj", 2 * C, C)
        self.cross = MultiHeadAttention(factory, "cross", C, config.heads)
        self.decoders = ViewDecoders(factory, C)
        # 테스트용: True이면 cross-attention 출력 대신 현재 특징을 그대로 디코딩
        self.bypass_localization = False

    def anchor_tokens(self, batch: GraphBatch) -> Tensor:
        """[B, N, 2C] 정제된 앵커 토큰"""
        h = concat([self._const(batch.anchor_feature), self.encoder(self._const(batch.anchor_action))], axis=-1)
        for block in self.blocks:
            h = block(h, batch.anchor_mask)
        return h

    def forward(self, batch: GraphBatch) -> Tensor:
        if batch.max_anchors == 0 or np.any(batch.anchor_counts == 0):
            raise ShapeError("star 헤드는 샘플마다 앵커가 최소 1개 필요함")
        B, C = batch.size, self.dim
        f_c = self._const(batch.current_feature)
        if self.bypass_localization:
            return self.decoders(f_c)
        kv = self.proj(self.anchor_tokens(batch))
        q = f_c.reshape(B, 1, C)
        m = (q + self.cross(q, kv, batch.anchor_mask)).reshape(B, C)
        return self.decoders(m)


class ChainGraphHead(GraphHead):
    kind = ModelKind.CHAIN

    def __init__(self, config: ModelConfig, factory: ParamFactory):
        super().__init__(config, factory)
        C = self.dim
        self.encoder = ActionEncoder(
            factory, C, config.standardize_actions, config.action_scale_mm, config.action_scale_deg
        )
        self.blocks = [
            AttentionBlock(factory, f"chain.{i}", 2 * C, config.heads, config.mlp_ratio, config.pre_norm)
            for i in range(config.depth)
        ]
        self.proj = Linear(factory, "proj", 2 * C, C)
        self.decoders = ViewDecoders(factory, C)

    def forward(self, batch: GraphBatch) -> Tensor:
        N, C = batch.max_anchors, self.dim
        frames = np.concatenate([batch.anchor_feature, batch.current_feature[:, None, :]], axis=1)
        h = concat([self._const(frames), self.encoder(self._const(batch.chain_action))], axis=-1)
        table = sinusoidal_positions(N + 1, 2 * C, dtype=self.dtype)
        h = h + table[batch.chain_position]
        mask = batch.chain_mask
        for block in self.blocks:
            h = block(h, mask)
        return self.decoders(self.proj(h[:, N, :]))


class FullyConnectedGraphHead(GraphHead):
    kind = ModelKind.FC

    def __init__(self, config: ModelConfig, factory: ParamFactory):
        super().__init__(config, factory)
        C = self.dim
        self.encoder = ActionEncoder(
            factory, C, config.standardize_actions, config.action_scale_mm, config.action_scale_deg
        )
        self.blocks = [
            AttentionBlock(factory, f"fc.{i}", 2 * C, config.heads, config.mlp_ratio, config.pre_norm)
            for i in range(config.depth)
        ]
        self.proj = Linear(factory, "proj", 2 * C, C)
        self.decoders = ViewDecoders(factory, C)

    def forward(self, batch: GraphBatch) -> Tensor:
        N = batch.max_anchors
        frames = np.concatenate([batch.anchor_feature, batch.current_feature[:, None, :]], axis=1)
        actions = np.concatenate([batch.anchor_action, np.zeros((batch.size, 1, 6))], axis=1)
        h = concat([self._const(frames), self.encoder(self._const(actions))], axis=-1)
        mask = batch.chain_mask
        for block in self.blocks:
            h = block(h, mask)
        return self.decoders(self.proj(h[:, N, :]))


HEAD_TYPES: Dict[ModelKind, type] = {
    ModelKind.STAR: StarGraphHead,
    ModelKind.SINGLE: SingleFrameHead,
    ModelKind.CHAIN: ChainGraphHead,
    ModelKind.FC: FullyConnectedGraphHead,
}


def build_head(config: ModelConfig, seed: int, dtype=np.float32) -> GraphHead:
    """설정과 시드로 헤드 생성. 같은 이름의 파라미터는 헤드 종류와 무관하게 같은 초기값."""
    head = HEAD_TYPES[ModelKind(config.kind)](config, ParamFactory(seed, dtype))
    logger.debug(f"헤드 생성: {head.kind.value}, 파라미터 {head.num_parameters()}개")
    return head


def star_parameter_count(C: int, depth: int = 2, mlp_ratio: int = 2, pre_norm: bool = False) -> int:
    """
    star 헤드 파라미터 수 (헤드 수와 무관):
        인코더 7C
        + depth·[4(w²+w) + 2r·w² + r·w + w (+4w pre_norm)],  w = 2C
        + 투영 2C² + C
        + cross-attention 4(C²+C)
        + 디코더 10(C² + 7C + 6)
    """
    w, r = 2 * C, mlp_ratio
    block = 4 * (w * w + w) + 2 * r * w * w + r * w + w + (4 * w if pre_norm else 0)
    return 7 * C + depth * block + (2 * C * C + C) + 4 * (C * C + C) + NUM_VIEWS * (C * C + 7 * C + 6)


# ---------------------------------------------------------------------------
# 단일 샘플 함수형 래퍼
# ---------------------------------------------------------------------------


def _to_actions(pred: np.ndarray) -> List[Action6]:
    return [Action6.from_array(row) for row in pred[0]]


def _single_set(
    current_feature: np.ndarray,
    anchor_features: np.ndarray,
    anchor_actions: np.ndarray,
    chain_actions: Optional[np.ndarray] = None,
) -> GraphBatch:
    n = len(anchor_features)
    current_feature = np.asarray(current_feature, dtype=np.float64)
    anchors = AnchorSet(
        scan_id="",
        current_idx=n,
        indices=list(range(n)),
        current_feature=current_feature,
        anchor_features=np.asarray(anchor_features, dtype=np.float64).reshape(n, current_feature.shape[0]),
        anchor_actions=np.asarray(anchor_actions, dtype=np.float64).reshape(n, 6),
        chain_actions=np.zeros((n + 1, 6)) if chain_actions is None else np.asarray(chain_actions, dtype=np.float64),
    )
    return collate_anchor_sets([anchors])


def star_forward(model: StarGraphHead, anchors: AnchorSet) -> List[Action6]:
    """뷰 0..9 순서의 10개 예측 동작"""
    return _to_actions(model.predict(collate_anchor_sets([anchors])))


def single_forward(model: SingleFrameHead, current_feature: np.ndarray) -> List[Action6]:
    batch = _single_set(current_feature, np.zeros((0, len(current_feature))), np.zeros((0, 6)))
    return _to_actions(model.predict(batch))


def chain_forward(
    model: ChainGraphHead,
    ordered_features: np.ndarray,
    inter_frame_actions: np.ndarray,
    current_feature: np.ndarray,
) -> List[Action6]:
    """
    ordered_features: [n, C] 시간순 과거 프레임 특징
    inter_frame_actions: [n + 1, 6] 토큰별 이전 → 자신 동작 (첫 행 0, 마지막 행은 마지막 과거 → 현재)
    """
    n = len(ordered_features)
    if np.shape(inter_frame_actions) != (n + 1, 6):
        raise ShapeError(f"chain 동작은 [{n + 1}, 6] 이어야 함: {np.shape(inter_frame_actions)}")
    batch = _single_set(current_feature, ordered_features, np.zeros((n, 6)), inter_frame_actions)
    return _to_actions(model.predict(batch))


def fc_forward(
    model: FullyConnectedGraphHead,
    features: np.ndarray,
    actions_to_frames: np.ndarray,
    current_feature: np.ndarray,
) -> List[Action6]:
    """features: [n, C], actions_to_frames: [n, 6] 현재 → 각 과거 프레임"""
    return _to_actions(model.predict(_single_set(current_feature, features, actions_to_frames)))


def predict_anchor_sets(model: GraphHead, sets: Sequence[AnchorSet]) -> np.ndarray:
    """[B, 10, 6] 예측"""
    return model.predict(collate_anchor_sets(sets))
