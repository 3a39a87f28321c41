"""
액션 인코더 A_φ: 6-DOF 상대 동작 → C차원 특징
"""

from typing import Optional

import numpy as np

from app.autograd.layers import Linear, Module, ParamFactory
from app.autograd.tensor import Tensor, constant, no_grad
from app.utils.pose_geometry import Action6


class ActionEncoder(Module):
    """
    f^a = W·[dpos; drot] + b.
    기본은 mm/deg 원 단위 입력. standardize=True 이면 (scale_mm, scale_deg)로 나눈 뒤 투영.
    """

    def __init__(
        self,
        factory: ParamFactory,
        feature_dim: int,
        standardize: bool = False,
        scale_mm: float = 50.0,
        scale_deg: float = 45.0,
        name: str = "action_encoder",
    ):
        self.linear = Linear(factory, name, 6, feature_dim)
        self.standardize = standardize
        self.scale = np.array([scale_mm] * 3 + [scale_deg] * 3, dtype=np.float64)
        self.dtype = factory.dtype

    def __call__(self, actions: Tensor) -> Tensor:
        x = actions
        if self.standardize:
            x = x * (1.0 / self.scale).astype(x.dtype)
        return self.linear(x)


def encode_action(encoder: ActionEncoder, action: Action6, dtype: Optional[np.dtype] = None) -> np.ndarray:
    """단일 동작 인코딩 (기울기 기록 없음)"""
    with no_grad():
        x = constant(action.as_array().astype(dtype or encoder.dtype))
        return encoder(x).data.copy()
