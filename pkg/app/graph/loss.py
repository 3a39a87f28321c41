"""
다중 뷰 Smooth L1 손실

뷰별 6성분(mm, 래핑된 deg)을 같은 가중치로 두고, 라벨이 있는 뷰에 대해 평균.
"""

from typing import Optional, Sequence

import numpy as np

from app.autograd import functional as F
from app.autograd.tensor import Tensor, constant
from app.core.exceptions import ShapeError
from app.models.schemas import NUM_VIEWS
from app.utils.pose_geometry import Action6


def _wrapped_targets(pred: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """pred − target의 회전 성분이 [-180, 180)에 오도록 회전 라벨을 360의 배수만큼 이동"""
    target = np.array(labels, dtype=pred.dtype, copy=True)
    delta = pred[..., 3:] - target[..., 3:]
    target[..., 3:] += 360.0 * np.floor((delta + 180.0) / 360.0)
    return target


def multi_view_loss(
    pred: Tensor,
    labels: np.ndarray,
    label_mask: Optional[np.ndarray] = None,
    beta: float = 1.0,
) -> Tensor:
    """
    Args:
        pred: [B, 10, 6] 예측
        labels: [B, 10, 6] 정답 동작
        label_mask: [B, 10] 라벨 존재 여부 (None이면 전부)

    Returns:
        스칼라 텐서: Σ mask·smoothL1 / (6·라벨 수)
    """
    labels = np.asarray(labels)
    if pred.shape != labels.shape or pred.shape[-2:] != (NUM_VIEWS, 6):
        raise ShapeError(f"손실 입력 shape 불일치: pred {pred.shape}, labels {labels.shape}")
    mask = np.ones(pred.shape[:-1], dtype=bool) if label_mask is None else np.asarray(label_mask, dtype=bool)
    if mask.shape != pred.shape[:-1]:
        raise ShapeError(f"라벨 마스크 shape {mask.shape} != {pred.shape[:-1]}")
    count = int(mask.sum())
    if count == 0:
        raise ShapeError("라벨이 있는 뷰가 없음")

    target = constant(_wrapped_targets(pred.data, labels))
    per_element = F.smooth_l1_elementwise(pred - target, beta)
    weights = mask[..., None].astype(pred.dtype)
    return (per_element * weights).sum() * (1.0 / (6.0 * count))


def multi_view_loss_actions(
    predictions: Sequence[Action6],
    labels: Sequence[Action6],
    mask: Optional[Sequence[bool]] = None,
    beta: float = 1.0,
) -> float:
    """Action6 목록(뷰 0..9) 버전"""
    pred = np.stack([a.as_array() for a in predictions])[None]
    gt = np.stack([a.as_array() for a in labels])[None]
    m = None if mask is None else np.asarray(mask, dtype=bool)[None]
    return multi_view_loss(constant(pred), gt, m, beta).item()
