"""
미분 가능한 함수형 연산 모음

linear / gelu / softmax / layer_norm / smooth_l1.
원시 연산(gelu, softmax, layer_norm, smooth_l1)은 역전파 클로저를 직접 정의함.
"""

import math
from typing import Optional, Union

import numpy as np
from scipy.special import ndtr

from app.autograd.tensor import Tensor, constant
from app.core.exceptions import ShapeError

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """y = x·W + b  (x: [*, in], W: [in, out], b: [out])"""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: 입력 차원 {x.shape[-1]} != 가중치 입력 차원 {weight.shape[0]}")
    if x.ndim == 1:
        y = (x.reshape(1, -1) @ weight).reshape(weight.shape[1])
    else:
        y = x @ weight
    if bias is not None:
        if bias.shape != (weight.shape[1],):
            raise ShapeError(f"linear: bias shape {bias.shape} != ({weight.shape[1]},)")
        y = y + bias
    return y


def gelu(x: Tensor) -> Tensor:
    """정확한 GELU: x·Φ(x) (Φ는 표준정규 누적분포)"""
    cdf = ndtr(x.data)
    pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI

    def backward(out: Tensor):
        def _backward():
            x._accumulate(out.grad * (cdf + x.data * pdf))
        return _backward

    return Tensor._result((x.data * cdf).astype(x.dtype, copy=False), (x,), "gelu", backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """최댓값을 빼서 안정화한 softmax"""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(out: Tensor):
        def _backward():
            g = out.grad
            x._accumulate(y * (g - (g * y).sum(axis=axis, keepdims=True)))
        return _backward

    return Tensor._result(y, (x,), "softmax", backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """마지막 축 기준 LayerNorm"""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std

    def backward(out: Tensor):
        def _backward():
            g = out.grad
            x._accumulate(
                inv_std
                * (g - g.mean(axis=-1, keepdims=True) - xhat * (g * xhat).mean(axis=-1, keepdims=True))
            )
        return _backward

    normalized = Tensor._result(xhat.astype(x.dtype, copy=False), (x,), "layer_norm", backward)
    return normalized * gamma + beta


def smooth_l1_elementwise(diff: Tensor, beta: float = 1.0) -> Tensor:
    """원소별 Smooth L1: |d|<β 이면 0.5·d²/β, 아니면 |d|−0.5·β"""
    if beta <= 0:
        raise ShapeError(f"smooth_l1: beta는 양수여야 함 ({beta})")
    d = diff.data
    abs_d = np.abs(d)
    quadratic = abs_d < beta
    values = np.where(quadratic, 0.5 * d * d / beta, abs_d - 0.5 * beta)

    def backward(out: Tensor):
        def _backward():
            # 기울기 크기는 원소당 최대 1
            local = np.where(quadratic, d / beta, np.sign(d))
            diff._accumulate(out.grad * local)
        return _backward

    return Tensor._result(values.astype(diff.dtype, copy=False), (diff,), "smooth_l1", backward)


def smooth_l1(
    pred: Tensor,
    target: Union[Tensor, np.ndarray],
    beta: float = 1.0,
) -> Tensor:
    """원소 평균 Smooth L1 손실 (스칼라)"""
    target_t = target if isinstance(target, Tensor) else constant(np.asarray(target, dtype=pred.dtype))
    if pred.shape != target_t.shape:
        raise ShapeError(f"smooth_l1: shape 불일치 {pred.shape} vs {target_t.shape}")
    return smooth_l1_elementwise(pred - target_t, beta).mean()
