"""
옵티마이저와 학습률 스케줄

- adamw_step: 분리된(decoupled) weight decay를 쓰는 AdamW 한 스텝
- AdamW: 파라미터 목록을 소유하고 스텝 수를 관리하는 얇은 래퍼
- cosine_lr: 워밍업 없는 코사인 감쇠
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from app.autograd.tensor import Parameter
from app.core.exceptions import ConfigError


@dataclass(frozen=True)
class AdamWHyperParams:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


def adamw_step(
    params: Sequence[Parameter],
    grads: Sequence[Optional[np.ndarray]],
    hyper: AdamWHyperParams,
    step: int,
) -> None:
    """
    모든 파라미터를 제자리(in-place) 갱신.
    grad가 None인 파라미터는 기울기 0으로 취급함.
    """
    if step < 1:
        raise ConfigError(f"AdamW step은 1 이상이어야 함 ({step})")
    if len(params) != len(grads):
        raise ConfigError(f"파라미터 수 {len(params)} != 기울기 수 {len(grads)}")

    b1, b2 = hyper.beta1, hyper.beta2
    bias1 = 1.0 - b1**step
    bias2 = 1.0 - b2**step
    for p, g in zip(params, grads):
        grad = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=p.data.dtype)
        if hyper.weight_decay:
            p.data *= p.data.dtype.type(1.0 - hyper.lr * hyper.weight_decay)
        p.m = b1 * p.m + (1.0 - b1) * grad
        p.v = b2 * p.v + (1.0 - b2) * grad * grad
        m_hat = p.m / bias1
        v_hat = p.v / bias2
        p.data -= (hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)).astype(p.data.dtype)
        p.step = step


class AdamW:
    """파라미터 목록에 대한 AdamW"""

    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 1e-4,
        betas: tuple = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = list(params)
        self.base = AdamWHyperParams(
            lr=lr, beta1=betas[0], beta2=betas[1], eps=eps, weight_decay=weight_decay
        )
        self.step_count = 0

    def step(self, lr: Optional[float] = None) -> None:
        self.step_count += 1
        hyper = self.base if lr is None else AdamWHyperParams(
            lr=lr,
            beta1=self.base.beta1,
            beta2=self.base.beta2,
            eps=self.base.eps,
            weight_decay=self.base.weight_decay,
        )
        adamw_step(self.params, [p.grad for p in self.params], hyper, self.step_count)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    """lr = base·0.5·(1 + cos(π·step/total)), 0 ≤ step ≤ total"""
    if total_steps <= 0:
        raise ConfigError(f"total_steps는 양수여야 함 ({total_steps})")
    if step < 0 or step > total_steps:
        raise ConfigError(f"step {step}이 [0, {total_steps}] 범위를 벗어남")
    return max(0.0, base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps)))
