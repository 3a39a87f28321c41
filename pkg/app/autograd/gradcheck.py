"""
중앙 유한차분 기울기 검사

오차 척도는 파라미터 텐서별 스케일 상대 오차:
    max|analytic − numeric| / max(텐서 스케일, rel_floor·전체 스케일, floor)
텐서 스케일은 max(max|analytic|, max|numeric|), 전체 스케일은 모든 텐서에 대한 그 최댓값.
참 기울기가 0인 텐서(예: softmax 앞 키 편향)는 전체 스케일 대비 오차로 평가됨.
tensor_errors는 전체 스케일 하한 없이 텐서 자체 스케일로 나눈 오차 (기울기가 작은 텐서 확인용).
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from app.autograd.tensor import Parameter, Tensor, no_grad

logger = logging.getLogger(__name__)


@dataclass
class GradCheckReport:
    """파라미터별 상대 오차와 전체 최댓값"""

    errors: Dict[str, float] = field(default_factory=dict)
    tensor_errors: Dict[str, float] = field(default_factory=dict)
    checked_elements: int = 0

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    def worst(self) -> Optional[str]:
        if not self.errors:
            return None
        return max(self.errors, key=self.errors.get)

    def weak_tensors(self, tol: float) -> List[str]:
        """전체 스케일 기준으로는 통과하지만 자체 스케일 오차가 tol을 넘는 텐서"""
        return [
            name for name, err in self.tensor_errors.items() if err > tol and self.errors.get(name, 0.0) <= tol
        ]


def numeric_gradient(loss_fn: Callable[[], Tensor], param: Parameter, h: float = 1e-5) -> np.ndarray:
    """param의 모든 원소에 대한 중앙차분 기울기"""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        with no_grad():
            flat[i] = original + h
            plus = float(loss_fn().data)
            flat[i] = original - h
            minus = float(loss_fn().data)
        flat[i] = original
        out[i] = (plus - minus) / (2.0 * h)
    return grad


def _max_abs(arr: np.ndarray) -> float:
    return float(np.max(np.abs(arr), initial=0.0))


def relative_error(
    analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8, global_scale: float = 0.0
) -> float:
    scale = max(_max_abs(analytic), _max_abs(numeric), global_scale, floor)
    return _max_abs(analytic - numeric) / scale


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Parameter],
    h: float = 1e-5,
    rel_floor: float = 1e-3,
) -> GradCheckReport:
    """
    loss_fn()의 역전파 기울기와 유한차분 기울기를 비교.
    파라미터는 64비트여야 의미 있는 비교가 됨. 이름은 서로 달라야 함.
    """
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {p.name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for p in params}
    numeric = {p.name: numeric_gradient(loss_fn, p, h) for p in params}

    overall = max(
        [max(_max_abs(analytic[name]), _max_abs(numeric[name])) for name in analytic], default=0.0
    )
    report = GradCheckReport()
    for p in params:
        report.errors[p.name] = relative_error(
            analytic[p.name], numeric[p.name], global_scale=rel_floor * overall
        )
        report.tensor_errors[p.name] = relative_error(analytic[p.name], numeric[p.name])
        report.checked_elements += p.data.size

    logger.debug(
        f"기울기 검사 완료: 원소 {report.checked_elements}개, 최대 상대오차 {report.max_error:.3e} ({report.worst()}), "
        f"자체 스케일 최대 {max(report.tensor_errors.values(), default=0.0):.3e}"
    )
    return report
