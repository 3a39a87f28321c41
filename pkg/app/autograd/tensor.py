"""
역방향 자동미분 텐서

numpy 배열을 감싸고, 연산마다 부모 노드와 역전파 클로저를 기록함.
backward()는 위상 정렬 후 역순으로 클로저를 호출해 기울기를 누적함.
"""

from contextlib import contextmanager
from contextvars import ContextVar
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import ShapeError

ArrayLike = Union[np.ndarray, float, int, Sequence]

# 스레드와 컨텍스트마다 독립
_grad_enabled: ContextVar[bool] = ContextVar("grad_enabled", default=True)


@contextmanager
def no_grad() -> Iterator[None]:
    """그래프를 기록하지 않는 구간 (평가용)"""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


def _to_array(data: ArrayLike, dtype=None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if dtype is None and not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    return arr


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """브로드캐스트된 기울기를 원래 shape로 합산"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """값, 기울기, 그리고 그 값을 만든 연산을 기억하는 그래프 노드"""

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        _children: Tuple["Tensor", ...] = (),
        _op: str = "",
        dtype=None,
    ):
        self.data: np.ndarray = _to_array(data, dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._prev: Tuple["Tensor", ...] = _children
        self._backward: Optional[Callable[[], None]] = None
        self._op = _op

    # ------------------------------------------------------------------
    # 기본 속성
    # ------------------------------------------------------------------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op='{self._op}')"

    # ------------------------------------------------------------------
    # 그래프 구성 헬퍼
    # ------------------------------------------------------------------
    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad = self.grad + grad

    @staticmethod
    def _result(
        data: np.ndarray,
        parents: Tuple["Tensor", ...],
        op: str,
        backward: Callable[["Tensor"], Callable[[], None]],
    ) -> "Tensor":
        """부모 중 하나라도 기울기가 필요하면 역전파 클로저를 연결"""
        needs_grad = _grad_enabled.get() and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=needs_grad, _op=op)
        if needs_grad:
            out._prev = parents
            out._backward = backward(out)
        return out

    def _wrap(self, other: ArrayLike) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    # ------------------------------------------------------------------
    # 산술 연산
    # ------------------------------------------------------------------
    def __add__(self, other: ArrayLike) -> "Tensor":
        other = self._wrap(other)
        a, b = self, other

        def backward(out: "Tensor"):
            def _backward():
                if a.requires_grad:
                    a._accumulate(unbroadcast(out.grad, a.shape))
                if b.requires_grad:
                    b._accumulate(unbroadcast(out.grad, b.shape))
            return _backward

        return Tensor._result(a.data + b.data, (a, b), "+", backward)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return self + other

    def __neg__(self) -> "Tensor":
        a = self

        def backward(out: "Tensor"):
            def _backward():
                a._accumulate(-out.grad)
            return _backward

        return Tensor._result(-a.data, (a,), "neg", backward)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return self + (-self._wrap(other))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return self._wrap(other) + (-self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = self._wrap(other)
        a, b = self, other

        def backward(out: "Tensor"):
            def _backward():
                if a.requires_grad:
                    a._accumulate(unbroadcast(out.grad * b.data, a.shape))
                if b.requires_grad:
                    b._accumulate(unbroadcast(out.grad * a.data, b.shape))
            return _backward

        return Tensor._result(a.data * b.data, (a, b), "*", backward)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return self * other

    def __truediv__(self, other: Union[float, int]) -> "Tensor":
        if isinstance(other, Tensor):
            raise ShapeError("텐서 나눗셈은 지원하지 않음 (상수로만 나눌 수 있음)")
        return self * (1.0 / other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        other = self._wrap(other)
        a, b = self, other
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError(f"matmul은 2차원 이상이 필요함: {a.shape} @ {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul 내부 차원 불일치: {a.shape} @ {b.shape}")

        def backward(out: "Tensor"):
            def _backward():
                if a.requires_grad:
                    a._accumulate(unbroadcast(out.grad @ np.swapaxes(b.data, -1, -2), a.shape))
                if b.requires_grad:
                    b._accumulate(unbroadcast(np.swapaxes(a.data, -1, -2) @ out.grad, b.shape))
            return _backward

        return Tensor._result(a.data @ b.data, (a, b), "@", backward)

    # ------------------------------------------------------------------
    # 형태 연산
    # ------------------------------------------------------------------
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        try:
            data = a.data.reshape(shape)
        except ValueError as e:
            raise ShapeError(f"reshape 실패: {a.shape} -> {shape}") from e

        def backward(out: "Tensor"):
            def _backward():
                a._accumulate(out.grad.reshape(a.shape))
            return _backward

        return Tensor._result(data, (a,), "reshape", backward)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        a = self
        inverse = tuple(np.argsort(axes))

        def backward(out: "Tensor"):
            def _backward():
                a._accumulate(np.transpose(out.grad, inverse))
            return _backward

        return Tensor._result(np.transpose(a.data, axes), (a,), "transpose", backward)

    def swapaxes(self, axis1: int, axis2: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[axis1], axes[axis2] = axes[axis2], axes[axis1]
        return self.transpose(tuple(axes))

    def __getitem__(self, index) -> "Tensor":
        a = self

        def backward(out: "Tensor"):
            def _backward():
                full = np.zeros_like(a.data)
                np.add.at(full, index, out.grad)
                a._accumulate(full)
            return _backward

        return Tensor._result(a.data[index], (a,), "getitem", backward)

    # ------------------------------------------------------------------
    # 축소 연산
    # ------------------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self

        def backward(out: "Tensor"):
            def _backward():
                grad = out.grad
                if axis is not None and not keepdims:
                    grad = np.expand_dims(grad, axis)
                a._accumulate(np.broadcast_to(grad, a.shape))
            return _backward

        return Tensor._result(a.data.sum(axis=axis, keepdims=keepdims), (a,), "sum", backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else np.prod(
            [self.shape[ax] for ax in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))

    # ------------------------------------------------------------------
    # 역전파
    # ------------------------------------------------------------------
    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        스칼라 손실에서 시작해 도달 가능한 모든 리프에 기울기를 누적.
        반복 호출 시 리프 기울기는 계속 누적됨.
        """
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward()는 스칼라에서만 호출 가능 (shape {self.shape})")
            grad = np.ones_like(self.data)
        topo = self._topological_order()
        # 중간 노드 기울기는 매 호출마다 새로 계산
        for node in topo:
            if node._backward is not None:
                node.grad = None
        self._accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward()


class Parameter(Tensor):
    """학습 가능한 텐서 + AdamW 상태 (1차/2차 모멘트, 스텝 수)"""

    def __init__(self, data: ArrayLike, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Parameter(name='{self.name}', shape={self.shape}, dtype={self.dtype})"


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """여러 텐서를 한 축으로 이어붙임"""
    if not tensors:
        raise ShapeError("concat: 빈 입력")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    parents = tuple(tensors)

    def backward(out: Tensor):
        def _backward():
            pieces = np.split(out.grad, splits, axis=axis)
            for t, g in zip(parents, pieces):
                if t.requires_grad:
                    t._accumulate(g)
        return _backward

    return Tensor._result(data, parents, "concat", backward)


def constant(data: ArrayLike, dtype=None) -> Tensor:
    """기울기를 추적하지 않는 상수 텐서"""
    return Tensor(data, requires_grad=False, dtype=dtype)
