"""
신경망 빌딩 블록

- Module: 파라미터를 선언 순서대로 노출하는 기반 클래스
- ParamFactory: 이름 기반 시드 스트림으로 결정적 초기화
- Linear / LayerNorm / FeedForward / MultiHeadAttention / AttentionBlock
"""

import math
from typing import Iterator, List, Optional, Tuple

import numpy as np

from app.autograd import functional as F
from app.autograd.tensor import Parameter, Tensor
from app.core.exceptions import ShapeError
from app.utils.rng import stream

MASK_BIAS = -1e9


class ParamFactory:
    """
    파라미터 생성기.
    각 파라미터는 (seed, 파라미터 이름) 스트림에서 U(−1/√fan_in, 1/√fan_in)로 초기화되므로
    생성 순서가 바뀌어도 같은 이름은 같은 값을 가짐.
    """

    def __init__(self, seed: int, dtype=np.float32):
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)

    def uniform(self, name: str, shape: Tuple[int, ...], fan_in: int) -> Parameter:
        bound = 1.0 / math.sqrt(max(fan_in, 1))
        rng = stream(self.seed, "param", name)
        values = rng.uniform(-bound, bound, size=shape)
        return Parameter(values.astype(self.dtype), name=name)

    def constant(self, name: str, shape: Tuple[int, ...], value: float) -> Parameter:
        return Parameter(np.full(shape, value, dtype=self.dtype), name=name)


class Module:
    """선언 순서대로 하위 모듈과 파라미터를 순회하는 기반 클래스"""

    def named_parameters(self) -> Iterator[Tuple[str, Parameter]]:
        seen = set()
        for value in vars(self).values():
            for param in _iter_params(value):
                if id(param) not in seen:
                    seen.add(id(param))
                    yield param.name, param

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


def _iter_params(value) -> Iterator[Parameter]:
    if isinstance(value, Parameter):
        yield value
    elif isinstance(value, Module):
        for _, p in value.named_parameters():
            yield p
    elif isinstance(value, (list, tuple)):
        for item in value:
            yield from _iter_params(item)


class Linear(Module):
    def __init__(self, factory: ParamFactory, name: str, in_dim: int, out_dim: int):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = factory.uniform(f"{name}.weight", (in_dim, out_dim), fan_in=in_dim)
        self.bias = factory.uniform(f"{name}.bias", (out_dim,), fan_in=in_dim)

    def __call__(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, factory: ParamFactory, name: str, dim: int, eps: float = 1e-5):
        self.eps = eps
        self.gamma = factory.constant(f"{name}.gamma", (dim,), 1.0)
        self.beta = factory.constant(f"{name}.beta", (dim,), 0.0)

    def __call__(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gamma, self.beta, self.eps)


class FeedForward(Module):
    """Linear → GELU → Linear"""

    def __init__(self, factory: ParamFactory, name: str, dim: int, hidden: int):
        self.fc1 = Linear(factory, f"{name}.fc1", dim, hidden)
        self.fc2 = Linear(factory, f"{name}.fc2", hidden, dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(F.gelu(self.fc1(x)))


class MultiHeadAttention(Module):
    """
    Q/K/V/출력 투영을 가진 scaled dot-product 멀티헤드 어텐션.
    위치 인코딩은 더하지 않음. 입력은 [n, C] 또는 [B, n, C].
    key_mask: [B, nk] bool, True인 키만 참조.
    """

    def __init__(self, factory: ParamFactory, name: str, dim: int, heads: int):
        if heads < 1 or dim % heads != 0:
            raise ShapeError(f"어텐션 폭 {dim}은 헤드 수 {heads}로 나누어떨어져야 함")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.q = Linear(factory, f"{name}.q", dim, dim)
        self.k = Linear(factory, f"{name}.k", dim, dim)
        self.v = Linear(factory, f"{name}.v", dim, dim)
        self.o = Linear(factory, f"{name}.o", dim, dim)

    def _split_heads(self, x: Tensor) -> Tensor:
        b, n, _ = x.shape
        return x.reshape(b, n, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def attention_weights(
        self, query: Tensor, key: Tensor, key_mask: Optional[np.ndarray] = None
    ) -> Tensor:
        """[B, heads, nq, nk] 어텐션 가중치"""
        q = self._split_heads(self.q(query))
        k = self._split_heads(self.k(key))
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(self.head_dim))
        if key_mask is not None:
            bias = np.where(np.asarray(key_mask, dtype=bool), 0.0, MASK_BIAS).astype(scores.dtype)
            scores = scores + bias[:, None, None, :]
        return F.softmax(scores, axis=-1)

    def __call__(
        self,
        query: Tensor,
        key_value: Tensor,
        key_mask: Optional[np.ndarray] = None,
    ) -> Tensor:
        squeeze = query.ndim == 2
        if squeeze:
            query = query.reshape(1, *query.shape)
            key_value = key_value.reshape(1, *key_value.shape)
            if key_mask is not None:
                key_mask = np.asarray(key_mask, dtype=bool).reshape(1, -1)
        if query.shape[-1] != self.dim or key_value.shape[-1] != self.dim:
            raise ShapeError(
                f"어텐션 입력 폭 불일치: query {query.shape}, key/value {key_value.shape}, dim {self.dim}"
            )
        if key_value.shape[1] < 1:
            raise ShapeError("어텐션: 키가 최소 1개 필요함")

        weights = self.attention_weights(query, key_value, key_mask)
        v = self._split_heads(self.v(key_value))
        b, nq = query.shape[0], query.shape[1]
        merged = (weights @ v).transpose(0, 2, 1, 3).reshape(b, nq, self.dim)
        out = self.o(merged)
        return out.reshape(nq, self.dim) if squeeze else out


class AttentionBlock(Module):
    """
    잔차 연결을 가진 self-attention 블록:
        x = x + Attn(N1(x)),  x = x + FFN(N2(x))
    pre_norm=False 이면 N1, N2는 항등.
    """

    def __init__(
        self,
        factory: ParamFactory,
        name: str,
        dim: int,
        heads: int,
        mlp_ratio: int = 2,
        pre_norm: bool = False,
    ):
        self.attn = MultiHeadAttention(factory, f"{name}.attn", dim, heads)
        self.ffn = FeedForward(factory, f"{name}.ffn", dim, dim * mlp_ratio)
        self.pre_norm = pre_norm
        self.norms: List[LayerNorm] = (
            [LayerNorm(factory, f"{name}.norm1", dim), LayerNorm(factory, f"{name}.norm2", dim)]
            if pre_norm
            else []
        )

    def __call__(self, x: Tensor, key_mask: Optional[np.ndarray] = None) -> Tensor:
        h = self.norms[0](x) if self.pre_norm else x
        x = x + self.attn(h, h, key_mask)
        h = self.norms[1](x) if self.pre_norm else x
        return x + self.ffn(h)


def sinusoidal_positions(length: int, dim: int, dtype=np.float64) -> np.ndarray:
    """[length, dim] 사인/코사인 위치 인코딩"""
    positions = np.arange(length, dtype=np.float64)[:, None]
    rates = np.exp(-math.log(10000.0) * (np.arange(0, dim, 2, dtype=np.float64) / dim))
    table = np.zeros((length, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates[: dim // 2])
    return table.astype(dtype)


__all__ = [
    "AttentionBlock",
    "FeedForward",
    "LayerNorm",
    "Linear",
    "MASK_BIAS",
    "Module",
    "MultiHeadAttention",
    "ParamFactory",
    "sinusoidal_positions",
]
