"""
재현 가능한 난수 스트림

(전역 시드, 키...) 조합을 splitmix64로 섞어 64비트 키를 만들고,
카운터 기반 생성기(numpy Philox)에 넣어 독립 스트림을 만든다.
반복 순서와 무관하게 같은 키는 항상 같은 스트림을 준다.
"""

import hashlib
from typing import Union

import numpy as np

_MASK64 = (1 << 64) - 1

KeyPart = Union[int, str]


def splitmix64(x: int) -> int:
    """splitmix64 믹싱 함수 한 단계"""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _part_to_int(part: KeyPart) -> int:
    if isinstance(part, bool):
        return int(part)
    if isinstance(part, (int, np.integer)):
        return int(part) & _MASK64
    digest = hashlib.blake2b(str(part).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(seed: int, *parts: KeyPart) -> int:
    """시드와 키 조각들로부터 64비트 파생 시드를 만든다."""
    h = splitmix64(int(seed) & _MASK64)
    for part in parts:
        h = splitmix64(h ^ _part_to_int(part))
    return h


def stream(seed: int, *parts: KeyPart) -> np.random.Generator:
    """(seed, parts)로 식별되는 독립 난수 스트림"""
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, *parts)))
