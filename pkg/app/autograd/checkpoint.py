"""
모델 체크포인트 바이너리 컨테이너

레이아웃 (모두 little-endian):
    magic        7 bytes   b"USTAR01"
    header_len   u32
    header       JSON (utf-8): {"config_digest", "model", ...}
    count        u32
    반복 count회:
        name_len u16, name utf-8
        rank     u8, dims u32 × rank
        dtype    u8 (0 = float32, 1 = float64)
        values   raw little-endian
"""

import json
import logging
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple, Union

import numpy as np

from app.core.exceptions import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"USTAR01"

_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def save_checkpoint(
    path: Union[str, Path],
    params: Iterable[Tuple[str, np.ndarray]],
    header: Dict[str, Any],
) -> Path:
    """이름 있는 파라미터 배열들을 헤더와 함께 기록"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    items = [(name, np.asarray(arr)) for name, arr in params]
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    chunks = [MAGIC, struct.pack("<I", len(header_bytes)), header_bytes, struct.pack("<I", len(items))]
    for name, arr in items:
        if arr.dtype not in _DTYPE_CODES:
            raise CheckpointError(f"지원하지 않는 dtype: {name} ({arr.dtype})")
        code = _DTYPE_CODES[arr.dtype]
        name_bytes = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(struct.pack("<B", code))
        chunks.append(np.ascontiguousarray(arr, dtype=_CODE_DTYPES[code]).tobytes())

    path.write_bytes(b"".join(chunks))
    logger.info(f"체크포인트 저장: {path} (파라미터 {len(items)}개)")
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise CheckpointError(
                f"체크포인트가 잘려 있음: {self.path} (offset {self.offset}, 필요 {size} bytes)"
            )
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(
    path: Union[str, Path],
    expected_digest: Optional[str] = None,
) -> Tuple[Dict[str, Any], "OrderedDict[str, np.ndarray]"]:
    """(header, 이름 → 배열) 반환. expected_digest가 주어지면 헤더와 대조."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"체크포인트 파일이 없음: {path}", details={"path": str(path)})

    reader = _Reader(path.read_bytes(), path)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"체크포인트 magic 불일치: {path}")

    (header_len,) = reader.unpack("<I")
    try:
        header = json.loads(reader.take(header_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"체크포인트 헤더 파싱 실패: {path}: {e}") from e

    (count,) = reader.unpack("<I")
    params: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<B")
        dims = reader.unpack(f"<{rank}I") if rank else ()
        (code,) = reader.unpack("<B")
        if code not in _CODE_DTYPES:
            raise CheckpointError(f"알 수 없는 dtype 코드 {code}: {name}")
        dtype = _CODE_DTYPES[code]
        size = int(np.prod(dims)) if rank else 1
        raw = reader.take(size * dtype.itemsize)
        params[name] = np.frombuffer(raw, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))

    if reader.offset != len(reader.data):
        raise CheckpointError(f"체크포인트 끝에 알 수 없는 데이터: {path}")

    if expected_digest is not None and header.get("config_digest") != expected_digest:
        raise CheckpointError(
            "체크포인트 설정 digest 불일치",
            details={"expected": expected_digest, "found": header.get("config_digest")},
        )
    return header, params
