"""
고정(frozen) 시각 특징 제공자

학습 중 비전 인코더는 고정되므로, 특징은 (scan_id, frame) 키로 조회되는 읽기 전용 벡터.
ScanFeatureProvider는 스캔 파일에 미리 계산된 특징을 보관함.
"""

import hashlib
import logging
from abc import ABC, abstractmethod
from typing import Dict, Iterable, Sequence

import numpy as np

from app.core.exceptions import FeatureLookupError
from app.models.scan_models import ScanTrajectory

logger = logging.getLogger(__name__)


class FeatureProvider(ABC):
    """(scan_id, frame_idx) → C차원 특징"""

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @abstractmethod
    def lookup(self, scan_id: str, frame_idx: int) -> np.ndarray: ...

    def lookup_many(self, scan_id: str, frame_indices: Sequence[int]) -> np.ndarray:
        """[n, C] 배열. 하나라도 없으면 부분 결과 없이 오류."""
        if len(frame_indices) == 0:
            return np.zeros((0, self.dim))
        return np.stack([self.lookup(scan_id, int(i)) for i in frame_indices])

    @abstractmethod
    def digest(self) -> str:
        """제공자 내용 전체의 sha256 (학습 전후 불변 확인용)"""


class ScanFeatureProvider(FeatureProvider):
    """스캔에 저장된 특징 배열을 읽기 전용으로 보관"""

    def __init__(self, scans: Iterable[ScanTrajectory]):
        self._features: Dict[str, np.ndarray] = {}
        dims = set()
        for scan in scans:
            arr = np.array(scan.feat, dtype=np.float64, copy=True)
            arr.setflags(write=False)
            self._features[scan.scan_id] = arr
            dims.add(arr.shape[1])
        if len(dims) > 1:
            raise FeatureLookupError(f"스캔 간 특징 차원이 다름: {sorted(dims)}")
        self._dim = dims.pop() if dims else 0
        logger.debug(f"특징 제공자 구성: 스캔 {len(self._features)}개, C={self._dim}")

    @property
    def dim(self) -> int:
        return self._dim

    def lookup(self, scan_id: str, frame_idx: int) -> np.ndarray:
        arr = self._features.get(scan_id)
        if arr is None:
            raise FeatureLookupError(f"알 수 없는 스캔: {scan_id}", details={"scan_id": scan_id})
        if not 0 <= frame_idx < arr.shape[0]:
            raise FeatureLookupError(
                f"{scan_id}에 프레임 {frame_idx}가 없음 (프레임 수 {arr.shape[0]})",
                details={"scan_id": scan_id, "frame": frame_idx},
            )
        return arr[frame_idx]

    def lookup_many(self, scan_id: str, frame_indices: Sequence[int]) -> np.ndarray:
        idx = np.asarray(frame_indices, dtype=np.int64)
        arr = self._features.get(scan_id)
        if arr is None:
            raise FeatureLookupError(f"알 수 없는 스캔: {scan_id}", details={"scan_id": scan_id})
        if idx.size and (idx.min() < 0 or idx.max() >= arr.shape[0]):
            raise FeatureLookupError(
                f"{scan_id}의 프레임 범위를 벗어난 인덱스가 있음", details={"scan_id": scan_id}
            )
        return arr[idx]

    def digest(self) -> str:
        h = hashlib.sha256()
        for scan_id in sorted(self._features):
            h.update(scan_id.encode("utf-8"))
            h.update(self._features[scan_id].tobytes())
        return h.hexdigest()
