"""
스캔 궤적 인메모리 표현
"""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from app.models.schemas import NUM_VIEWS
from app.utils.pose_geometry import Pose6


def scan_id_for(subject: int, scan: int) -> str:
    return f"S{subject:03d}-{scan}"


@dataclass
class ScanTrajectory:
    """
    한 번의 스캔: 프레임별 (t, 포즈, 특징, 뷰 분포)와 10개 뷰의 주석 프레임.
    annotations는 뷰 ID → 프레임 인덱스.
    """

    subject: int
    scan: int
    t: np.ndarray  # [T] int64
    pos: np.ndarray  # [T, 3] mm
    rot: np.ndarray  # [T, 3] deg
    feat: np.ndarray  # [T, C]
    viewdist: np.ndarray  # [T, 10]
    annotations: Dict[int, int] = field(default_factory=dict)

    @property
    def scan_id(self) -> str:
        return scan_id_for(self.subject, self.scan)

    @property
    def n_frames(self) -> int:
        return int(self.t.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.feat.shape[1])

    def pose(self, index: int) -> Pose6:
        return Pose6(tuple(self.pos[index]), tuple(self.rot[index]))

    def annotated_index(self, view: int) -> int:
        return self.annotations[view]

    def annotated_poses(self) -> np.ndarray:
        """[10, 6] 뷰 순서대로 주석 프레임의 (pos, rot)"""
        idx = [self.annotations[k] for k in range(NUM_VIEWS)]
        return np.concatenate([self.pos[idx], self.rot[idx]], axis=1)

    def structurally_equal(self, other: "ScanTrajectory") -> bool:
        return (
            self.subject == other.subject
            and self.scan == other.scan
            and self.annotations == other.annotations
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.pos, other.pos)
            and np.array_equal(self.rot, other.rot)
            and np.array_equal(self.feat, other.feat)
            and np.array_equal(self.viewdist, other.viewdist)
        )
