"""
스캔 → 지도학습 샘플 변환

현재 프레임 t_c마다:
1. 후보 풀 = t_c 이전 프레임 중 타깃 유사 프레임(제외 규칙)을 뺀 것
2. 풀에서 L−1개 앵커 샘플링 (프레임별 파생 시드)
3. 10개 뷰 라벨 a_{t_c→t_k} 계산
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import ConfigError, ValidationFailure
from app.graph.anchors import build_anchor_set
from app.graph.batch import GraphBatch, collate_anchor_sets
from app.models.config_models import DatasetConfig, ExclusionConfig, ExclusionMode, SamplerConfig
from app.models.scan_models import ScanTrajectory
from app.models.schemas import NUM_VIEWS, CorpusManifest, SplitFile
from app.services.sampling_service import cosine_to_many, near_target_mask, sample_anchors
from app.utils.pose_geometry import Pose6, pose_distance, relative_actions_batch
from app.utils.rng import stream
from app.vector_stores.feature_provider import FeatureProvider

logger = logging.getLogger(__name__)


@dataclass
class Sample:
    """학습/평가 샘플 하나. 앵커는 인덱스로만 보관하고 특징은 제공자에서 다시 조회."""

    scan_id: str
    current_idx: int
    pool: List[int]
    anchors: List[int]
    labels: np.ndarray  # [10, 6]
    label_mask: np.ndarray = field(default_factory=lambda: np.ones(NUM_VIEWS, dtype=bool))


@dataclass
class SampleBuildStats:
    built: int = 0
    skipped_history: int = 0
    skipped_empty_pool: int = 0


# ---------------------------------------------------------------------------
# 라벨과 제외 규칙
# ---------------------------------------------------------------------------


def compute_labels(scan: ScanTrajectory, current_idx: int) -> np.ndarray:
    """[10, 6] 현재 프레임에서 각 주석 프레임 포즈로 가는 상대 동작"""
    targets = scan.annotated_poses()
    return relative_actions_batch(scan.pos[current_idx], scan.rot[current_idx], targets[:, :3], targets[:, 3:])


def excluded_frames(scan: ScanTrajectory, exclusion: ExclusionConfig) -> np.ndarray:
    """[T] 라벨 뷰 집합(10개 주석 프레임) 중 하나와 유사하여 앵커가 될 수 없는 프레임"""
    mode = ExclusionMode(exclusion.mode)
    if mode == ExclusionMode.NONE:
        return np.zeros(scan.n_frames, dtype=bool)
    if mode == ExclusionMode.POSE:
        return near_target_mask(scan.pos, scan.rot, scan.annotated_poses(), exclusion.trans_mm, exclusion.rot_deg)
    annotated = [scan.annotations[k] for k in range(NUM_VIEWS)]
    mask = np.zeros(scan.n_frames, dtype=bool)
    for idx in annotated:
        mask |= cosine_to_many(scan.feat, scan.feat[idx]) >= exclusion.feature_cosine
    return mask


def eligible_frames(n_frames: int, min_history: int, frame_stride: int = 1) -> List[int]:
    return list(range(min_history, n_frames, frame_stride))


# ---------------------------------------------------------------------------
# 샘플 생성
# ---------------------------------------------------------------------------


def build_samples_with_stats(
    scan: ScanTrajectory,
    L: int,
    sampler: SamplerConfig,
    seed: int,
    exclusion: Optional[ExclusionConfig] = None,
    min_history: int = 8,
    frame_stride: int = 1,
) -> Tuple[List[Sample], SampleBuildStats]:
    if L < 1:
        raise ConfigError(f"L은 1 이상이어야 함 ({L})")
    exclusion = exclusion or sampler.exclude
    stats = SampleBuildStats(skipped_history=min(min_history, scan.n_frames))
    blocked = excluded_frames(scan, exclusion)
    allowed = np.flatnonzero(~blocked)

    samples: List[Sample] = []
    for t_c in eligible_frames(scan.n_frames, min_history, frame_stride):
        pool = allowed[allowed < t_c]
        if len(pool) == 0:
            stats.skipped_empty_pool += 1
            continue
        rng = stream(seed, "anchors", scan.scan_id, t_c)
        anchors = sample_anchors(
            sampler.strategy, pool, L - 1, rng, viewdist=scan.viewdist, current_idx=t_c, K=sampler.K
        )
        samples.append(
            Sample(
                scan_id=scan.scan_id,
                current_idx=t_c,
                pool=[int(i) for i in pool],
                anchors=sorted(int(i) for i in anchors),
                labels=compute_labels(scan, t_c),
            )
        )
    stats.built = len(samples)
    return samples, stats


def build_samples(
    scan: ScanTrajectory,
    L: int,
    sampler: SamplerConfig,
    seed: int,
    exclusion: Optional[ExclusionConfig] = None,
    min_history: int = 8,
    frame_stride: int = 1,
) -> List[Sample]:
    samples, stats = build_samples_with_stats(scan, L, sampler, seed, exclusion, min_history, frame_stride)
    logger.debug(
        f"{scan.scan_id}: 샘플 {stats.built}개 생성, 이력 부족 {stats.skipped_history}개, "
        f"빈 후보 풀 {stats.skipped_empty_pool}개 제외"
    )
    return samples


def build_dataset(
    scans: Sequence[ScanTrajectory],
    L: int,
    sampler: SamplerConfig,
    dataset: DatasetConfig,
    seed: int,
    frame_stride: Optional[int] = None,
) -> List[Sample]:
    """여러 스캔의 샘플을 스캔 순서대로 이어붙임"""
    stride = frame_stride or dataset.frame_stride
    out: List[Sample] = []
    for scan in scans:
        out.extend(build_samples(scan, L, sampler, seed, sampler.exclude, dataset.min_history, stride))
    logger.info(f"샘플 구성 완료: 스캔 {len(scans)}개 → 샘플 {len(out)}개 (L={L}, {sampler.strategy.value})")
    return out


# ---------------------------------------------------------------------------
# 분할과 배치
# ---------------------------------------------------------------------------


def split_by_subject(
    manifest_or_subjects: Union[CorpusManifest, Sequence[int]],
    val_fraction: float,
    seed: int,
) -> SplitFile:
    """
    피험자 단위 분할. 검증 피험자 수 = ceil(n·val_fraction)을 [1, n−1]로 제한.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError(f"val_fraction은 (0, 1) 범위여야 함 ({val_fraction})")
    if isinstance(manifest_or_subjects, CorpusManifest):
        subjects = manifest_or_subjects.subjects
    else:
        subjects = sorted(set(int(s) for s in manifest_or_subjects))
    n = len(subjects)
    if n < 2:
        raise ValidationFailure(f"피험자가 2명 이상 필요함 ({n}명)")

    n_val = min(max(math.ceil(n * val_fraction - 1e-9), 1), n - 1)
    order = stream(seed, "split").permutation(n)
    val = sorted(subjects[i] for i in order[:n_val])
    train = sorted(subjects[i] for i in order[n_val:])
    logger.info(f"피험자 분할: train {len(train)}명, val {len(val)}명 (seed={seed})")
    return SplitFile(train=train, val=val, seed=seed)


def batch_iter(samples: Sequence[Sample], batch_size: int, epoch_seed: int) -> Iterator[List[Sample]]:
    """에폭 시드로 섞은 순서의 배치. 마지막 부분 배치 유지."""
    if batch_size < 1:
        raise ConfigError(f"batch_size는 1 이상이어야 함 ({batch_size})")
    order = stream(epoch_seed, "batches").permutation(len(samples))
    for start in range(0, len(order), batch_size):
        yield [samples[int(i)] for i in order[start : start + batch_size]]


def nearest_frame(scan: ScanTrajectory, pose: Pose6) -> int:
    """mm + 래핑된 deg 포즈 거리가 최소인 프레임. 동점이면 이른 프레임."""
    if scan.n_frames == 0:
        raise ValidationFailure(f"{scan.scan_id}: 빈 스캔")
    d = pose_distance(scan.pos, scan.rot, np.asarray(pose.pos), np.asarray(pose.rot))
    return int(np.argmin(d))


def collate(
    samples: Sequence[Sample],
    scans: Mapping[str, ScanTrajectory],
    provider: FeatureProvider,
    dtype=np.float64,
) -> GraphBatch:
    """샘플의 앵커 인덱스를 제공자 특징으로 풀어 패딩된 배치 구성"""
    sets = [build_anchor_set(scans[s.scan_id], s.current_idx, s.anchors, provider) for s in samples]
    return collate_anchor_sets(
        sets, labels=[s.labels for s in samples], label_masks=[s.label_mask for s in samples], dtype=dtype
    )


def scans_by_id(scans: Sequence[ScanTrajectory]) -> Dict[str, ScanTrajectory]:
    return {scan.scan_id: scan for scan in scans}
