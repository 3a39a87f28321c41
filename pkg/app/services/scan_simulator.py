"""
합성 심초음파 스캔 시뮬레이터

피험자별 잠재 해부 구조(10개 타깃 포즈 + 특징 맵)를 만들고,
시행착오형 탐색 궤적을 생성함. 모든 출력은 (seed, subject, scan)으로 결정됨.

특징 좌표 u는 해부 기준 포즈(origin)에서 본 상대 동작을 스케일한 값:
    f = M·cos(Ω·u + φ) + s·G·b(pose) + η,   b_k = exp(−d_k / τ_sig)
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.core.exceptions import SimulationError
from app.models.config_models import SimConfig
from app.models.scan_models import ScanTrajectory, scan_id_for
from app.models.schemas import NUM_VIEWS, PARASTERNAL_VIEWS
from app.utils.pose_geometry import (
    Pose6,
    apply_actions_batch,
    pose_distance,
    pose_distance_components,
    relative_actions_batch,
    wrap_angle,
)
from app.utils.rng import derive_seed, stream

logger = logging.getLogger(__name__)

# 해부 좌표계 안의 뷰 군집 중심 (pos mm, rot deg)
PARASTERNAL_CENTER = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
APICAL_CENTER = np.array([45.0, -20.0, 5.0, 0.0, 20.0, 40.0])
LAYOUT_SPREAD_MM = 15.0
LAYOUT_SPREAD_DEG = 30.0
LAYOUT_MAX_PITCH = 45.0
SUBJECT_JITTER_MM = 3.0
SUBJECT_JITTER_DEG = 3.0
ORIGIN_SPREAD_MM = 20.0
ORIGIN_SPREAD_DEG = 10.0
START_SPREAD_MM = 30.0
START_SPREAD_DEG = 25.0
PITCH_LIMIT = 80.0
LAYOUT_MAX_TRIES = 1000


@dataclass(frozen=True)
class LatentAnatomy:
    """피험자 한 명의 잠재 해부 구조와 특징/분류기 오라클 파라미터"""

    subject: int
    seed: int
    origin: Pose6
    targets: np.ndarray  # [10, 6] 월드 좌표 타깃 포즈
    omega: np.ndarray  # [m, 6]
    phase: np.ndarray  # [m]
    mixing: np.ndarray  # [C, m]
    signature: np.ndarray  # [C, 10]
    pos_scale: float
    rot_scale: float
    signature_scale: float
    signature_tau: float
    classifier_tau: float
    feature_noise: float

    @property
    def feature_dim(self) -> int:
        return int(self.mixing.shape[0])

    def target_pose(self, view: int) -> Pose6:
        return Pose6.from_array(self.targets[view])


# ---------------------------------------------------------------------------
# 해부 구조
# ---------------------------------------------------------------------------


def _separated(poses: np.ndarray, min_mm: float, min_deg: float) -> bool:
    """모든 쌍이 위치 ≥ min_mm 또는 회전 ≥ min_deg 로 떨어져 있는지"""
    for i in range(len(poses)):
        trans, rot = pose_distance_components(poses[i + 1 :, :3], poses[i + 1 :, 3:], poses[i, :3], poses[i, 3:])
        if np.any((trans < min_mm) & (rot < min_deg)):
            return False
    return True


def _canonical_layout(seed: int, config: SimConfig) -> np.ndarray:
    """
    모든 피험자가 공유하는 해부 좌표계 안의 10개 뷰 배치.
    뷰를 하나씩 놓으며, 피험자 지터를 더해도 분리 조건이 남도록 여유를 둔 거부 샘플링.
    """
    margin_mm = config.separation_mm + 2 * SUBJECT_JITTER_MM * math.sqrt(3)
    margin_deg = config.separation_deg + 2 * SUBJECT_JITTER_DEG * math.sqrt(3)
    rng = stream(seed, "layout")
    layout = np.zeros((NUM_VIEWS, 6))
    for view in range(NUM_VIEWS):
        center = PARASTERNAL_CENTER if view in PARASTERNAL_VIEWS else APICAL_CENTER
        for _ in range(LAYOUT_MAX_TRIES):
            candidate = center + np.concatenate(
                [
                    rng.uniform(-LAYOUT_SPREAD_MM, LAYOUT_SPREAD_MM, 3),
                    rng.uniform(-LAYOUT_SPREAD_DEG, LAYOUT_SPREAD_DEG, 3),
                ]
            )
            candidate[4] = float(np.clip(candidate[4], -LAYOUT_MAX_PITCH, LAYOUT_MAX_PITCH))
            if _separated(np.vstack([layout[:view], candidate[None, :]]), margin_mm, margin_deg):
                layout[view] = candidate
                break
        else:
            raise SimulationError(
                f"뷰 {view}의 기본 배치가 분리 조건을 만족하지 못함",
                details={"separation_mm": config.separation_mm, "separation_deg": config.separation_deg},
            )
    return layout


def generate_anatomy(seed: int, subject_id: int, config: SimConfig) -> LatentAnatomy:
    """
    (seed, subject_id)로부터 결정되는 잠재 해부 구조.
    타깃 분리 조건은 거부 샘플링으로 강제하고, 재시도 상한을 넘으면 SimulationError.
    """
    m, c = config.fourier_features, config.feature_dim

    shared = stream(seed, "appearance")
    omega_base = shared.normal(0.0, 1.0, size=(m, 6))
    phase_base = shared.uniform(0.0, 2.0 * math.pi, size=m)
    mixing = shared.normal(0.0, 1.0, size=(c, m)) / math.sqrt(m)
    signature = shared.normal(0.0, 1.0, size=(c, NUM_VIEWS))

    layout = _canonical_layout(seed, config)

    for attempt in range(config.max_retries):
        rng = stream(seed, "anatomy", subject_id, attempt)
        origin = Pose6(
            pos=tuple(rng.uniform(-ORIGIN_SPREAD_MM, ORIGIN_SPREAD_MM, 3)),
            rot=tuple(rng.uniform(-ORIGIN_SPREAD_DEG, ORIGIN_SPREAD_DEG, 3)),
        )
        jitter = np.concatenate(
            [
                rng.uniform(-SUBJECT_JITTER_MM, SUBJECT_JITTER_MM, (NUM_VIEWS, 3)),
                rng.uniform(-SUBJECT_JITTER_DEG, SUBJECT_JITTER_DEG, (NUM_VIEWS, 3)),
            ],
            axis=1,
        )
        local = layout + jitter
        pos, rot = apply_actions_batch(np.array(origin.pos), np.array(origin.rot), local)
        targets = np.concatenate([pos, rot], axis=1)
        if not _separated(targets, config.separation_mm, config.separation_deg):
            logger.debug(f"피험자 {subject_id}: 타깃 분리 실패, 재시도 {attempt + 1}")
            continue

        return LatentAnatomy(
            subject=subject_id,
            seed=seed,
            origin=origin,
            targets=targets,
            omega=omega_base + 0.05 * rng.normal(size=(m, 6)),
            phase=phase_base + 0.1 * rng.normal(size=m),
            mixing=mixing,
            signature=signature,
            pos_scale=config.pos_scale_mm,
            rot_scale=config.rot_scale_deg,
            signature_scale=config.signature_scale,
            signature_tau=config.signature_tau,
            classifier_tau=config.classifier_tau,
            feature_noise=config.feature_noise,
        )

    raise SimulationError(
        f"피험자 {subject_id}의 타깃 분리 조건을 {config.max_retries}회 안에 만족하지 못함",
        details={"subject": subject_id},
    )


# ---------------------------------------------------------------------------
# 오라클
# ---------------------------------------------------------------------------


def target_distances(anatomy: LatentAnatomy, pos: np.ndarray, rot: np.ndarray) -> np.ndarray:
    """[N, 10] 각 포즈에서 각 타깃까지의 가중 포즈 거리 (mm + deg)"""
    pos = np.asarray(pos, dtype=np.float64).reshape(-1, 3)
    rot = np.asarray(rot, dtype=np.float64).reshape(-1, 3)
    return pose_distance(
        pos[:, None, :], rot[:, None, :], anatomy.targets[None, :, :3], anatomy.targets[None, :, 3:]
    )


def frame_noise_seed(anatomy: LatentAnatomy, scan_seed: int, t: int) -> int:
    """프레임별 특징 노이즈 시드 (재시도 횟수와 무관)"""
    return derive_seed(anatomy.seed, "frame-noise", anatomy.subject, scan_seed, t)


def feature_oracle_batch(
    anatomy: LatentAnatomy,
    pos: np.ndarray,
    rot: np.ndarray,
    noise_seeds: Optional[List[int]] = None,
) -> np.ndarray:
    """[N, C] 포즈 결정적 특징. noise_seeds가 없으면 노이즈 없음."""
    pos = np.asarray(pos, dtype=np.float64).reshape(-1, 3)
    rot = np.asarray(rot, dtype=np.float64).reshape(-1, 3)
    rel = relative_actions_batch(np.array(anatomy.origin.pos), np.array(anatomy.origin.rot), pos, rot)
    u = np.concatenate([rel[:, :3] / anatomy.pos_scale, rel[:, 3:] / anatomy.rot_scale], axis=1)

    features = np.cos(u @ anatomy.omega.T + anatomy.phase) @ anatomy.mixing.T
    if anatomy.signature_scale > 0:
        proximity = np.exp(-target_distances(anatomy, pos, rot) / anatomy.signature_tau)
        features = features + anatomy.signature_scale * (proximity @ anatomy.signature.T)
    if noise_seeds is not None and anatomy.feature_noise > 0:
        if len(noise_seeds) != len(pos):
            raise SimulationError(f"노이즈 시드 수 {len(noise_seeds)} != 포즈 수 {len(pos)}")
        noise = np.stack(
            [np.random.Generator(np.random.Philox(key=s)).normal(size=anatomy.feature_dim) for s in noise_seeds]
        )
        features = features + anatomy.feature_noise * noise
    return features


def feature_oracle(anatomy: LatentAnatomy, pose: Pose6, noise_seed: Optional[int] = None) -> np.ndarray:
    """단일 포즈 특징 [C]"""
    seeds = None if noise_seed is None else [noise_seed]
    return feature_oracle_batch(anatomy, np.array(pose.pos), np.array(pose.rot), seeds)[0]


def classifier_oracle_batch(anatomy: LatentAnatomy, pos: np.ndarray, rot: np.ndarray) -> np.ndarray:
    """[N, 10] softmax(−d_k/τ)"""
    logits = -target_distances(anatomy, pos, rot) / anatomy.classifier_tau
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def classifier_oracle(anatomy: LatentAnatomy, pose: Pose6) -> np.ndarray:
    """단일 포즈 뷰 분포 [10]"""
    return classifier_oracle_batch(anatomy, np.array(pose.pos), np.array(pose.rot))[0]


# ---------------------------------------------------------------------------
# 궤적
# ---------------------------------------------------------------------------


@dataclass
class _WalkResult:
    pos: np.ndarray
    rot: np.ndarray
    annotations: Dict[int, int]
    pursuits: List[Tuple[int, int, float]]  # (시작 프레임, 캡처 프레임, 직선 스텝 수)


def _straight_steps(pos, rot, goal, config: SimConfig) -> float:
    trans, angle = pose_distance_components(pos, rot, goal[:3], goal[3:])
    return float(max(math.ceil(trans / config.step_mm), math.ceil(angle / config.step_deg), 1))


def _step_toward(pos, rot, goal, rng, config: SimConfig):
    delta_pos = goal[:3] - pos
    dist = float(np.linalg.norm(delta_pos))
    if dist > config.step_mm:
        delta_pos = delta_pos * (config.step_mm / dist)
    delta_rot = wrap_angle(goal[3:] - rot)
    angle = float(np.linalg.norm(delta_rot))
    if angle > config.step_deg:
        delta_rot = delta_rot * (config.step_deg / angle)
    new_pos = pos + delta_pos + rng.normal(0.0, config.noise_mm, 3)
    new_rot = wrap_angle(rot + delta_rot + rng.normal(0.0, config.noise_deg, 3))
    new_rot[1] = float(np.clip(new_rot[1], -PITCH_LIMIT, PITCH_LIMIT))
    return new_pos, new_rot


def _detour(anatomy: LatentAnatomy, goal_view: int, captured: List[int], rng, config: SimConfig) -> np.ndarray:
    """이미 찾은 뷰로 되돌아가거나 목표 주변을 배회하는 우회 지점"""
    if captured and rng.random() < 0.5:
        return anatomy.targets[captured[int(rng.integers(len(captured)))]].copy()
    goal = anatomy.targets[goal_view]
    offset = np.concatenate(
        [rng.uniform(-config.wander_mm, config.wander_mm, 3), rng.uniform(-config.wander_deg, config.wander_deg, 3)]
    )
    waypoint = goal + offset
    waypoint[3:] = wrap_angle(waypoint[3:])
    waypoint[4] = float(np.clip(waypoint[4], -PITCH_LIMIT, PITCH_LIMIT))
    return waypoint


def _walk(anatomy: LatentAnatomy, config: SimConfig, rng: np.random.Generator) -> Optional[_WalkResult]:
    start = np.concatenate(
        [rng.uniform(-START_SPREAD_MM, START_SPREAD_MM, 3), rng.uniform(-START_SPREAD_DEG, START_SPREAD_DEG, 3)]
    )
    pos0, rot0 = apply_actions_batch(np.array(anatomy.origin.pos), np.array(anatomy.origin.rot), start)
    pos, rot = pos0[0], rot0[0]

    order = [int(v) for v in rng.permutation(NUM_VIEWS)]
    annotations: Dict[int, int] = {}
    captured: List[int] = []
    pursuits: List[Tuple[int, int, float]] = []
    positions, rotations = [], []

    goal_view: Optional[int] = None
    waypoint: Optional[np.ndarray] = None
    pursuit_start = 0
    pursuit_steps = 0.0

    for t in range(config.frames):
        if t > 0:
            pos, rot = _step_toward(pos, rot, waypoint, rng, config)
        positions.append(pos.copy())
        rotations.append(rot.copy())

        trans, angle = pose_distance_components(pos, rot, anatomy.targets[:, :3], anatomy.targets[:, 3:])
        for view in np.flatnonzero((trans <= config.capture_mm) & (angle <= config.capture_deg)):
            view = int(view)
            if view not in annotations:
                annotations[view] = t
                captured.append(view)
                if view == goal_view:
                    pursuits.append((pursuit_start, t, pursuit_steps))
        if len(annotations) == NUM_VIEWS:
            return _WalkResult(np.array(positions), np.array(rotations), annotations, pursuits)

        if goal_view is None or goal_view in annotations:
            goal_view = next(v for v in order if v not in annotations)
            pursuit_start = t
            pursuit_steps = _straight_steps(pos, rot, anatomy.targets[goal_view], config)
            waypoint = None

        reached = waypoint is not None and _straight_steps(pos, rot, waypoint, config) <= 1
        if waypoint is None or reached:
            if rng.random() < config.backtrack_prob:
                waypoint = _detour(anatomy, goal_view, captured, rng, config)
            else:
                waypoint = anatomy.targets[goal_view].copy()
    return None


def generate_trajectory(anatomy: LatentAnatomy, config: SimConfig, scan_seed: int) -> ScanTrajectory:
    """
    타깃을 무작위 순서로 찾아가는 편향 랜덤 워크.
    프레임 예산 안에 10개 뷰를 모두 캡처하지 못하면 파생 시드로 재시도.
    """
    stats = generate_trajectory_with_stats(anatomy, config, scan_seed)
    return stats[0]


def generate_trajectory_with_stats(
    anatomy: LatentAnatomy, config: SimConfig, scan_seed: int
) -> Tuple[ScanTrajectory, List[Tuple[int, int, float]]]:
    """궤적과 함께 (추적 시작, 캡처 프레임, 직선 스텝 수) 목록을 반환"""
    for attempt in range(config.max_retries):
        rng = stream(anatomy.seed, "walk", anatomy.subject, scan_seed, attempt)
        result = _walk(anatomy, config, rng)
        if result is None:
            logger.debug(
                f"{scan_id_for(anatomy.subject, scan_seed)}: 프레임 예산 {config.frames} 초과, 재시도 {attempt + 1}"
            )
            continue

        n = len(result.pos)
        seeds = [frame_noise_seed(anatomy, scan_seed, t) for t in range(n)]
        feat = feature_oracle_batch(anatomy, result.pos, result.rot, seeds)
        viewdist = classifier_oracle_batch(anatomy, result.pos, result.rot)
        trajectory = ScanTrajectory(
            subject=anatomy.subject,
            scan=scan_seed,
            t=np.arange(n, dtype=np.int64),
            pos=result.pos,
            rot=result.rot,
            feat=feat,
            viewdist=viewdist,
            annotations=dict(sorted(result.annotations.items())),
        )
        return trajectory, result.pursuits

    raise SimulationError(
        f"{scan_id_for(anatomy.subject, scan_seed)}: {config.max_retries}회 재시도에도 10개 뷰를 모두 캡처하지 못함",
        details={"subject": anatomy.subject, "scan": scan_seed, "frames": config.frames},
    )


class ScanSimulator:
    """설정 하나로 해부 구조를 캐시하며 스캔을 생성하는 서비스"""

    def __init__(self, config: SimConfig):
        self.config = config
        self._anatomies: Dict[int, LatentAnatomy] = {}

    def anatomy(self, subject: int) -> LatentAnatomy:
        if subject not in self._anatomies:
            self._anatomies[subject] = generate_anatomy(self.config.seed, subject, self.config)
        return self._anatomies[subject]

    def scan(self, subject: int, scan: int) -> ScanTrajectory:
        trajectory = generate_trajectory(self.anatomy(subject), self.config, scan)
        logger.info(f"스캔 생성: {trajectory.scan_id} ({trajectory.n_frames} 프레임)")
        return trajectory

    def oracle_feature(self, subject: int, scan: int, pose: Pose6, t: int) -> np.ndarray:
        anatomy = self.anatomy(subject)
        return feature_oracle(anatomy, pose, frame_noise_seed(anatomy, scan, t))
