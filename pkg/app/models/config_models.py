"""
실행(run) 단위 설정 스키마

RunConfig는 CLI의 모든 동사가 공유하는 하이퍼파라미터 트리.
키-값 설정 파일, --set 오버라이드, 플래그가 이 트리의 점 표기 키로 매핑됨.
"""

import hashlib
import json
from enum import Enum
from typing import Any, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.config import settings
from app.core.exceptions import ConfigError


class ModelKind(str, Enum):
    """헤드 종류"""

    STAR = "star"
    CHAIN = "chain"
    FC = "fc"
    SINGLE = "single"


class SamplerStrategy(str, Enum):
    """키프레임 샘플링 전략"""

    SEGMENTAL = "segmental"
    SEMANTIC = "semantic"
    UNIFORM = "uniform"


class ExclusionMode(str, Enum):
    """타깃 유사 프레임 제외 기준"""

    POSE = "pose"
    FEATURE = "feature"
    NONE = "none"


class Precision(str, Enum):
    FLOAT32 = "float32"
    FLOAT64 = "float64"


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", use_enum_values=False)


class PathsConfig(_Section):
    corpus: str = Field(default=settings.DEFAULT_CORPUS_DIR, description="코퍼스 디렉터리 (manifest.json 포함)")
    out: str = Field(default=settings.DEFAULT_OUTPUT_DIR, description="출력 디렉터리")
    checkpoint: Optional[str] = Field(default=None, description="체크포인트 경로 (기본: out/model.ckpt)")
    split: Optional[str] = Field(default=None, description="split 파일 경로 (기본: corpus/split.json)")


class SimConfig(_Section):
    """합성 스캔 시뮬레이터 설정"""

    seed: int = Field(default=settings.DEFAULT_SEED, description="시뮬레이터 전역 시드")
    subjects: int = Field(default=26, ge=1, description="피험자 수")
    scans_per_subject: int = Field(default=2, ge=1, description="피험자당 스캔 수")
    frames: int = Field(default=800, ge=20, description="스캔당 최대 프레임 수 (프레임 예산)")
    feature_dim: int = Field(default=64, ge=1, description="시각 특징 차원 C")
    fourier_features: int = Field(default=32, ge=1, description="랜덤 푸리에 특징 수 m")
    pos_scale_mm: float = Field(default=40.0, gt=0, description="특징 좌표 위치 스케일 σ_pos")
    rot_scale_deg: float = Field(default=40.0, gt=0, description="특징 좌표 회전 스케일 σ_rot")
    feature_noise: float = Field(default=0.05, ge=0, description="프레임별 특징 노이즈 표준편차")
    signature_scale: float = Field(default=1.0, ge=0, description="뷰 시그니처 항 가중치 (0이면 순수 푸리에 특징)")
    signature_tau: float = Field(default=10.0, gt=0, description="뷰 시그니처 근접도 온도")
    classifier_tau: float = Field(default=10.0, gt=0, description="분류기 오라클 softmax 온도")
    step_mm: float = Field(default=2.0, gt=0, description="스텝당 이동 거리 상한 (mm)")
    step_deg: float = Field(default=2.0, gt=0, description="스텝당 회전 상한 (deg)")
    noise_mm: float = Field(default=0.5, ge=0, description="탐색 노이즈 (mm)")
    noise_deg: float = Field(default=0.5, ge=0, description="탐색 노이즈 (deg)")
    backtrack_prob: float = Field(default=0.4, ge=0, le=1, description="목표 전환 시 우회 확률")
    wander_mm: float = Field(default=45.0, ge=0, description="우회 지점 최대 위치 편차")
    wander_deg: float = Field(default=25.0, ge=0, description="우회 지점 최대 회전 편차")
    capture_mm: float = Field(default=3.0, gt=0, description="캡처 위치 임계값")
    capture_deg: float = Field(default=3.0, gt=0, description="캡처 회전 임계값")
    separation_mm: float = Field(default=15.0, ge=0, description="타깃 간 최소 위치 분리")
    separation_deg: float = Field(default=15.0, ge=0, description="타깃 간 최소 회전 분리")
    max_retries: int = Field(default=20, ge=1, description="재시도 상한 (해부 구조/궤적)")


class ExclusionConfig(_Section):
    """타깃과 유사한 프레임을 후보에서 제외하는 규칙"""

    mode: ExclusionMode = Field(default=ExclusionMode.POSE, description="제외 기준")
    trans_mm: float = Field(default=5.0, ge=0, description="위치 임계값 (mm)")
    rot_deg: float = Field(default=5.0, ge=0, description="회전 임계값 (deg)")
    feature_cosine: float = Field(default=0.99, ge=-1, le=1, description="feature 모드 코사인 임계값")


class SamplerConfig(_Section):
    strategy: SamplerStrategy = Field(default=SamplerStrategy.SEMANTIC, description="샘플링 전략")
    K: int = Field(default=128, ge=1, description="semantic 샘플링 후보 집합 크기")
    seed: int = Field(default=settings.DEFAULT_SEED, description="학습용 샘플링 시드")
    exclude: ExclusionConfig = Field(default_factory=ExclusionConfig)


class ModelConfig(_Section):
    kind: ModelKind = Field(default=ModelKind.STAR, description="헤드 종류")
    L: int = Field(default=8, ge=1, description="그래프 크기 (앵커 L−1개 + 현재 프레임)")
    feature_dim: int = Field(default=64, ge=1, description="특징 차원 C")
    heads: int = Field(default=4, ge=1, description="어텐션 헤드 수")
    depth: int = Field(default=2, ge=1, description="self-attention 블록 수")
    mlp_ratio: int = Field(default=2, ge=1, description="블록 내부 MLP 확장 배율")
    pre_norm: bool = Field(default=False, description="블록 pre-LayerNorm 사용 여부")
    standardize_actions: bool = Field(default=False, description="액션 입력 표준화 (mm/deg 스케일)")
    action_scale_mm: float = Field(default=50.0, gt=0)
    action_scale_deg: float = Field(default=45.0, gt=0)

    @model_validator(mode="after")
    def _check_widths(self) -> "ModelConfig":
        if self.feature_dim % self.heads != 0:
            raise ValueError(f"feature_dim {self.feature_dim}은 heads {self.heads}로 나누어떨어져야 함")
        if self.kind == ModelKind.STAR and self.L < 2:
            raise ValueError("star 헤드는 L ≥ 2가 필요함 (앵커 없는 경우는 single 사용)")
        return self


class TrainConfig(_Section):
    batch_size: int = Field(default=128, ge=1)
    learning_rate: float = Field(default=1e-4, gt=0)
    epochs: int = Field(default=5, ge=1)
    weight_decay: float = Field(default=0.01, ge=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    precision: Precision = Field(default=Precision.FLOAT32)
    seed: int = Field(default=settings.DEFAULT_SEED, description="파라미터 초기화/셔플 시드")
    log_every: int = Field(default=50, ge=1, description="N 스텝마다 디버그 로그")


class DatasetConfig(_Section):
    val_fraction: float = Field(default=0.23, gt=0, lt=1)
    split_seed: int = Field(default=settings.DEFAULT_SEED)
    min_history: int = Field(default=8, ge=1, description="샘플이 되기 위한 최소 이전 프레임 수")
    frame_stride: int = Field(default=1, ge=1, description="현재 프레임 간격 (1이면 모든 적격 프레임)")
    eval_seed: int = Field(default=12345, description="평가용 샘플링 시드 (학습 시드와 독립)")
    eval_stride: int = Field(default=1, ge=1)


class SweepConfig(_Section):
    L_list: List[int] = Field(default_factory=lambda: [2, 4, 6, 8, 12, 16])
    models: List[ModelKind] = Field(default_factory=lambda: [ModelKind.STAR])
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    ablate_models: List[ModelKind] = Field(
        default_factory=lambda: [ModelKind.SINGLE, ModelKind.CHAIN, ModelKind.FC, ModelKind.STAR]
    )
    ablate_samplers: List[SamplerStrategy] = Field(
        default_factory=lambda: [SamplerStrategy.SEGMENTAL, SamplerStrategy.SEMANTIC]
    )
    workers: int = Field(default=1, ge=1, description="하위 실행 프로세스 수")
    retrieve_stride: int = Field(default=25, ge=1, description="retrieve 동사의 현재 프레임 간격")

    split_lists = field_validator("L_list", "models", "seeds", "ablate_models", "ablate_samplers", mode="before")(
        _split_list
    )

    @field_validator("L_list")
    @classmethod
    def _positive_lengths(cls, value: List[int]) -> List[int]:
        if not value or any(v < 1 for v in value):
            raise ValueError("L_list는 1 이상의 값으로 이루어진 비어 있지 않은 목록이어야 함")
        return value


class RunConfig(_Section):
    """CLI 한 번의 실행을 완전히 기술하는 설정"""

    paths: PathsConfig = Field(default_factory=PathsConfig)
    sim: SimConfig = Field(default_factory=SimConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)

    @property
    def checkpoint_path(self) -> str:
        return self.paths.checkpoint or f"{self.paths.out}/model.ckpt"

    @property
    def split_path(self) -> str:
        return self.paths.split or f"{self.paths.corpus}/split.json"

    def digest(self) -> str:
        """경로와 워커 수를 제외한 설정의 sha256"""
        payload = self.model_dump(mode="json", exclude={"paths": True, "sweep": {"workers"}})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_updates(self, **sections: dict) -> "RunConfig":
        """섹션별 일부 필드를 바꾼 복사본 (스윕 하위 실행용)"""
        data = self.model_dump(mode="json")
        for section, values in sections.items():
            if section not in data:
                raise ConfigError(f"알 수 없는 설정 섹션: {section}")
            data[section].update(values)
        return RunConfig.model_validate(data)
