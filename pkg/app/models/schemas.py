"""
디스크 파일 레코드와 리포트 스키마 정의
"""

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

NUM_VIEWS = 10
PARASTERNAL_VIEWS = tuple(range(0, 6))
APICAL_VIEWS = tuple(range(6, 10))

SCAN_FORMAT = "ustar-scan/1"
CORPUS_FORMAT = "ustar-corpus/1"
SPLIT_FORMAT = "ustar-split/1"


class ScanHeaderRecord(BaseModel):
    """스캔 파일 첫 줄"""

    model_config = ConfigDict(extra="forbid")

    format: Literal["ustar-scan/1"] = Field(..., description="파일 형식 버전")
    subject: int = Field(..., ge=0, description="피험자 ID")
    scan: int = Field(..., ge=0, description="피험자 내 스캔 번호")
    C: int = Field(..., ge=1, description="특징 차원")
    annotations: Dict[str, int] = Field(..., description="뷰 ID(문자열) → 주석 타임스탬프")

    @field_validator("annotations")
    @classmethod
    def _all_views(cls, value: Dict[str, int]) -> Dict[str, int]:
        expected = {str(k) for k in range(NUM_VIEWS)}
        if set(value) != expected:
            raise ValueError(f"annotations는 뷰 0..9를 정확히 한 번씩 포함해야 함 (받은 키: {sorted(value)})")
        return value


class FrameRecord(BaseModel):
    """스캔 파일의 프레임 한 줄"""

    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    t: int = Field(..., ge=0, description="타임스탬프 (프레임 인덱스)")
    pos_mm: List[float] = Field(..., min_length=3, max_length=3, description="위치 (mm)")
    rot_deg: List[float] = Field(..., min_length=3, max_length=3, description="오일러 각 (deg)")
    feat: List[float] = Field(..., description="고정 시각 특징")
    viewdist: List[float] = Field(..., min_length=NUM_VIEWS, max_length=NUM_VIEWS, description="뷰 확률 분포")

    @field_validator("viewdist")
    @classmethod
    def _on_simplex(cls, value: List[float]) -> List[float]:
        if any(v < 0 for v in value):
            raise ValueError("viewdist에 음수가 있음")
        if abs(sum(value) - 1.0) > 1e-6:
            raise ValueError(f"viewdist 합이 1이 아님 ({sum(value)})")
        return value


class CorpusEntry(BaseModel):
    path: str = Field(..., description="manifest 기준 상대 경로")
    subject: int = Field(..., ge=0)


class CorpusManifest(BaseModel):
    """코퍼스 manifest (manifest.json)"""

    format: Literal["ustar-corpus/1"] = CORPUS_FORMAT
    scans: List[CorpusEntry] = Field(default_factory=list)
    C: Optional[int] = Field(default=None, description="모든 스캔의 특징 차원")
    sim_digest: Optional[str] = Field(default=None, description="생성에 쓰인 시뮬레이터 설정 digest")

    @property
    def subjects(self) -> List[int]:
        return sorted({entry.subject for entry in self.scans})


class SplitFile(BaseModel):
    """피험자 단위 train/val 분할"""

    format: Literal["ustar-split/1"] = SPLIT_FORMAT
    train: List[int] = Field(..., description="학습 피험자 ID")
    val: List[int] = Field(..., description="검증 피험자 ID")
    seed: int = Field(..., description="분할 시드")


class ViewMetricsRow(BaseModel):
    view: int = Field(..., ge=0, lt=NUM_VIEWS)
    trans_mae_mm: float
    rot_mae_deg: float
    count: int = Field(..., ge=0)


class GroupMetrics(BaseModel):
    trans_mae_mm: float
    rot_mae_deg: float


class MetricsReportModel(BaseModel):
    """metrics.json 직렬화 형태"""

    per_view: List[ViewMetricsRow]
    parasternal: GroupMetrics
    apical: GroupMetrics
    overall: GroupMetrics
    samples: int
    model: str
    L: int
    sampler: str
    config_digest: str
    corpus_digest: str
    checkpoint_digest: Optional[str] = None
