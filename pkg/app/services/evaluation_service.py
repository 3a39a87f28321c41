"""
검증 평가와 최근접 프레임 검색

- 뷰별 병진/회전 MAE, parasternal(0–5)/apical(6–9)/전체 평균
- metrics.csv / metrics.json 기록 (설정, 코퍼스, 체크포인트 digest 포함)
- 예측 동작을 현재 포즈에 적용한 뒤 같은 스캔에서 최근접 프레임 검색
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import ValidationFailure
from app.graph.heads import GraphHead
from app.models.config_models import RunConfig
from app.models.scan_models import ScanTrajectory
from app.models.schemas import (
    APICAL_VIEWS,
    NUM_VIEWS,
    PARASTERNAL_VIEWS,
    GroupMetrics,
    MetricsReportModel,
    ViewMetricsRow,
)
from app.services.dataset_service import Sample, build_dataset, collate, nearest_frame, scans_by_id
from app.utils.pose_geometry import Pose6, apply_actions_batch, pose_distance, wrap_angle
from app.vector_stores.feature_provider import FeatureProvider

logger = logging.getLogger(__name__)

METRICS_CSV = "metrics.csv"
METRICS_JSON = "metrics.json"
RETRIEVAL_CSV = "retrieval.csv"
RETRIEVAL_JSON = "retrieval.json"


@dataclass
class MetricsReport:
    per_view: List[ViewMetricsRow]
    parasternal: GroupMetrics
    apical: GroupMetrics
    overall: GroupMetrics
    samples: int
    meta: Dict[str, object] = field(default_factory=dict)

    def to_model(self) -> MetricsReportModel:
        return MetricsReportModel(
            per_view=self.per_view,
            parasternal=self.parasternal,
            apical=self.apical,
            overall=self.overall,
            samples=self.samples,
            **self.meta,
        )


def _group(rows: Sequence[ViewMetricsRow], views: Sequence[int]) -> GroupMetrics:
    members = [rows[v] for v in views]
    return GroupMetrics(
        trans_mae_mm=float(np.mean([r.trans_mae_mm for r in members])),
        rot_mae_deg=float(np.mean([r.rot_mae_deg for r in members])),
    )


def compute_metrics(
    pred: np.ndarray, labels: np.ndarray, mask: Optional[np.ndarray] = None
) -> Tuple[List[ViewMetricsRow], GroupMetrics, GroupMetrics, GroupMetrics]:
    """
    pred, labels: [S, 10, 6]. 그룹 평균은 소속 뷰 행 값의 단순 평균.
    """
    pred = np.asarray(pred, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if pred.shape != labels.shape or pred.ndim != 3 or pred.shape[0] == 0:
        raise ValidationFailure(f"평가 입력 shape 오류: pred {pred.shape}, labels {labels.shape}")
    mask = np.ones(pred.shape[:2], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)

    trans_err = np.abs(pred[..., :3] - labels[..., :3]).mean(axis=-1)
    rot_err = np.abs(wrap_angle(pred[..., 3:] - labels[..., 3:])).mean(axis=-1)
    rows = []
    for v in range(NUM_VIEWS):
        present = mask[:, v]
        count = int(present.sum())
        if count == 0:
            raise ValidationFailure(f"뷰 {v}에 라벨이 있는 샘플이 없음")
        rows.append(
            ViewMetricsRow(
                view=v,
                trans_mae_mm=float(trans_err[present, v].mean()),
                rot_mae_deg=float(rot_err[present, v].mean()),
                count=count,
            )
        )
    return rows, _group(rows, PARASTERNAL_VIEWS), _group(rows, APICAL_VIEWS), _group(rows, range(NUM_VIEWS))


def predict_samples(
    head: GraphHead,
    samples: Sequence[Sample],
    scans: Dict[str, ScanTrajectory],
    provider: FeatureProvider,
    batch_size: int = 256,
) -> np.ndarray:
    """[S, 10, 6] 입력 순서대로 예측"""
    out = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        out.append(head.predict(collate(chunk, scans, provider, dtype=head.dtype)))
    return np.concatenate(out, axis=0) if out else np.zeros((0, NUM_VIEWS, 6))


class Evaluator:
    """검증 스캔에 대한 평가. 앵커 샘플링은 dataset.eval_seed로 고정."""

    def __init__(self, config: RunConfig):
        self.config = config

    def build_samples(self, head: GraphHead, scans: Sequence[ScanTrajectory]) -> List[Sample]:
        cfg = self.config
        return build_dataset(
            scans,
            head.config.L,
            cfg.sampler,
            cfg.dataset,
            seed=cfg.dataset.eval_seed,
            frame_stride=cfg.dataset.eval_stride,
        )

    def evaluate(
        self,
        head: GraphHead,
        scans: Sequence[ScanTrajectory],
        provider: FeatureProvider,
        corpus_digest: str = "",
        checkpoint_digest: Optional[str] = None,
    ) -> MetricsReport:
        samples = self.build_samples(head, scans)
        if not samples:
            raise ValidationFailure("평가 샘플이 없음")
        pred = predict_samples(head, samples, scans_by_id(scans), provider, self.config.train.batch_size)
        labels = np.stack([s.labels for s in samples])
        mask = np.stack([s.label_mask for s in samples])
        rows, para, apical, overall = compute_metrics(pred, labels, mask)
        report = MetricsReport(
            per_view=rows,
            parasternal=para,
            apical=apical,
            overall=overall,
            samples=len(samples),
            meta={
                "model": head.kind.value,
                "L": head.config.L,
                "sampler": self.config.sampler.strategy.value,
                "config_digest": self.config.digest(),
                "corpus_digest": corpus_digest,
                "checkpoint_digest": checkpoint_digest,
            },
        )
        logger.info(
            f"평가 완료: 샘플 {len(samples)}개, 병진 MAE {overall.trans_mae_mm:.3f} mm, "
            f"회전 MAE {overall.rot_mae_deg:.3f} deg"
        )
        return report


def write_report(report: MetricsReport, out_dir: Union[str, Path]) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / METRICS_CSV
    with csv_path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["view", "trans_mae_mm", "rot_mae_deg", "count"])
        for row in report.per_view:
            writer.writerow([row.view, repr(row.trans_mae_mm), repr(row.rot_mae_deg), row.count])
        for name, group in (("parasternal", report.parasternal), ("apical", report.apical), ("overall", report.overall)):
            writer.writerow([name, repr(group.trans_mae_mm), repr(group.rot_mae_deg), report.samples])
    json_path = out_dir / METRICS_JSON
    json_path.write_text(
        json.dumps(report.to_model().model_dump(mode="json"), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return csv_path, json_path


# ---------------------------------------------------------------------------
# 최근접 프레임 검색
# ---------------------------------------------------------------------------


@dataclass
class RetrievalRow:
    scan_id: str
    current_idx: int
    view: int
    retrieved_idx: int
    annotated_idx: int
    retrieved_argmax: int
    pose_error: float

    @property
    def hit(self) -> bool:
        return self.retrieved_argmax == self.view


def retrieve(
    head: GraphHead,
    samples: Sequence[Sample],
    scans: Dict[str, ScanTrajectory],
    provider: FeatureProvider,
) -> List[RetrievalRow]:
    """예측 동작으로 목표 포즈를 추정하고 같은 스캔의 최근접 프레임을 찾음"""
    pred = predict_samples(head, samples, scans, provider)
    rows: List[RetrievalRow] = []
    for sample, actions in zip(samples, pred):
        scan = scans[sample.scan_id]
        cur = sample.current_idx
        target_pos, target_rot = apply_actions_batch(scan.pos[cur], scan.rot[cur], actions)
        for view in range(NUM_VIEWS):
            idx = nearest_frame(scan, Pose6(tuple(target_pos[view]), tuple(target_rot[view])))
            annotated = scan.annotations[view]
            rows.append(
                RetrievalRow(
                    scan_id=sample.scan_id,
                    current_idx=cur,
                    view=view,
                    retrieved_idx=idx,
                    annotated_idx=annotated,
                    retrieved_argmax=int(np.argmax(scan.viewdist[idx])),
                    pose_error=float(
                        pose_distance(scan.pos[idx], scan.rot[idx], scan.pos[annotated], scan.rot[annotated])
                    ),
                )
            )
    return rows


def write_retrieval(rows: Sequence[RetrievalRow], out_dir: Union[str, Path]) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / RETRIEVAL_CSV
    with csv_path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(
            ["scan_id", "current", "view", "retrieved", "annotated", "retrieved_argmax", "pose_error", "hit"]
        )
        for r in rows:
            writer.writerow(
                [r.scan_id, r.current_idx, r.view, r.retrieved_idx, r.annotated_idx, r.retrieved_argmax,
                 repr(r.pose_error), int(r.hit)]
            )
    per_view = {}
    for v in range(NUM_VIEWS):
        hits = [r.hit for r in rows if r.view == v]
        per_view[str(v)] = float(np.mean(hits)) if hits else 0.0
    summary = {
        "queries": len(rows),
        "hit_rate": float(np.mean([r.hit for r in rows])) if rows else 0.0,
        "hit_rate_per_view": per_view,
        "mean_pose_error": float(np.mean([r.pose_error for r in rows])) if rows else 0.0,
    }
    json_path = out_dir / RETRIEVAL_JSON
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, json_path
