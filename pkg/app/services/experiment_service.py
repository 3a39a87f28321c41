"""
스윕 실험: 그래프 크기 스케일 곡선, 모델 × 샘플러 ablation, 샘플링 진단

각 하위 실행(train → eval)은 자기 출력 디렉터리를 가지며, 결과는 그리드 순서로 모음.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from app.core.exceptions import SweepError
from app.db.scan_store import CorpusStore, file_digest
from app.models.config_models import ModelKind, RunConfig, SamplerStrategy
from app.models.schemas import NUM_VIEWS
from app.services.corpus_service import CorpusService
from app.services.dataset_service import build_dataset
from app.services.evaluation_service import Evaluator, write_report
from app.services.parallel_run_manager import ParallelRunManager, RunOutcome, RunTask
from app.services.sampling_service import anchor_diversity
from app.services.training_service import Trainer, load_model
from app.utils.svg_chart import ChartPanel, write_line_chart
from app.vector_stores.feature_provider import ScanFeatureProvider

logger = logging.getLogger(__name__)

SCALE_CSV = "scale_curve.csv"
CURVE_SVG = "curve.svg"
ABLATION_CSV = "ablation.csv"
SAMPLING_CSV = "sampling.csv"


def run_train_eval(payload: Dict[str, Any]) -> Dict[str, Any]:
    """
    하위 실행 하나: 학습 후 검증 평가. 프로세스 풀에서 호출되므로 모듈 최상위 함수.

    payload: {"config": RunConfig JSON, "out": 출력 디렉터리}
    """
    config = RunConfig.model_validate(payload["config"])
    out = Path(payload["out"])
    corpus = CorpusService(config)
    store = corpus.open_store()
    _, train_scans, val_scans = corpus.load_split_scans(store)
    corpus_digest = store.digest()

    ckpt = out / "model.ckpt"
    result = Trainer(config).fit(train_scans, ScanFeatureProvider(train_scans), out, ckpt, corpus_digest)
    head, _ = load_model(ckpt, expected_digest=config.digest())
    report = Evaluator(config).evaluate(
        head, val_scans, ScanFeatureProvider(val_scans), corpus_digest=corpus_digest, checkpoint_digest=file_digest(ckpt)
    )
    write_report(report, out)
    return {
        "trans_mae_mm": report.overall.trans_mae_mm,
        "rot_mae_deg": report.overall.rot_mae_deg,
        "samples": report.samples,
        "train_samples": result.samples,
        "final_epoch_loss": result.epoch_losses[-1],
    }


@dataclass
class CellResult:
    """같은 설정의 시드 묶음 요약"""

    keys: Tuple[str, ...]
    trans: List[float]
    rot: List[float]

    @property
    def trans_mean(self) -> float:
        return float(np.mean(self.trans))

    @property
    def rot_mean(self) -> float:
        return float(np.mean(self.rot))

    @property
    def trans_spread(self) -> float:
        return float(np.std(self.trans))

    @property
    def rot_spread(self) -> float:
        return float(np.std(self.rot))


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


class ExperimentService:
    def __init__(self, config: RunConfig, runner: Optional[ParallelRunManager] = None):
        self.config = config
        self.runner = runner or ParallelRunManager(config.sweep.workers)
        self.out = Path(config.paths.out)
        self.log = structlog.get_logger(__name__)

    def _prepare(self) -> None:
        # 하위 실행이 동시에 split을 만들지 않도록 먼저 준비
        corpus = CorpusService(self.config)
        corpus.ensure_split(corpus.open_store())

    def _task(self, key: str, model: ModelKind, sampler: SamplerStrategy, L: int, seed: int) -> RunTask:
        cfg = self.config.with_updates(
            model={"kind": ModelKind(model).value, "L": L},
            sampler={"strategy": SamplerStrategy(sampler).value, "seed": seed},
            train={"seed": seed},
        )
        return RunTask(key=key, payload={"config": cfg.model_dump(mode="json"), "out": str(self.out / "runs" / key)})

    def _run_cells(
        self, cells: Sequence[Tuple[Any, List[RunTask]]], csv_path: Path, header: Sequence[str], to_row
    ) -> List[Tuple[Any, CellResult]]:
        """셀 단위로 실행 결과를 모아 CSV를 쓰고, 실패하면 완료된 셀까지의 CSV를 남기고 SweepError"""
        self._prepare()
        tasks = [task for _, cell_tasks in cells for task in cell_tasks]
        outcomes: Dict[str, RunOutcome] = {o.key: o for o in self.runner.run(tasks, run_train_eval)}

        done: List[Tuple[Any, CellResult]] = []
        for cell_key, cell_tasks in cells:
            results = [outcomes.get(t.key) for t in cell_tasks]
            # 순차 실행은 첫 실패에서 멈추므로 결과가 없는 작업은 항상 실패 뒤에 옴
            failed = next((o for o in results if o is None or not o.ok), None)
            if failed is not None:
                _write_csv(csv_path, header, [to_row(k, c) for k, c in done])
                raise SweepError(
                    f"하위 실행 실패: {failed.key}",
                    details={
                        "failed": failed.key,
                        "error": failed.error,
                        "partial_csv": str(csv_path),
                        "completed_rows": len(done),
                    },
                )
            cell = CellResult(
                keys=tuple(t.key for t in cell_tasks),
                trans=[o.result["trans_mae_mm"] for o in results],
                rot=[o.result["rot_mae_deg"] for o in results],
            )
            done.append((cell_key, cell))
            self.log.info("셀 완료", cell=str(cell_key), trans_mae=cell.trans_mean, rot_mae=cell.rot_mean)
        _write_csv(csv_path, header, [to_row(k, c) for k, c in done])
        return done

    # ------------------------------------------------------------------
    # 스케일 곡선
    # ------------------------------------------------------------------
    def scale_curve(self, L_list: Optional[Sequence[int]] = None) -> Tuple[Path, Path]:
        sweep = self.config.sweep
        L_values = list(L_list or sweep.L_list)
        sampler = self.config.sampler.strategy
        cells = []
        for model in sweep.models:
            for L in L_values:
                keys = [(f"{ModelKind(model).value}-{sampler.value}-L{L}-s{seed}", seed) for seed in sweep.seeds]
                cells.append(((ModelKind(model).value, L), [self._task(k, model, sampler, L, s) for k, s in keys]))

        header = ["model", "L", "trans_mae_mm", "rot_mae_deg", "trans_spread", "rot_spread", "seeds"]

        def to_row(key, cell: CellResult):
            model, L = key
            return [model, L, repr(cell.trans_mean), repr(cell.rot_mean), repr(cell.trans_spread),
                    repr(cell.rot_spread), len(cell.trans)]

        csv_path = self.out / SCALE_CSV
        done = self._run_cells(cells, csv_path, header, to_row)

        trans_series: Dict[str, List[Tuple[float, float]]] = {}
        rot_series: Dict[str, List[Tuple[float, float]]] = {}
        for (model, L), cell in done:
            trans_series.setdefault(model, []).append((float(L), cell.trans_mean))
            rot_series.setdefault(model, []).append((float(L), cell.rot_mean))
        svg_path = write_line_chart(
            self.out / CURVE_SVG,
            [
                ChartPanel("Translation MAE", "L", "mm", trans_series),
                ChartPanel("Rotation MAE", "L", "deg", rot_series),
            ],
        )
        logger.info(f"스케일 곡선 저장: {csv_path}, {svg_path}")
        return csv_path, svg_path

    # ------------------------------------------------------------------
    # ablation
    # ------------------------------------------------------------------
    def ablate(self) -> Path:
        sweep = self.config.sweep
        L = self.config.model.L
        cells = []
        for model in sweep.ablate_models:
            for sampler in sweep.ablate_samplers:
                m, s = ModelKind(model).value, SamplerStrategy(sampler).value
                tasks = [self._task(f"{m}-{s}-L{L}-s{seed}", model, sampler, L, seed) for seed in sweep.seeds]
                cells.append(((m, s), tasks))

        header = ["model", "sampler", "trans_mae_mean", "trans_mae_spread", "rot_mae_mean", "rot_mae_spread", "runs"]

        def to_row(key, cell: CellResult):
            model, sampler = key
            return [model, sampler, repr(cell.trans_mean), repr(cell.trans_spread), repr(cell.rot_mean),
                    repr(cell.rot_spread), len(cell.trans)]

        csv_path = self.out / ABLATION_CSV
        self._run_cells(cells, csv_path, header, to_row)
        logger.info(f"ablation 저장: {csv_path}")
        return csv_path

    # ------------------------------------------------------------------
    # 샘플링 진단
    # ------------------------------------------------------------------
    def inspect_sampling(self, store: Optional[CorpusStore] = None) -> Path:
        """검증 스캔에서 전략별 앵커 다양성과 앵커가 덮는 뷰 수 비교"""
        corpus = CorpusService(self.config)
        _, _, val_scans = corpus.load_split_scans(store)
        L = max(self.config.model.L, 2)
        rows = []
        for strategy in (SamplerStrategy.UNIFORM, SamplerStrategy.SEGMENTAL, SamplerStrategy.SEMANTIC):
            sampler = self.config.sampler.model_copy(update={"strategy": strategy})
            samples = build_dataset(
                val_scans, L, sampler, self.config.dataset, seed=self.config.dataset.eval_seed,
                frame_stride=self.config.dataset.eval_stride,
            )
            scans = {scan.scan_id: scan for scan in val_scans}
            diversity, distinct = [], []
            for sample in samples:
                z = scans[sample.scan_id].viewdist
                diversity.append(anchor_diversity(z[sample.current_idx], z[sample.anchors]))
                distinct.append(len({int(np.argmax(z[i])) for i in sample.anchors}))
            rows.append(
                [strategy.value, L, len(samples), repr(float(np.mean(diversity)) if samples else 0.0),
                 repr(float(np.mean(distinct)) if samples else 0.0), NUM_VIEWS]
            )
        path = _write_csv(
            self.out / SAMPLING_CSV,
            ["strategy", "L", "samples", "mean_diversity", "mean_distinct_views", "views"],
            rows,
        )
        logger.info(f"샘플링 진단 저장: {path}")
        return path
