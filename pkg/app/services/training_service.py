"""
고정 특징 위에서 그래프 헤드 학습

AdamW + 코사인 감쇠, 에폭마다 시드로 섞은 배치.
산출물: 체크포인트(설정 digest 포함)와 loss_log.csv (step, lr, loss).
"""

import csv
import logging
import math
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from app.autograd.checkpoint import load_checkpoint, save_checkpoint
from app.autograd.optim import AdamW, cosine_lr
from app.core.exceptions import CheckpointError, ConfigError, RuntimeFailure, ValidationFailure
from app.graph.heads import GraphHead, build_head
from app.graph.loss import multi_view_loss
from app.models.config_models import ModelConfig, ModelKind, Precision, RunConfig
from app.models.scan_models import ScanTrajectory
from app.services.dataset_service import Sample, batch_iter, build_dataset, collate, scans_by_id
from app.utils.rng import derive_seed
from app.vector_stores.feature_provider import FeatureProvider

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "ustar-ckpt/1"
LOSS_LOG_NAME = "loss_log.csv"


def precision_dtype(precision: Union[Precision, str]) -> np.dtype:
    return np.dtype(np.float64 if Precision(precision) == Precision.FLOAT64 else np.float32)


@dataclass
class TrainResult:
    checkpoint_path: Path
    loss_log_path: Path
    steps: int
    samples: int
    epoch_losses: List[float] = field(default_factory=list)
    provider_digest: str = ""


class Trainer:
    """RunConfig 하나에 대한 학습 실행"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.dtype = precision_dtype(config.train.precision)
        self.log = structlog.get_logger(__name__)

    def _check_model(self, provider: FeatureProvider) -> None:
        model = self.config.model
        if provider.dim != model.feature_dim:
            raise ConfigError(
                f"코퍼스 특징 차원 C={provider.dim}와 model.feature_dim={model.feature_dim}이 다름",
                details={"corpus_C": provider.dim, "model_C": model.feature_dim},
            )
        if model.kind == ModelKind.STAR and model.L < 2:
            raise ConfigError("star 헤드는 L ≥ 2가 필요함")

    def build_samples(self, scans: Sequence[ScanTrajectory]) -> List[Sample]:
        cfg = self.config
        return build_dataset(scans, cfg.model.L, cfg.sampler, cfg.dataset, seed=cfg.sampler.seed)

    def fit(
        self,
        scans: Sequence[ScanTrajectory],
        provider: FeatureProvider,
        out_dir: Union[str, Path],
        checkpoint_path: Optional[Union[str, Path]] = None,
        corpus_digest: Optional[str] = None,
    ) -> TrainResult:
        cfg = self.config
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt_path = Path(checkpoint_path) if checkpoint_path else out_dir / "model.ckpt"
        self._check_model(provider)

        structlog.contextvars.bind_contextvars(
            run_id=uuid.uuid4().hex[:8],
            model=cfg.model.kind.value,
            L=cfg.model.L,
            sampler=cfg.sampler.strategy.value,
            seed=cfg.train.seed,
        )
        try:
            return self._fit(scans, provider, out_dir, ckpt_path, corpus_digest)
        finally:
            structlog.contextvars.unbind_contextvars("run_id", "model", "L", "sampler", "seed")

    def _fit(
        self,
        scans: Sequence[ScanTrajectory],
        provider: FeatureProvider,
        out_dir: Path,
        ckpt_path: Path,
        corpus_digest: Optional[str],
    ) -> TrainResult:
        cfg = self.config
        tc = cfg.train
        samples = self.build_samples(scans)
        if not samples:
            raise ValidationFailure("학습 샘플이 없음 (스캔 길이, min_history, 제외 규칙 확인)")

        head = build_head(cfg.model, tc.seed, self.dtype)
        optimizer = AdamW(
            head.parameters(), lr=tc.learning_rate, betas=(tc.beta1, tc.beta2), eps=tc.eps, weight_decay=tc.weight_decay
        )
        steps_per_epoch = math.ceil(len(samples) / tc.batch_size)
        total_steps = steps_per_epoch * tc.epochs
        lookup = scans_by_id(scans)
        digest_before = provider.digest()

        self.log.info("학습 시작", samples=len(samples), steps=total_steps, parameters=head.num_parameters())

        rows: List[Tuple[int, float, float]] = []
        epoch_losses: List[float] = []
        step = 0
        for epoch in range(tc.epochs):
            losses = []
            for batch_samples in batch_iter(samples, tc.batch_size, derive_seed(tc.seed, "epoch", epoch)):
                step += 1
                lr = cosine_lr(step - 1, total_steps, tc.learning_rate)
                batch = collate(batch_samples, lookup, provider, dtype=self.dtype)
                optimizer.zero_grad()
                loss = multi_view_loss(head(batch), batch.labels, batch.label_mask)
                loss.backward()
                optimizer.step(lr=lr)
                value = float(loss.item())
                if not math.isfinite(value):
                    raise RuntimeFailure(f"손실이 유한하지 않음 (step {step})", details={"step": step})
                losses.append(value)
                rows.append((step, lr, value))
                if step % tc.log_every == 0:
                    self.log.debug("step", step=step, lr=lr, loss=value)
            epoch_losses.append(float(np.mean(losses)))
            self.log.info("에폭 완료", epoch=epoch + 1, mean_loss=epoch_losses[-1], lr=rows[-1][1])

        if provider.digest() != digest_before:
            raise RuntimeFailure("학습 중 특징 제공자 내용이 바뀜")

        loss_log = write_loss_log(out_dir / LOSS_LOG_NAME, rows)
        header = checkpoint_header(cfg, steps=step, samples=len(samples), corpus_digest=corpus_digest)
        save_checkpoint(ckpt_path, head.state_dict().items(), header)
        self.log.info("학습 완료", checkpoint=str(ckpt_path), final_loss=rows[-1][2])
        return TrainResult(
            checkpoint_path=ckpt_path,
            loss_log_path=loss_log,
            steps=step,
            samples=len(samples),
            epoch_losses=epoch_losses,
            provider_digest=digest_before,
        )


def write_loss_log(path: Path, rows: Sequence[Tuple[int, float, float]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["step", "lr", "loss"])
        for step, lr, loss in rows:
            writer.writerow([step, repr(float(lr)), repr(float(loss))])
    return path


def read_loss_log(path: Union[str, Path]) -> List[Tuple[int, float, float]]:
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        return [(int(r["step"]), float(r["lr"]), float(r["loss"])) for r in reader]


def checkpoint_header(
    config: RunConfig, steps: int, samples: int, corpus_digest: Optional[str] = None
) -> Dict[str, Any]:
    return {
        "format": CHECKPOINT_FORMAT,
        "config_digest": config.digest(),
        "corpus_digest": corpus_digest,
        "model": config.model.model_dump(mode="json"),
        "precision": Precision(config.train.precision).value,
        "seed": config.train.seed,
        "sampler": config.sampler.strategy.value,
        "steps": steps,
        "samples": samples,
    }


def load_model(
    path: Union[str, Path], expected_digest: Optional[str] = None
) -> Tuple[GraphHead, Dict[str, Any]]:
    """체크포인트에서 헤드를 복원. 헤더의 모델 설정으로 구조를 다시 만든 뒤 가중치를 채움."""
    header, state = load_checkpoint(path, expected_digest=expected_digest)
    if header.get("format") != CHECKPOINT_FORMAT or "model" not in header:
        raise CheckpointError(f"지원하지 않는 체크포인트 헤더: {path}", details={"format": header.get("format")})
    model_config = ModelConfig.model_validate(header["model"])
    head = build_head(model_config, int(header.get("seed", 0)), precision_dtype(header.get("precision", "float32")))
    head.load_state_dict(state)
    logger.info(f"체크포인트 로드: {path} ({model_config.kind.value}, L={model_config.L})")
    return head, header
