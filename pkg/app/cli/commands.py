"""
CLI 동사 구현

각 함수는 RunConfig를 받아 서비스 계층을 호출하고, stdout에 출력할 요약 dict를 반환함.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

from app.core.exceptions import ConfigError
from app.db.scan_store import file_digest
from app.models.config_models import RunConfig
from app.services.corpus_service import CorpusService
from app.services.dataset_service import build_dataset, scans_by_id
from app.services.evaluation_service import Evaluator, retrieve, write_report, write_retrieval
from app.services.experiment_service import ExperimentService
from app.services.training_service import Trainer, load_model
from app.vector_stores.feature_provider import ScanFeatureProvider

logger = logging.getLogger(__name__)


def cmd_simulate(config: RunConfig) -> Dict[str, Any]:
    manifest = CorpusService(config).simulate()
    return {
        "corpus": config.paths.corpus,
        "scans": len(manifest.scans),
        "subjects": len(manifest.subjects),
        "C": manifest.C,
        "sim_digest": manifest.sim_digest,
    }


def cmd_split(config: RunConfig) -> Dict[str, Any]:
    corpus = CorpusService(config)
    split = corpus.make_split(corpus.open_store())
    return {"split": config.split_path, "train": split.train, "val": split.val, "seed": split.seed}


def cmd_train(config: RunConfig) -> Dict[str, Any]:
    corpus = CorpusService(config)
    store = corpus.open_store()
    if store.feature_dim is not None and store.feature_dim != config.model.feature_dim:
        raise ConfigError(
            f"코퍼스 C={store.feature_dim}와 model.feature_dim={config.model.feature_dim}이 다름",
            details={"corpus_C": store.feature_dim, "model_C": config.model.feature_dim},
        )
    _, train_scans, _ = corpus.load_split_scans(store)
    result = Trainer(config).fit(
        train_scans,
        ScanFeatureProvider(train_scans),
        config.paths.out,
        config.checkpoint_path,
        corpus_digest=store.digest(),
    )
    return {
        "checkpoint": str(result.checkpoint_path),
        "loss_log": str(result.loss_log_path),
        "steps": result.steps,
        "samples": result.samples,
        "epoch_losses": result.epoch_losses,
    }


def _load_for_eval(config: RunConfig, checkpoint: Optional[str], subset: str):
    ckpt = Path(checkpoint or config.checkpoint_path)
    head, header = load_model(ckpt)
    if header.get("config_digest") != config.digest():
        logger.warning("체크포인트의 설정 digest가 현재 설정과 다름 (평가 설정만 다른 경우 정상)")
    corpus = CorpusService(config)
    store = corpus.open_store()
    if store.feature_dim is not None and store.feature_dim != head.dim:
        raise ConfigError(
            f"코퍼스 C={store.feature_dim}와 체크포인트 C={head.dim}이 다름",
            details={"corpus_C": store.feature_dim, "model_C": head.dim},
        )
    _, train_scans, val_scans = corpus.load_split_scans(store)
    scans = train_scans if subset == "train" else val_scans
    return ckpt, head, store, scans


def cmd_eval(config: RunConfig, checkpoint: Optional[str] = None, subset: str = "val") -> Dict[str, Any]:
    ckpt, head, store, scans = _load_for_eval(config, checkpoint, subset)
    report = Evaluator(config).evaluate(
        head, scans, ScanFeatureProvider(scans), corpus_digest=store.digest(), checkpoint_digest=file_digest(ckpt)
    )
    csv_path, json_path = write_report(report, config.paths.out)
    return {
        "metrics_csv": str(csv_path),
        "metrics_json": str(json_path),
        "subset": subset,
        "samples": report.samples,
        "trans_mae_mm": report.overall.trans_mae_mm,
        "rot_mae_deg": report.overall.rot_mae_deg,
    }


def cmd_retrieve(config: RunConfig, checkpoint: Optional[str] = None, subset: str = "val") -> Dict[str, Any]:
    _, head, _, scans = _load_for_eval(config, checkpoint, subset)
    samples = build_dataset(
        scans,
        head.config.L,
        config.sampler,
        config.dataset,
        seed=config.dataset.eval_seed,
        frame_stride=config.sweep.retrieve_stride,
    )
    rows = retrieve(head, samples, scans_by_id(scans), ScanFeatureProvider(scans))
    csv_path, json_path = write_retrieval(rows, config.paths.out)
    return {"retrieval_csv": str(csv_path), "summary": str(json_path), "queries": len(rows)}


def cmd_scale_curve(config: RunConfig) -> Dict[str, Any]:
    csv_path, svg_path = ExperimentService(config).scale_curve()
    return {"csv": str(csv_path), "svg": str(svg_path)}


def cmd_ablate(config: RunConfig) -> Dict[str, Any]:
    return {"csv": str(ExperimentService(config).ablate())}


def cmd_inspect_sampling(config: RunConfig) -> Dict[str, Any]:
    return {"csv": str(ExperimentService(config).inspect_sampling())}
