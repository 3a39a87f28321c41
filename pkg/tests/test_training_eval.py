"""
학습 루프, 체크포인트 복원, 평가, 검색 테스트 (작은 코퍼스)
"""

import numpy as np
import pytest

from app.autograd.optim import cosine_lr
from app.core.exceptions import CheckpointError, ConfigError, ValidationFailure
from app.graph.heads import build_head
from app.services.corpus_service import CorpusService
from app.services.dataset_service import build_dataset, scans_by_id
from app.services.evaluation_service import (
    Evaluator,
    compute_metrics,
    predict_samples,
    retrieve,
    write_report,
    write_retrieval,
)
from app.services.training_service import Trainer, load_model, read_loss_log
from app.vector_stores.feature_provider import ScanFeatureProvider


@pytest.fixture(scope="module")
def split_scans(corpus_config):
    _, train, val = CorpusService(corpus_config).load_split_scans()
    return train, val


def _fit(config, scans, out):
    return Trainer(config).fit(scans, ScanFeatureProvider(scans), out)


class TestTrainer:
    def test_split_keeps_subjects_apart(self, split_scans):
        train, val = split_scans
        assert train and val
        assert not {s.subject for s in train} & {s.subject for s in val}

    def test_loss_log_is_reproducible(self, corpus_config, split_scans, tmp_path):
        train, _ = split_scans
        a = _fit(corpus_config, train, tmp_path / "a")
        b = _fit(corpus_config, train, tmp_path / "b")
        assert a.loss_log_path.read_bytes() == b.loss_log_path.read_bytes()
        assert a.checkpoint_path.read_bytes() == b.checkpoint_path.read_bytes()

    def test_loss_log_follows_cosine_schedule(self, corpus_config, split_scans, tmp_path):
        train, _ = split_scans
        result = _fit(corpus_config, train, tmp_path)
        rows = read_loss_log(result.loss_log_path)
        assert [r[0] for r in rows] == list(range(1, result.steps + 1))
        for step, lr, loss in rows:
            assert lr == cosine_lr(step - 1, result.steps, corpus_config.train.learning_rate)
            assert np.isfinite(loss) and loss >= 0.0

    def test_checkpoint_restores_predictions(self, corpus_config, split_scans, tmp_path):
        train, _ = split_scans
        result = _fit(corpus_config, train, tmp_path)
        head, header = load_model(result.checkpoint_path, expected_digest=corpus_config.digest())
        assert header["steps"] == result.steps
        samples = Trainer(corpus_config).build_samples(train)[:6]
        provider = ScanFeatureProvider(train)
        first = predict_samples(head, samples, scans_by_id(train), provider)
        again, _ = load_model(result.checkpoint_path)
        assert np.array_equal(first, predict_samples(again, samples, scans_by_id(train), provider))

    def test_digest_mismatch(self, corpus_config, split_scans, tmp_path):
        train, _ = split_scans
        result = _fit(corpus_config, train, tmp_path)
        with pytest.raises(CheckpointError):
            load_model(result.checkpoint_path, expected_digest="0" * 64)

    def test_feature_dim_mismatch(self, corpus_config, split_scans, tmp_path):
        train, _ = split_scans
        config = corpus_config.with_updates(model={"feature_dim": 16})
        with pytest.raises(ConfigError):
            _fit(config, train, tmp_path)

    def test_provider_unchanged(self, corpus_config, split_scans, tmp_path):
        train, _ = split_scans
        provider = ScanFeatureProvider(train)
        before = provider.digest()
        result = Trainer(corpus_config).fit(train, provider, tmp_path)
        assert result.provider_digest == before == provider.digest()

    def test_mean_loss_drops_over_five_epochs(self, corpus_config, split_scans, tmp_path):
        train, _ = split_scans
        config = corpus_config.with_updates(train={"epochs": 5, "learning_rate": 1e-2, "batch_size": 16})
        result = _fit(config, train, tmp_path)
        assert len(result.epoch_losses) == 5
        assert result.epoch_losses[4] < result.epoch_losses[0]


class TestMetrics:
    def test_group_means(self):
        labels = np.zeros((4, 10, 6))
        pred = np.zeros((4, 10, 6))
        pred[:, :, :3] = np.arange(10)[None, :, None]
        pred[:, :, 3:] = 2.0
        rows, para, apical, overall = compute_metrics(pred, labels)
        assert [r.trans_mae_mm for r in rows] == pytest.approx(list(range(10)))
        assert para.trans_mae_mm == pytest.approx(2.5)
        assert apical.trans_mae_mm == pytest.approx(7.5)
        assert overall.trans_mae_mm == pytest.approx(4.5)
        assert overall.rot_mae_deg == pytest.approx(2.0)
        assert all(r.count == 4 for r in rows)

    def test_rotation_error_wraps(self):
        pred = np.zeros((1, 10, 6))
        labels = np.zeros((1, 10, 6))
        pred[..., 5] = 179.0
        labels[..., 5] = -179.0
        _, _, _, overall = compute_metrics(pred, labels)
        assert overall.rot_mae_deg == pytest.approx(2.0 / 3.0)

    def test_empty_rejected(self):
        with pytest.raises(ValidationFailure):
            compute_metrics(np.zeros((0, 10, 6)), np.zeros((0, 10, 6)))


class TestEvaluator:
    def _zero_head(self, config):
        head = build_head(config.model, seed=0, dtype=np.float64)
        head.decoders.zero_()
        return head

    def test_zero_model_error_is_label_magnitude(self, corpus_config, split_scans, tmp_path):
        _, val = split_scans
        head = self._zero_head(corpus_config)
        report = Evaluator(corpus_config).evaluate(head, val, ScanFeatureProvider(val))
        samples = Evaluator(corpus_config).build_samples(head, val)
        labels = np.stack([s.labels for s in samples])
        assert report.samples == len(samples)
        assert report.overall.trans_mae_mm == pytest.approx(np.abs(labels[..., :3]).mean(), rel=1e-9)
        for row in report.per_view:
            assert row.trans_mae_mm == pytest.approx(np.abs(labels[:, row.view, :3]).mean(), rel=1e-9)

        csv_path, json_path = write_report(report, tmp_path)
        lines = csv_path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "view,trans_mae_mm,rot_mae_deg,count"
        assert len(lines) == 1 + 10 + 3
        assert json_path.is_file()

    def test_eval_sampling_uses_eval_seed(self, corpus_config, split_scans):
        _, val = split_scans
        head = self._zero_head(corpus_config)
        a = Evaluator(corpus_config).build_samples(head, val)
        b = Evaluator(corpus_config.with_updates(sampler={"seed": 99})).build_samples(head, val)
        assert [s.anchors for s in a] == [s.anchors for s in b]

    def test_zero_model_retrieves_current_frame(self, corpus_config, split_scans, tmp_path):
        _, val = split_scans
        head = self._zero_head(corpus_config)
        samples = build_dataset(val, 4, corpus_config.sampler, corpus_config.dataset, seed=0, frame_stride=150)
        rows = retrieve(head, samples, scans_by_id(val), ScanFeatureProvider(val))
        assert len(rows) == 10 * len(samples)
        assert all(r.retrieved_idx == r.current_idx for r in rows)
        csv_path, json_path = write_retrieval(rows, tmp_path)
        assert csv_path.is_file() and json_path.is_file()

    def test_training_subjects_fit_better_than_validation(self, corpus_config, split_scans, tmp_path):
        train, val = split_scans
        config = corpus_config.with_updates(
            train={"epochs": 30, "learning_rate": 1e-2, "batch_size": 16}, dataset={"eval_stride": 20}
        )
        result = _fit(config, train, tmp_path)
        head, _ = load_model(result.checkpoint_path, expected_digest=config.digest())
        evaluator = Evaluator(config)
        on_train = evaluator.evaluate(head, train, ScanFeatureProvider(train))
        on_val = evaluator.evaluate(head, val, ScanFeatureProvider(val))
        assert on_train.overall.trans_mae_mm < on_val.overall.trans_mae_mm
