"""
샘플 구성, 라벨, 제외 규칙, 분할, 배치 테스트
"""

import numpy as np
import pytest

from app.core.exceptions import ConfigError, ValidationFailure
from app.models.config_models import ExclusionConfig, SamplerConfig
from app.models.scan_models import ScanTrajectory
from app.services.dataset_service import (
    batch_iter,
    build_samples,
    build_samples_with_stats,
    collate,
    compute_labels,
    excluded_frames,
    nearest_frame,
    scans_by_id,
    split_by_subject,
)
from app.utils.pose_geometry import Pose6, apply_actions_batch, wrap_angle
from app.vector_stores.feature_provider import ScanFeatureProvider

SEGMENTAL = SamplerConfig(strategy="segmental", K=8, seed=0)
SEMANTIC = SamplerConfig(strategy="semantic", K=8, seed=0)


class TestLabels:
    def test_apply_label_reaches_annotation(self, scan):
        targets = scan.annotated_poses()
        for t_c in range(0, scan.n_frames, 97):
            labels = compute_labels(scan, t_c)
            pos, rot = apply_actions_batch(scan.pos[t_c], scan.rot[t_c], labels)
            assert np.max(np.abs(pos - targets[:, :3])) < 1e-6
            assert np.max(np.abs(wrap_angle(rot - targets[:, 3:]))) < 1e-6

    def test_zero_label_at_annotated_frame(self, scan):
        for view, frame in scan.annotations.items():
            assert np.allclose(compute_labels(scan, frame)[view], 0.0, atol=1e-12)


class TestSampleBuilding:
    def test_l1_has_no_anchors(self, scan):
        samples = build_samples(scan, 1, SEGMENTAL, seed=0, frame_stride=50)
        assert samples and all(s.anchors == [] for s in samples)

    def test_invalid_l(self, scan):
        with pytest.raises(ConfigError):
            build_samples(scan, 0, SEGMENTAL, seed=0)

    def test_history_skip(self, scan):
        samples, stats = build_samples_with_stats(scan, 4, SEGMENTAL, seed=0, min_history=8, frame_stride=1)
        assert stats.skipped_history == 8
        assert min(s.current_idx for s in samples) >= 8

    @pytest.mark.parametrize("sampler", [SEGMENTAL, SEMANTIC], ids=["segmental", "semantic"])
    def test_exclusion_audit(self, scan, sampler):
        exclusion = ExclusionConfig(mode="pose", trans_mm=5.0, rot_deg=5.0)
        blocked = set(np.flatnonzero(excluded_frames(scan, exclusion)).tolist())
        assert blocked >= set(scan.annotations.values())
        samples = build_samples(scan, 8, sampler, seed=2, exclusion=exclusion, frame_stride=13)
        assert samples
        for s in samples:
            assert not blocked & set(s.pool)
            assert set(s.anchors) <= set(s.pool)
            assert all(a < s.current_idx for a in s.anchors)
            assert len(s.anchors) == min(7, len(s.pool))
            assert s.anchors == sorted(set(s.anchors))

    def test_exclusion_none(self, scan):
        assert not excluded_frames(scan, ExclusionConfig(mode="none")).any()

    def test_feature_exclusion_blocks_annotations(self, scan):
        mask = excluded_frames(scan, ExclusionConfig(mode="feature", feature_cosine=0.99))
        assert all(mask[frame] for frame in scan.annotations.values())

    def test_deterministic_anchors(self, scan):
        a = build_samples(scan, 8, SEMANTIC, seed=4, frame_stride=31)
        b = build_samples(scan, 8, SEMANTIC, seed=4, frame_stride=31)
        assert [s.anchors for s in a] == [s.anchors for s in b]

    def test_collate_shapes(self, scan):
        samples = build_samples(scan, 4, SEGMENTAL, seed=0, frame_stride=100)[:5]
        batch = collate(samples, scans_by_id([scan]), ScanFeatureProvider([scan]))
        assert batch.labels.shape == (5, 10, 6)
        assert batch.label_mask.all()
        assert batch.current_feature.shape == (5, scan.feature_dim)


class TestSplit:
    def test_26_subjects(self):
        split = split_by_subject(range(26), 0.23, seed=0)
        assert len(split.val) == 6 and len(split.train) == 20
        assert not set(split.train) & set(split.val)
        assert sorted(split.train + split.val) == list(range(26))

    def test_deterministic(self):
        assert split_by_subject(range(10), 0.3, 7) == split_by_subject(range(10), 0.3, 7)

    def test_clamped(self):
        assert len(split_by_subject([3, 9], 0.01, 0).val) == 1
        assert len(split_by_subject([3, 9], 0.99, 0).train) == 1

    def test_errors(self):
        with pytest.raises(ConfigError):
            split_by_subject(range(5), 1.0, 0)
        with pytest.raises(ValidationFailure):
            split_by_subject([4], 0.5, 0)


class TestBatchIter:
    def test_sizes(self):
        batches = list(batch_iter(list(range(300)), 128, epoch_seed=1))
        assert [len(b) for b in batches] == [128, 128, 44]
        assert sorted(x for b in batches for x in b) == list(range(300))

    def test_seeded_order(self):
        a = list(batch_iter(list(range(50)), 16, 3))
        b = list(batch_iter(list(range(50)), 16, 3))
        c = list(batch_iter(list(range(50)), 16, 4))
        assert a == b and a != c

    def test_bad_batch_size(self):
        with pytest.raises(ConfigError):
            list(batch_iter([1, 2], 0, 0))


def _tiny_scan(pos, rot):
    n = len(pos)
    return ScanTrajectory(
        subject=0,
        scan=0,
        t=np.arange(n),
        pos=np.asarray(pos, dtype=float),
        rot=np.asarray(rot, dtype=float),
        feat=np.ones((n, 2)),
        viewdist=np.full((n, 10), 0.1),
    )


class TestNearestFrame:
    def test_closest(self):
        scan = _tiny_scan([[0, 0, 0], [10, 0, 0], [20, 0, 0]], np.zeros((3, 3)))
        assert nearest_frame(scan, Pose6((12, 0, 0), (0, 0, 0))) == 1

    def test_tie_goes_to_earlier(self):
        scan = _tiny_scan([[0, 0, 0], [5, 0, 0], [5, 0, 0]], np.zeros((3, 3)))
        assert nearest_frame(scan, Pose6((5, 0, 0), (0, 0, 0))) == 1

    def test_rotation_wraps(self):
        scan = _tiny_scan(np.zeros((2, 3)), [[0, 0, 170.0], [0, 0, -175.0]])
        assert nearest_frame(scan, Pose6((0, 0, 0), (0, 0, 179.0))) == 1
