"""
앵커 샘플러와 제외 규칙 테스트
"""

import math

import numpy as np
import pytest

from app.core.exceptions import ValidationFailure
from app.models.config_models import SamplerStrategy
from app.services.sampling_service import (
    anchor_diversity,
    cosine_similarity,
    exclude_near_target,
    exclude_similar_features,
    redundancy_score,
    sample_anchors,
    segment_bounds,
    segmental_sample,
    semantic_sample,
    semantic_selection_order,
    uniform_sample,
)


def _simplex(rng, n, dim=10):
    z = rng.uniform(0.01, 1.0, size=(n, dim))
    return z / z.sum(axis=1, keepdims=True)


class TestCosine:
    def test_examples(self):
        assert cosine_similarity([1, 0], [1, 0]) == pytest.approx(1.0)
        assert cosine_similarity([1, 0], [0, 1]) == pytest.approx(0.0)
        assert cosine_similarity([1, 1], [1, 0]) == pytest.approx(1 / math.sqrt(2), abs=1e-8)

    def test_zero_norm_rejected(self):
        with pytest.raises(ValidationFailure):
            cosine_similarity([0, 0], [1, 0])

    def test_redundancy_examples(self):
        assert redundancy_score([1, 0], [1, 0]) == pytest.approx(1.0)
        assert redundancy_score([1, 0], [0, 1], [[1, 0], [1, 1]]) == pytest.approx(1 + 0.70710678, abs=1e-8)

    def test_diversity(self):
        assert anchor_diversity([1, 0], []) == 0.0
        assert anchor_diversity([1, 0], [[0, 1]]) == pytest.approx(0.0)
        assert anchor_diversity([1, 0], [[1, 0], [1, 0]]) == pytest.approx(1.0)


class TestSegmental:
    def test_bounds_cover_pool(self):
        bounds = segment_bounds(10, 3)
        assert bounds == [(0, 4), (4, 7), (7, 10)]

    def test_one_per_segment(self, rng):
        pool = list(range(100, 200))
        for _ in range(50):
            picks = segmental_sample(pool, 7, rng)
            assert len(picks) == 7
            for pick, (start, end) in zip(picks, segment_bounds(100, 7)):
                assert pool[start] <= pick < pool[end - 1] + 1

    def test_small_pool_returns_all(self, rng):
        assert segmental_sample([5, 2, 9], 7, rng) == [2, 5, 9]
        assert segmental_sample([5, 2], 0, rng) == []

    def test_covers_every_frame_eventually(self):
        rng = np.random.default_rng(0)
        seen = set()
        for _ in range(400):
            seen.update(segmental_sample(range(21), 7, rng))
        assert seen == set(range(21))


class TestUniform:
    def test_distinct_sorted(self, rng):
        picks = uniform_sample(range(50), 10, rng)
        assert picks == sorted(set(picks)) and len(picks) == 10


class TestSemantic:
    def test_k1_is_greedy(self):
        pool_z = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.1]])
        current = np.array([1.0, 0.0])
        order = semantic_selection_order([0, 1, 2, 3], pool_z, current, 2, 1, np.random.default_rng(0))
        assert order[0] == 1
        remaining = {i: redundancy_score(pool_z[i], current, [pool_z[1]]) for i in (0, 2, 3)}
        assert order[1] == min(remaining, key=remaining.get)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(42)
        pool_z = _simplex(rng, 500)
        current = _simplex(rng, 1)[0]
        order = semantic_selection_order(range(500), pool_z, current, 7, 1, np.random.default_rng(1))
        selected = []
        for pick in order:
            scores = {
                i: redundancy_score(pool_z[i], current, [pool_z[j] for j in selected])
                for i in range(500)
                if i not in selected
            }
            assert scores[pick] <= min(scores.values()) + 1e-9
            selected.append(pick)

    def test_pick_within_k_lowest(self):
        rng = np.random.default_rng(3)
        pool_z = _simplex(rng, 200)
        current = _simplex(rng, 1)[0]
        K = 5
        order = semantic_selection_order(range(200), pool_z, current, 7, K, np.random.default_rng(9))
        selected = []
        for pick in order:
            scores = np.array(
                [
                    redundancy_score(pool_z[i], current, [pool_z[j] for j in selected]) if i not in selected else np.inf
                    for i in range(200)
                ]
            )
            kth = np.sort(scores)[K - 1]
            assert scores[pick] <= kth + 1e-9
            selected.append(pick)

    def test_deterministic_for_seed(self):
        rng = np.random.default_rng(5)
        pool_z = _simplex(rng, 80)
        current = _simplex(rng, 1)[0]
        a = semantic_sample(range(80), pool_z, current, 7, 8, np.random.default_rng(11))
        b = semantic_sample(range(80), pool_z, current, 7, 8, np.random.default_rng(11))
        assert a == b and a == sorted(set(a)) and len(a) == 7

    def test_small_pool_and_bad_k(self, rng):
        pool_z = _simplex(rng, 3)
        assert semantic_sample([4, 1, 2], pool_z, pool_z[0], 7, 4, rng) == [1, 2, 4]
        with pytest.raises(ValidationFailure):
            semantic_sample([1, 2], pool_z[:2], pool_z[0], 1, 0, rng)

    def test_dispatch_requires_viewdist(self, rng):
        with pytest.raises(ValidationFailure):
            sample_anchors(SamplerStrategy.SEMANTIC, range(10), 3, rng)
        viewdist = _simplex(rng, 20)
        picks = sample_anchors(SamplerStrategy.SEMANTIC, range(15), 3, rng, viewdist=viewdist, current_idx=15, K=4)
        assert len(picks) == 3 and all(0 <= p < 15 for p in picks)


class TestExclusion:
    def _poses(self, rng, n=60):
        pos = rng.uniform(-20, 20, size=(n, 3))
        rot = rng.uniform(-30, 30, size=(n, 3))
        return pos, rot

    def test_zero_threshold_keeps_all_but_exact(self, rng):
        pos, rot = self._poses(rng)
        target = np.concatenate([pos[10], rot[10]])
        kept = exclude_near_target(range(60), pos, rot, target, 0.0, 0.0)
        assert 10 not in kept and len(kept) == 59

    def test_infinite_threshold_removes_all(self, rng):
        pos, rot = self._poses(rng)
        target = np.zeros(6)
        assert exclude_near_target(range(60), pos, rot, target, math.inf, math.inf) == []

    def test_both_thresholds_required(self):
        pos = np.array([[0.0, 0, 0], [1.0, 0, 0], [100.0, 0, 0]])
        rot = np.array([[0.0, 0, 0], [0.0, 0, 30.0], [0.0, 0, 0]])
        kept = exclude_near_target([0, 1, 2], pos, rot, np.zeros(6), 5.0, 5.0)
        assert kept == [1, 2]

    def test_feature_cosine(self):
        features = np.array([[1.0, 0.0], [0.99, 0.01], [0.0, 1.0]])
        kept = exclude_similar_features([0, 1, 2], np.array([1.0, 0.0]), features, 0.99)
        assert kept == [2]
        assert exclude_similar_features([], np.array([1.0, 0.0]), features, 0.99) == []


def test_random_pools_against_brute_force():
    """크기 64 이하 풀 500개: 각 선택이 그 단계의 K-최저 집합 안에 있음"""
    rng = np.random.default_rng(2024)
    for trial in range(500):
        size = int(rng.integers(1, 65))
        K = int(rng.integers(1, 9))
        n = int(rng.integers(1, 8))
        pool_z = _simplex(rng, size)
        current = _simplex(rng, 1)[0]
        order = semantic_selection_order(range(size), pool_z, current, n, K, np.random.default_rng(trial))
        assert len(order) == min(n, size)
        if size <= n:
            continue
        selected = []
        for pick in order:
            scores = np.array(
                [
                    np.inf if i in selected else redundancy_score(pool_z[i], current, [pool_z[j] for j in selected])
                    for i in range(size)
                ]
            )
            assert scores[pick] <= np.sort(scores)[min(K, size - len(selected)) - 1] + 1e-9
            selected.append(pick)

        picks = segmental_sample(range(size), n, rng)
        assert all(a < b for a, b in zip(picks, picks[1:]))
        for pick, (start, end) in zip(picks, segment_bounds(size, n)):
            assert start <= pick < end
