"""
고정 특징 제공자 테스트
"""

import dataclasses

import numpy as np
import pytest

from app.core.exceptions import FeatureLookupError
from app.vector_stores.feature_provider import ScanFeatureProvider


def test_lookup_matches_simulator_oracle(simulator, scan):
    provider = ScanFeatureProvider([scan])
    assert provider.dim == scan.feature_dim
    for t in range(0, scan.n_frames, max(1, scan.n_frames // 10)):
        expected = simulator.oracle_feature(scan.subject, scan.scan, scan.pose(t), t)
        np.testing.assert_allclose(provider.lookup(scan.scan_id, t), expected, atol=1e-9)


def test_lookup_many_and_read_only(scan):
    provider = ScanFeatureProvider([scan])
    rows = provider.lookup_many(scan.scan_id, [3, 0, 3])
    assert rows.shape == (3, scan.feature_dim)
    assert np.array_equal(rows[0], provider.lookup(scan.scan_id, 3))
    with pytest.raises(ValueError):
        provider.lookup(scan.scan_id, 0)[0] = 1.0


def test_unknown_scan_or_frame(scan):
    provider = ScanFeatureProvider([scan])
    with pytest.raises(FeatureLookupError):
        provider.lookup("S999-0", 0)
    with pytest.raises(FeatureLookupError):
        provider.lookup(scan.scan_id, scan.n_frames)
    with pytest.raises(FeatureLookupError):
        provider.lookup_many(scan.scan_id, [0, -1])


def test_digest_tracks_content(scan):
    a = ScanFeatureProvider([scan])
    assert a.digest() == ScanFeatureProvider([scan]).digest()
    changed = dataclasses.replace(scan, feat=scan.feat + 1e-6)
    assert ScanFeatureProvider([changed]).digest() != a.digest()
