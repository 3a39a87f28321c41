"""
AdamW, 코사인 스케줄, 체크포인트 컨테이너, 액션 인코더 테스트
"""

import numpy as np
import pytest

from app.autograd.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from app.autograd.layers import ParamFactory
from app.autograd.optim import AdamWHyperParams, adamw_step, cosine_lr
from app.autograd.tensor import Parameter, constant
from app.core.exceptions import CheckpointError, ConfigError
from app.graph.encoders import ActionEncoder, encode_action
from app.utils.pose_geometry import Action6


class TestAdamW:
    def test_first_step_unit_update(self):
        p = Parameter(np.array([1.0]), name="p")
        adamw_step([p], [np.array([1.0])], AdamWHyperParams(lr=0.1, weight_decay=0.0), step=1)
        assert p.data[0] == pytest.approx(0.9, abs=1e-6)
        assert p.step == 1

    def test_zero_gradient_no_decay(self):
        p = Parameter(np.array([0.3, -2.0]), name="p")
        adamw_step([p], [np.zeros(2)], AdamWHyperParams(lr=0.1, weight_decay=0.0), step=1)
        assert np.array_equal(p.data, [0.3, -2.0])

    def test_decoupled_decay(self):
        p = Parameter(np.array([2.0]), name="p")
        adamw_step([p], [None], AdamWHyperParams(lr=0.1, weight_decay=0.01), step=1)
        assert p.data[0] == pytest.approx(2.0 * (1 - 0.001), abs=1e-12)

    def test_rejects_step_zero(self):
        p = Parameter(np.array([1.0]), name="p")
        with pytest.raises(ConfigError):
            adamw_step([p], [np.ones(1)], AdamWHyperParams(), step=0)


class TestCosineLr:
    def test_endpoints_and_midpoint(self):
        assert cosine_lr(0, 100, 1e-3) == pytest.approx(1e-3)
        assert cosine_lr(100, 100, 1e-3) == pytest.approx(0.0, abs=1e-18)
        assert cosine_lr(50, 100, 1e-3) == pytest.approx(5e-4)

    def test_out_of_range(self):
        with pytest.raises(ConfigError):
            cosine_lr(101, 100, 1e-3)
        with pytest.raises(ConfigError):
            cosine_lr(-1, 100, 1e-3)


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path, rng):
        params = [
            ("a.weight", rng.normal(size=(3, 4))),
            ("a.bias", rng.normal(size=(4,)).astype(np.float32)),
            ("scalar", np.array(1.5)),
        ]
        path = save_checkpoint(tmp_path / "m.ckpt", params, {"config_digest": "abc", "model": {"L": 4}})
        header, loaded = load_checkpoint(path)
        assert header["model"] == {"L": 4}
        assert list(loaded) == ["a.weight", "a.bias", "scalar"]
        for name, arr in params:
            assert loaded[name].dtype == arr.dtype
            assert loaded[name].tobytes() == arr.tobytes()

    def test_digest_mismatch(self, tmp_path):
        path = save_checkpoint(tmp_path / "m.ckpt", [("w", np.zeros(2))], {"config_digest": "abc"})
        with pytest.raises(CheckpointError):
            load_checkpoint(path, expected_digest="other")

    def test_corrupt_files(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "missing.ckpt")
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"NOTMAGIC")
        with pytest.raises(CheckpointError):
            load_checkpoint(bad)
        path = save_checkpoint(tmp_path / "t.ckpt", [("w", np.zeros(4))], {})
        truncated = tmp_path / "trunc.ckpt"
        truncated.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(CheckpointError):
            load_checkpoint(truncated)

    def test_magic_prefix(self, tmp_path):
        path = save_checkpoint(tmp_path / "m.ckpt", [], {})
        assert path.read_bytes().startswith(MAGIC)


class TestParamFactory:
    def test_name_determines_values(self):
        a = ParamFactory(3, np.float64).uniform("x.weight", (4, 4), fan_in=4)
        factory = ParamFactory(3, np.float64)
        factory.uniform("other", (2,), fan_in=2)
        b = factory.uniform("x.weight", (4, 4), fan_in=4)
        assert np.array_equal(a.data, b.data)
        assert np.all(np.abs(a.data) <= 0.5)


class TestActionEncoder:
    def _encoder(self, dim=4):
        return ActionEncoder(ParamFactory(0, np.float64), dim)

    def test_zero_action_zero_bias(self):
        enc = self._encoder()
        enc.linear.bias.data[...] = 0.0
        assert np.array_equal(encode_action(enc, Action6.zero()), np.zeros(4))

    def test_linear_without_bias(self, rng):
        enc = self._encoder()
        enc.linear.bias.data[...] = 0.0
        a = Action6(tuple(rng.uniform(-5, 5, 3)), tuple(rng.uniform(-5, 5, 3)))
        double = Action6.from_array(2.0 * a.as_array())
        assert np.allclose(encode_action(enc, double), 2.0 * encode_action(enc, a), atol=1e-12)

    def test_basis_vector_selects_row(self):
        enc = self._encoder(dim=2)
        enc.linear.weight.data[...] = np.arange(12.0).reshape(6, 2)
        enc.linear.bias.data[...] = np.array([0.5, -0.5])
        out = encode_action(enc, Action6((1, 0, 0), (0, 0, 0)))
        assert np.allclose(out, [0.5, 0.5])

    def test_standardized_inputs(self):
        enc = ActionEncoder(ParamFactory(0, np.float64), 3, standardize=True, scale_mm=10.0, scale_deg=20.0)
        raw = ActionEncoder(ParamFactory(0, np.float64), 3)
        x = np.array([[10.0, 0, 0, 20.0, 0, 0]])
        scaled = np.array([[1.0, 0, 0, 1.0, 0, 0]])
        assert np.allclose(enc(constant(x)).data, raw(constant(scaled)).data, atol=1e-12)
