"""
헤드 순전파를 토큰/헤드 단위 루프로 다시 계산한 결과와 비교
"""

import math

import numpy as np
import pytest

from app.graph.anchors import AnchorSet
from app.graph.heads import build_head, chain_forward, fc_forward, star_forward
from app.models.config_models import ModelConfig

C = 8
HEADS = 2


def _lin(layer, x):
    return x @ layer.weight.data + layer.bias.data


def _gelu(v):
    return np.array([u * 0.5 * (1.0 + math.erf(u / math.sqrt(2.0))) for u in v])


def _attend(mha, queries, keys):
    d = mha.dim // HEADS
    out = []
    for q_in in queries:
        q = _lin(mha.q, q_in)
        ks = [_lin(mha.k, k) for k in keys]
        vs = [_lin(mha.v, k) for k in keys]
        merged = np.zeros(mha.dim)
        for h in range(HEADS):
            sl = slice(h * d, (h + 1) * d)
            scores = [float(np.dot(q[sl], k[sl])) / math.sqrt(d) for k in ks]
            top = max(scores)
            weights = [math.exp(s - top) for s in scores]
            total = sum(weights)
            for w, v in zip(weights, vs):
                merged[sl] += (w / total) * v[sl]
        out.append(_lin(mha.o, merged))
    return out


def _block(block, tokens):
    attended = _attend(block.attn, tokens, tokens)
    tokens = [t + a for t, a in zip(tokens, attended)]
    return [t + _lin(block.ffn.fc2, _gelu(_lin(block.ffn.fc1, t))) for t in tokens]


def _decode(decoders, m):
    rows = []
    for k in range(10):
        h = _gelu(m @ decoders.w1.data[k] + decoders.b1.data[k, 0])
        rows.append(h @ decoders.w2.data[k] + decoders.b2.data[k, 0])
    return np.array(rows)


def _positions(n, dim):
    table = np.zeros((n, dim))
    for pos in range(n):
        for i in range(0, dim, 2):
            angle = pos / (10000.0 ** (i / dim))
            table[pos, i] = math.sin(angle)
            table[pos, i + 1] = math.cos(angle)
    return table


def _assert_actions(got, expected):
    """Action6는 회전을 [-180, 180)으로 래핑함"""
    np.testing.assert_allclose(got[:, :3], expected[:, :3], rtol=0, atol=1e-10)
    np.testing.assert_allclose(got[:, 3:], (expected[:, 3:] + 180.0) % 360.0 - 180.0, rtol=0, atol=1e-10)


def _as_array(actions):
    return np.array([a.as_array() for a in actions])


@pytest.fixture
def inputs():
    rng = np.random.default_rng(21)
    return {
        "feats": rng.normal(size=(2, C)),
        "actions": rng.uniform(-4, 4, size=(2, 6)),
        "chain": np.vstack([np.zeros((1, 6)), rng.uniform(-4, 4, size=(2, 6))]),
        "current": rng.normal(size=C),
    }


def _head(kind):
    return build_head(ModelConfig(kind=kind, L=3, feature_dim=C, heads=HEADS), seed=8, dtype=np.float64)


def test_star_matches_loops(inputs):
    head = _head("star")
    tokens = [np.concatenate([f, _lin(head.encoder.linear, a)]) for f, a in zip(inputs["feats"], inputs["actions"])]
    for block in head.blocks:
        tokens = _block(block, tokens)
    kv = [_lin(head.proj, t) for t in tokens]
    m = inputs["current"] + _attend(head.cross, [inputs["current"]], kv)[0]
    expected = _decode(head.decoders, m)

    anchors = AnchorSet(
        scan_id="oracle",
        current_idx=2,
        indices=[0, 1],
        current_feature=inputs["current"],
        anchor_features=inputs["feats"],
        anchor_actions=inputs["actions"],
        chain_actions=inputs["chain"],
    )
    got = _as_array(star_forward(head, anchors))
    _assert_actions(got, expected)


def test_fc_matches_loops(inputs):
    head = _head("fc")
    tokens = [np.concatenate([f, _lin(head.encoder.linear, a)]) for f, a in zip(inputs["feats"], inputs["actions"])]
    tokens.append(np.concatenate([inputs["current"], _lin(head.encoder.linear, np.zeros(6))]))
    for block in head.blocks:
        tokens = _block(block, tokens)
    expected = _decode(head.decoders, _lin(head.proj, tokens[-1]))
    got = _as_array(fc_forward(head, inputs["feats"], inputs["actions"], inputs["current"]))
    _assert_actions(got, expected)


def test_chain_matches_loops(inputs):
    head = _head("chain")
    frames = list(inputs["feats"]) + [inputs["current"]]
    table = _positions(3, 2 * C)
    tokens = [
        np.concatenate([f, _lin(head.encoder.linear, a)]) + table[i]
        for i, (f, a) in enumerate(zip(frames, inputs["chain"]))
    ]
    for block in head.blocks:
        tokens = _block(block, tokens)
    expected = _decode(head.decoders, _lin(head.proj, tokens[-1]))
    got = _as_array(chain_forward(head, inputs["feats"], inputs["chain"], inputs["current"]))
    _assert_actions(got, expected)


def test_fc_with_one_token_is_decoder_over_current(inputs):
    head = build_head(ModelConfig(kind="fc", L=1, feature_dim=C, heads=HEADS), seed=8, dtype=np.float64)
    token = np.concatenate([inputs["current"], _lin(head.encoder.linear, np.zeros(6))])
    for block in head.blocks:
        token = _block(block, [token])[0]
    expected = _decode(head.decoders, _lin(head.proj, token))
    got = _as_array(fc_forward(head, np.zeros((0, C)), np.zeros((0, 6)), inputs["current"]))
    _assert_actions(got, expected)
