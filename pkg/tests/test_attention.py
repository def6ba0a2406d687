import math

import numpy as np
import pytest

from sleepdiff.attention import (
    DiffAttention, LambdaParams, MultiHeadAttention, diff_attn_head, explode_records, lambda_init,
    lambda_value, multi_head_diff_attn,
)
from sleepdiff.mdta import MdtaLayer
from sleepdiff.numerics import DimensionError, RngTree, Tensor

F64 = np.float64


def softmax(z):
    z = z - z.max(-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(-1, keepdims=True)


def loop_diff_attention(xq, xkv, attn: DiffAttention, lam):
    """Per-sample, per-head reference built from plain numpy."""
    d, h = attn.d, attn.heads
    dh = d // (2 * h)
    Wq, Wk, Wv, Wo = attn.W_q.data, attn.W_k.data, attn.W_v.data, attn.W_o.data
    out = np.zeros(xq.shape[:-1] + (d,))
    for b in range(xq.shape[0]):
        Q, K, V = xq[b] @ Wq, xkv[b] @ Wk, xkv[b] @ Wv
        heads = []
        for i in range(h):
            cols = slice(2 * dh * i, 2 * dh * (i + 1))
            q, k, v = Q[:, cols], K[:, cols], V[:, cols]
            a1 = softmax(q[:, :dh] @ k[:, :dh].T / math.sqrt(dh))
            a2 = softmax(q[:, dh:] @ k[:, dh:].T / math.sqrt(dh))
            o = (a1 - lam[i] * a2) @ v
            o = o / np.sqrt((o * o).mean(-1, keepdims=True) + 1e-5) * (1 - attn.lambdas.init)
            heads.append(o)
        out[b] = np.concatenate(heads, axis=-1) @ Wo
    return out


def make_attention(seed=0, d=12, heads=3, layer=2, std=0.3):
    tree = RngTree(seed)
    lp = LambdaParams(heads, d // (2 * heads), layer, tree.child("lam"), F64, std)
    return DiffAttention(d, heads, lp, tree.child("attn"), F64)


def test_lambda_init_schedule():
    assert lambda_init(1) == pytest.approx(0.2)
    assert lambda_init(4) == pytest.approx(0.8 - 0.6 * math.exp(-0.9), abs=1e-12)
    assert lambda_init(4) == pytest.approx(0.5561, abs=1e-4)
    assert all(lambda_init(l) < lambda_init(l + 1) < 0.8 for l in range(1, 12))


def test_lambda_reparameterisation():
    lp = LambdaParams(2, 3, 3, RngTree(1), F64, 0.3)
    q1, k1, q2, k2 = (p.data for p in (lp.q1, lp.k1, lp.q2, lp.k2))
    ref = np.exp((q1 * k1).sum(-1)) - np.exp((q2 * k2).sum(-1)) + lambda_init(3)
    np.testing.assert_allclose(lambda_value(lp), ref, rtol=1e-12)


def test_multi_head_diff_attention_matches_loop_reference(rng):
    attn = make_attention()
    xq, xkv = rng.standard_normal((2, 4, 12)), rng.standard_normal((2, 6, 12))
    out, records = multi_head_diff_attn(Tensor(xq), Tensor(xkv), attn)
    ref = loop_diff_attention(xq, xkv, attn, lambda_value(attn.lambdas))
    np.testing.assert_allclose(out.data, ref, atol=1e-10)
    assert len(records) == 2 * 3
    assert {r.head for r in records} == {1, 2, 3}


def test_row_sums_equal_one_minus_lambda(rng):
    attn = make_attention(seed=4)
    _, records = multi_head_diff_attn(Tensor(rng.standard_normal((3, 7, 12))), Tensor(rng.standard_normal((3, 7, 12))), attn)
    for r in records:
        np.testing.assert_allclose(r.map.sum(-1), 1 - r.lam, atol=1e-12)


def test_zero_lambda_reduces_to_standard_attention(rng):
    dh = 4
    q1, k1, v = rng.standard_normal((5, dh)), rng.standard_normal((6, dh)), rng.standard_normal((6, 2 * dh))
    q2, k2 = rng.standard_normal((5, dh)), rng.standard_normal((6, dh))
    out, m = diff_attn_head(*(Tensor(a) for a in (q1, q2, k1, k2, v)), 0.0)
    a = softmax(q1 @ k1.T / math.sqrt(dh))
    np.testing.assert_allclose(m.data, a, atol=1e-12)
    np.testing.assert_allclose(out.data, a @ v, atol=1e-12)


def test_tied_halves_with_unit_lambda_give_exact_zero(rng):
    q, k, v = rng.standard_normal((5, 3)), rng.standard_normal((5, 3)), rng.standard_normal((5, 6))
    out, m = diff_attn_head(Tensor(q), Tensor(q), Tensor(k), Tensor(k), Tensor(v), 1.0)
    assert np.all(m.data == 0.0) and np.all(out.data == 0.0)


def test_attention_width_mismatch_raises(rng):
    attn = make_attention()
    with pytest.raises(DimensionError):
        attn(Tensor(rng.standard_normal((1, 3, 10))), Tensor(rng.standard_normal((1, 3, 12))))
    with pytest.raises(DimensionError):
        DiffAttention(10, 3, attn.lambdas, RngTree(0), F64)


def test_standard_attention_rows_sum_to_one(rng):
    mha = MultiHeadAttention(8, 2, RngTree(0), F64, layer=1)
    sink = []
    mha(Tensor(rng.standard_normal((2, 5, 8))), Tensor(rng.standard_normal((2, 5, 8))), sink)
    recs = explode_records(sink)
    assert all(r.lam == 0.0 for r in recs)
    for r in recs:
        np.testing.assert_allclose(r.map.sum(-1), 1.0, atol=1e-12)


def test_lambda_shared_within_a_layer():
    layer = MdtaLayer(8, 2, 1, RngTree(0), F64)
    owners = {id(layer.dsa["eeg"].attn.lambdas), id(layer.dsa["eog"].attn.lambdas), id(layer.dca.attn.lambdas)}
    assert owners == {id(layer.lambdas)}
    names = [n for n, _ in layer.named_parameters() if "lambdas" in n]
    assert names == ["lambdas.q1", "lambdas.k1", "lambdas.q2", "lambdas.k2"]


def test_mdta_layer_shapes_and_capture_kinds(rng):
    layer = MdtaLayer(8, 2, 2, RngTree(0), F64)
    s, g = Tensor(rng.standard_normal((3, 5, 8))), Tensor(rng.standard_normal((3, 1, 8)))
    sink = []
    outs = layer(s, g, s, g, sink)
    assert [o.shape for o in outs] == [(3, 5, 8), (3, 1, 8)] * 2
    kinds = [(c.kind, c.modality) for c in sink]
    assert kinds == [("dsa", "eeg"), ("dsa", "eog"), ("dca", "eeg"), ("dca", "eog")]
    assert sink[0].maps.shape == (3, 2, 6, 6) and sink[2].maps.shape == (3, 2, 1, 1)
