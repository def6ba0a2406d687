import numpy as np
import pytest

from sleepdiff.attention import AttentionBlock, MultiHeadAttention
from sleepdiff.config import AblationFlags
from sleepdiff.embedding import N_TOKENS, SignalEmbedding, receptive_field
from sleepdiff.mdta import MdtaLayer
from sleepdiff.model import SleepDiffFormer
from sleepdiff.numerics import DimensionError, RngTree, Tensor, ops
from sleepdiff.sequence import Decoder, InterEpochEncoder, fuse_epoch

F64 = np.float64


def test_conv_embedding_makes_twenty_tokens(rng):
    emb = SignalEmbedding(16, RngTree(0), F64)
    assert emb.embed_epoch(rng.standard_normal((3, 3000)), "eeg").shape == (3, N_TOKENS, 16)
    assert emb.embed_epoch(rng.standard_normal(3000), "eog").shape == (N_TOKENS, 16)
    with pytest.raises(DimensionError):
        emb.embed_epoch(rng.standard_normal((2, 2999)), "eeg")


def test_patch_embedding_shape(rng):
    emb = SignalEmbedding(8, RngTree(0), F64, patching=True)
    assert emb.embed_epoch(rng.standard_normal((2, 3000)), "eeg").shape == (2, N_TOKENS, 8)


def test_token_depends_only_on_its_receptive_field(rng):
    emb = SignalEmbedding(8, RngTree(0), F64)
    emb.eval()
    x = rng.standard_normal(3000)
    base = emb.embed_epoch(x, "eeg").data
    token = 7
    lo, hi = receptive_field(token)
    assert lo <= token * 150 and hi >= token * 150 + 149
    outside = x.copy()
    outside[:lo] += 5.0
    outside[hi + 1:] -= 5.0
    np.testing.assert_array_equal(emb.embed_epoch(outside, "eeg").data[token], base[token])
    inside = x.copy()
    inside[lo:hi + 1] += 5.0
    assert not np.array_equal(emb.embed_epoch(inside, "eeg").data[token], base[token])


def test_decoder_output_shape(rng):
    dec = Decoder(32, RngTree(0), F64)
    assert dec(Tensor(rng.standard_normal((2, 3, 32)))).shape == (2, 3, 2, 3000)


def test_fuse_epoch_concatenates_and_averages(rng):
    ge, go = rng.standard_normal((4, 1, 3)), rng.standard_normal((4, 1, 3))
    se, so = rng.standard_normal((4, 5, 3)), rng.standard_normal((4, 5, 3))
    g, s = fuse_epoch(*(Tensor(a) for a in (ge, go, se, so)))
    np.testing.assert_allclose(g.data, np.concatenate([ge[:, 0], go[:, 0]], -1))
    np.testing.assert_allclose(s.data, np.concatenate([se, so], -1).mean(1))


@pytest.mark.parametrize("differential", [False, True])
def test_inter_epoch_encoder_is_permutation_equivariant(rng, differential):
    enc = InterEpochEncoder(16, 4, RngTree(0), F64, differential=differential)
    x = rng.standard_normal((2, 6, 16))
    perm = rng.permutation(6)
    np.testing.assert_allclose(enc(Tensor(x[:, perm])).data, enc(Tensor(x)).data[:, perm], atol=1e-12)


def test_standard_attention_layer_is_a_composition(rng):
    layer = MdtaLayer(8, 2, 1, RngTree(3), F64, differential=False)
    assert all(isinstance(b.attn, MultiHeadAttention) for b in (*layer.dsa.values(), layer.dca))
    s_e, g_e, s_o, g_o = (Tensor(rng.standard_normal(shape)) for shape in
                          ((2, 4, 8), (2, 1, 8), (2, 4, 8), (2, 1, 8)))

    def block(b: AttentionBlock, q, kv):
        return ops.layer_norm(q + b.attn(q, kv), b.norm.gamma, b.norm.beta)

    def mlp(x):
        h = ops.linear(ops.gelu(ops.linear(x, layer.mlp_in.W, layer.mlp_in.b)), layer.mlp_out.W, layer.mlp_out.b)
        return ops.layer_norm(h + x, layer.mlp_norm.gamma, layer.mlp_norm.beta)

    xe = ops.concat([s_e, g_e], axis=1)
    xo = ops.concat([s_o, g_o], axis=1)
    ye, yo = block(layer.dsa["eeg"], xe, xe), block(layer.dsa["eog"], xo, xo)
    ge2 = block(layer.dca, ye[:, 4:], yo[:, 4:])
    go2 = block(layer.dca, yo[:, 4:], ye[:, 4:])
    ze = mlp(ops.concat([ye[:, :4], ge2], axis=1))
    zo = mlp(ops.concat([yo[:, :4], go2], axis=1))
    got = layer(s_e, g_e, s_o, g_o)
    for a, b in zip(got, (ze[:, :4], ze[:, 4:], zo[:, :4], zo[:, 4:])):
        np.testing.assert_allclose(a.data, b.data, atol=1e-12)


def test_model_output_shapes(small_config, rng):
    model = SleepDiffFormer(small_config)
    out = model(rng.standard_normal((2, 3, 2, 3000)))
    assert out.logits.shape == (2, 3, 5)
    assert out.recon.shape == (2, 3, 2, 3000)
    assert out.s_bar.shape == out.g_bar.shape == (2, 3, 32)
    assert model.predict(rng.standard_normal((1, 3, 2, 3000))).shape == (1, 3)
    with pytest.raises(DimensionError):
        model(rng.standard_normal((2, 3, 1, 3000)))


def test_cross_attention_off_isolates_streams(small_config, rng):
    model = SleepDiffFormer(small_config.replace(flags=AblationFlags(ca=False)))
    eeg = rng.standard_normal((3, 3000))
    a = model.encode_epochs(eeg, rng.standard_normal((3, 3000)))
    b = model.encode_epochs(eeg, rng.standard_normal((3, 3000)))
    np.testing.assert_array_equal(a[0].data, b[0].data)
    np.testing.assert_array_equal(a[1].data, b[1].data)
    full = SleepDiffFormer(small_config)
    c = full.encode_epochs(eeg, rng.standard_normal((3, 3000)))
    d = full.encode_epochs(eeg, rng.standard_normal((3, 3000)))
    assert not np.array_equal(c[1].data, d[1].data)


def test_ablated_builds_keep_shared_parameters(small_config):
    full = dict(SleepDiffFormer(small_config).named_parameters())
    for _, flags in AblationFlags.table_rows():
        ablated = dict(SleepDiffFormer(small_config.replace(flags=flags)).named_parameters())
        for name, p in ablated.items():
            if name in full and full[name].shape == p.shape:
                np.testing.assert_array_equal(p.data, full[name].data, err_msg=name)


def test_no_ca_build_drops_cross_attention(small_config):
    names = [n for n, _ in SleepDiffFormer(small_config.replace(flags=AblationFlags(ca=False))).named_parameters()]
    assert not any(".dca." in n for n in names)


def test_eval_is_deterministic_and_dropout_only_in_training(small_config, rng):
    model = SleepDiffFormer(small_config.replace(dropout=0.3))
    x = rng.standard_normal((1, 2, 2, 3000))
    model.eval()
    np.testing.assert_array_equal(model(x).logits.data, model(x).logits.data)
    model.train()
    assert not np.array_equal(model(x).logits.data, model(x).logits.data)
