"""Preference encoder: pooling, masking, padding invariance, gradients."""
import numpy as np
import pytest

from prefdiff.autodiff import Tensor
from prefdiff.encoder import (ave_pool, encode_batch, encode_history,
                              layer_norm, masked_mean_pool)
from prefdiff.errors import DataError
from prefdiff.rng import make_rng

from conftest import central_difference, relative_error


def rand_hist(params, batch, length, seed=0):
    rng = make_rng(seed, 77)
    return rng.standard_normal((batch, length, params.meta.d1))


def test_ave_pool_ndarray_and_tensor_agree():
    m = np.arange(12, dtype=np.float64).reshape(4, 3)
    mask = np.array([True, False, True, True])
    plain = ave_pool(m, mask)
    from_tensor = ave_pool(Tensor(m), mask)
    assert np.allclose(plain, m[mask].mean(axis=0))
    assert np.allclose(from_tensor.data, plain)


def test_ave_pool_all_masked_raises():
    with pytest.raises(DataError):
        ave_pool(np.ones((3, 2)), np.zeros(3, dtype=bool))


def test_layer_norm_standardizes():
    rng = make_rng(1, 2)
    x = Tensor(rng.standard_normal((5, 8)) * 3 + 2)
    g = Tensor(np.ones(8))
    b = Tensor(np.zeros(8))
    y = layer_norm(x, g, b).data
    assert np.allclose(y.mean(axis=-1), 0.0, atol=1e-10)
    assert np.allclose(y.var(axis=-1), 1.0, atol=1e-4)


def test_masked_mean_pool_ignores_padding(tiny_params):
    x = Tensor(rand_hist(tiny_params, 2, 4))
    mask = np.array([[1, 1, 0, 0], [1, 1, 1, 1]], dtype=bool)
    out = masked_mean_pool(x, mask).data
    assert np.allclose(out[0], x.data[0, :2].mean(axis=0))
    assert np.allclose(out[1], x.data[1].mean(axis=0))


def test_padding_invariance_exact(tiny_params):
    # arbitrary garbage in padded slots must not change the output at all
    base = rand_hist(tiny_params, 1, 3, seed=5)
    mask = np.array([[True, True, True, False, False]])
    padded_a = np.concatenate([base, np.zeros((1, 2, 4))], axis=1)
    padded_b = np.concatenate([base, 1e6 * np.ones((1, 2, 4))], axis=1)
    out_a = encode_batch(Tensor(padded_a), mask, tiny_params).data
    out_b = encode_batch(Tensor(padded_b), mask, tiny_params).data
    assert np.array_equal(out_a, out_b)


def test_padded_batch_matches_unpadded(tiny_params):
    base = rand_hist(tiny_params, 1, 3, seed=6)
    solo = encode_batch(Tensor(base), np.ones((1, 3), dtype=bool), tiny_params).data
    padded = np.concatenate([base, np.zeros((1, 2, 4))], axis=1)
    mask = np.array([[True, True, True, False, False]])
    batched = encode_batch(Tensor(padded), mask, tiny_params).data
    assert np.allclose(solo[0], batched[0], atol=1e-12)


def test_identity_weights_reduce_to_average_pooling(tiny_params):
    # residual layers vanish when their output projections are zero, and with
    # positional embeddings zeroed the encoder is exactly average pooling
    p = tiny_params
    p["pos_emb"].data[:] = 0.0
    for layer in range(p.meta.enc_layers):
        p[f"enc{layer}_wo"].data[:] = 0.0
        p[f"enc{layer}_ff_w2"].data[:] = 0.0
        p[f"enc{layer}_ff_b2"].data[:] = 0.0
    x = np.array([[[2.0, 2.0, 2.0, 2.0], [3.0, 3.0, 3.0, 3.0]]])
    out = encode_batch(Tensor(x), np.ones((1, 2), dtype=bool), p).data
    assert np.allclose(out[0], [2.5, 2.5, 2.5, 2.5], atol=1e-12)


def test_bypass_transformer_is_raw_mean(tiny_params):
    x = rand_hist(tiny_params, 2, 3, seed=7)
    mask = np.array([[1, 1, 1], [1, 0, 1]], dtype=bool)
    out = encode_batch(Tensor(x), mask, tiny_params, bypass_transformer=True).data
    assert np.allclose(out[0], x[0].mean(axis=0))
    assert np.allclose(out[1], x[1][[0, 2]].mean(axis=0))


def test_multi_head_shapes():
    from prefdiff.params import init_params
    p = init_params(n_users=3, n_items_src=4, n_items_tgt=4, d1=8, seed=1,
                    hidden=8, mlp_layers=2, enc_layers=2, n_heads=2,
                    max_len=4, T=3, dtype="float64")
    x = Tensor(make_rng(0, 1).standard_normal((3, 4, 8)))
    out = encode_batch(x, np.ones((3, 4), dtype=bool), p)
    assert out.data.shape == (3, 8)


def test_length_over_max_raises(tiny_params):
    x = Tensor(rand_hist(tiny_params, 1, 6))
    with pytest.raises(DataError, match="max_len"):
        encode_batch(x, np.ones((1, 6), dtype=bool), tiny_params)


def test_empty_history_raises(tiny_params):
    x = Tensor(rand_hist(tiny_params, 2, 3))
    mask = np.array([[1, 1, 1], [0, 0, 0]], dtype=bool)
    with pytest.raises(DataError):
        encode_batch(x, mask, tiny_params)
    with pytest.raises(DataError):
        encode_history(rand_hist(tiny_params, 1, 3)[0], tiny_params,
                       pad_mask=np.zeros(3, dtype=bool))


def test_encode_history_matches_batch(tiny_params):
    vecs = rand_hist(tiny_params, 1, 4, seed=9)[0]
    sig = encode_history(vecs, tiny_params, user_id="u7")
    batched = encode_batch(Tensor(vecs[None]), np.ones((1, 4), dtype=bool),
                           tiny_params).data[0]
    assert sig.user_id == "u7"
    assert np.array_equal(sig.vector, batched)


@pytest.mark.parametrize("name", ["enc0_wq", "enc0_ff_w1", "enc1_wo",
                                  "enc0_ln1_g", "pos_emb"])
def test_encoder_gradients_match_finite_differences(tiny_params, name):
    p = tiny_params
    x_np = rand_hist(p, 2, 3, seed=13)
    mask = np.array([[1, 1, 0], [1, 1, 1]], dtype=bool)
    probe = make_rng(3, 4).standard_normal((2, p.meta.d1))

    def loss_tensor():
        out = encode_batch(Tensor(x_np), mask, p)
        return ((out - probe) ** 2).sum()

    p.zero_grads()
    loss_tensor().backward()
    analytic = p[name].grad.copy()
    numeric = central_difference(lambda: float(loss_tensor().data),
                                 p[name].data)
    assert relative_error(analytic, numeric) < 1e-6


def test_encoder_input_gradient(tiny_params):
    p = tiny_params
    x_np = rand_hist(p, 1, 3, seed=21)
    mask = np.ones((1, 3), dtype=bool)

    def loss(x):
        return (encode_batch(x if isinstance(x, Tensor) else Tensor(x_np), mask, p) ** 2).sum()

    x = Tensor(x_np.copy(), requires_grad=True)
    out = (encode_batch(x, mask, p) ** 2).sum()
    out.backward()
    numeric = central_difference(lambda: float((encode_batch(Tensor(x_np), mask, p) ** 2).sum().data), x_np)
    assert relative_error(x.grad, numeric) < 1e-6
