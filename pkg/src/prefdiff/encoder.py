"""Preference encoder: pre-norm Transformer layers over a user's source
history followed by average pooling, producing the guidance signal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataError
from .params import ModelParams


@dataclass(frozen=True)
class GuidanceSignal:
    """Pooled d1-dimensional summary of one user's source-domain history."""
    vector: np.ndarray
    user_id: str = ""


def ave_pool(matrix, mask=None):
    """Arithmetic mean over unmasked rows. Works on numpy arrays and on
    autodiff tensors alike."""
    data = matrix.data if isinstance(matrix, Tensor) else np.asarray(matrix)
    if mask is None:
        mask = np.ones(data.shape[0], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise DataError("ave_pool over zero unmasked rows")
    weights = mask.astype(data.dtype)[:, None]
    return (matrix * weights).sum(axis=0) * (1.0 / count)


def layer_norm(x, gain, bias, eps: float = 1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered * (var + eps) ** -0.5 * gain + bias


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    b, l, d = x.shape
    return x.reshape((b, l, n_heads, d // n_heads)).transpose((0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, h, l, dh = x.shape
    return x.transpose((0, 2, 1, 3)).reshape((b, l, h * dh))


def _attention(x: Tensor, mask: np.ndarray, layer: int, params: ModelParams) -> Tensor:
    p = f"enc{layer}_"
    n_heads = params.meta.n_heads
    dh = params.meta.d1 // n_heads
    q = _split_heads(x @ params[p + "wq"], n_heads)
    k = _split_heads(x @ params[p + "wk"], n_heads)
    v = _split_heads(x @ params[p + "wv"], n_heads)
    scores = (q @ k.transpose((0, 1, 3, 2))) * (dh ** -0.5)
    # zero attention onto padded key positions, exactly
    key_mask = mask[:, None, None, :]
    scores = ad.masked_fill(scores, key_mask, -np.inf)
    weights = ad.softmax(scores, axis=-1)
    return _merge_heads(weights @ v) @ params[p + "wo"]


def encoder_forward(x: Tensor, mask: np.ndarray, params: ModelParams) -> Tensor:
    """Apply the Transformer stack to x of shape (batch, length, d1).

    `mask` flags real (non-padded) positions. Padded positions never receive
    attention weight and never enter the pooled output.
    """
    use_ln = params.meta.encoder_layer_norm
    for layer in range(params.meta.enc_layers):
        p = f"enc{layer}_"
        a = layer_norm(x, params[p + "ln1_g"], params[p + "ln1_b"]) if use_ln else x
        x = x + _attention(a, mask, layer, params)
        b = layer_norm(x, params[p + "ln2_g"], params[p + "ln2_b"]) if use_ln else x
        ff = ad.tanh(b @ params[p + "ff_w1"] + params[p + "ff_b1"]) @ params[p + "ff_w2"] + params[p + "ff_b2"]
        x = x + ff
    return x


def masked_mean_pool(x: Tensor, mask: np.ndarray) -> Tensor:
    """Batched average pooling over unmasked positions, (B, L, d) -> (B, d)."""
    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        raise DataError("empty history in batch")
    weights = (mask / counts[:, None]).astype(x.data.dtype)
    return (x * weights[:, :, None]).sum(axis=1)


def encode_batch(item_vectors: Tensor, mask: np.ndarray, params: ModelParams,
                 *, bypass_transformer: bool = False) -> Tensor:
    """Guidance signals for a batch of padded histories.

    item_vectors: (B, L, d1) source-item embeddings; mask: (B, L) booleans.
    With `bypass_transformer` the raw item embeddings are pooled directly
    (the encoder-removal ablation).
    """
    mask = np.asarray(mask, dtype=bool)
    if bypass_transformer:
        return masked_mean_pool(item_vectors, mask)
    length = item_vectors.shape[1]
    if length > params.meta.max_len:
        raise DataError(f"history length {length} exceeds max_len {params.meta.max_len}")
    x = item_vectors + ad.gather(params["pos_emb"], np.arange(length))
    x = encoder_forward(x, mask, params)
    return masked_mean_pool(x, mask)


def encode_history(item_vectors, params: ModelParams, pad_mask=None,
                   user_id: str = "", *, bypass_transformer: bool = False) -> GuidanceSignal:
    """Single-history convenience wrapper around :func:`encode_batch`."""
    vecs = item_vectors.data if isinstance(item_vectors, Tensor) else np.asarray(item_vectors)
    if pad_mask is None:
        pad_mask = np.ones(vecs.shape[0], dtype=bool)
    pad_mask = np.asarray(pad_mask, dtype=bool)
    if not pad_mask.any():
        raise DataError("empty history")
    x = item_vectors if isinstance(item_vectors, Tensor) else Tensor(vecs)
    out = encode_batch(x.reshape((1,) + vecs.shape), pad_mask[None, :], params,
                       bypass_transformer=bypass_transformer)
    return GuidanceSignal(vector=out.data[0], user_id=user_id)
