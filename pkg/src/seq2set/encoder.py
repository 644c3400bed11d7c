"""Bidirectional GRU encoder shared by the seq2seq model and the multi-label head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import DimensionError, glorot, gru_cell, gru_cell_backward


class InputError(ValueError):
    pass


@dataclass
class EncodedSource:
    states: np.ndarray  # [T, 2H]; row t is [forward h_t ; backward h_t]
    final: np.ndarray  # [2H]; [forward h_T ; backward h_1]

    @property
    def length(self) -> int:
        return self.states.shape[0]


def init_gru(rng, d_in: int, H: int) -> tuple:
    W = np.concatenate([glorot(rng, d_in, H) for _ in range(3)], axis=1)
    U = np.concatenate([glorot(rng, H, H) for _ in range(3)], axis=1)
    return W, U, np.zeros(3 * H)


def init_encoder_params(rng, source_vocab_size: int, embed_dim: int, hidden_dim: int) -> dict:
    p = {"src_emb": glorot(rng, source_vocab_size, embed_dim)}
    for d in ("fwd", "bwd"):
        p[f"enc_{d}_W"], p[f"enc_{d}_U"], p[f"enc_{d}_b"] = init_gru(rng, embed_dim, hidden_dim)
    return p


def pad_batch(seqs, pad: int = 0):
    """Right-pad integer sequences; returns (ids [B, T], mask [B, T])."""
    T = max(len(s) for s in seqs)
    ids = np.full((len(seqs), T), pad, dtype=np.int64)
    mask = np.zeros((len(seqs), T), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = True
    return ids, mask


def check_source(ids, vocab_size: int) -> None:
    if len(ids) == 0:
        raise InputError("empty source sequence")
    bad = [i for i in ids if not 0 <= i < vocab_size]
    if bad:
        raise InputError(f"source ids out of vocabulary range [0, {vocab_size}): {bad[:5]}")


def encode_batch(params: dict, src: np.ndarray, mask: np.ndarray):
    """Run forward and backward GRUs over a padded batch.

    Returns (states [B, T, 2H] with zero rows at padding, final [B, 2H], cache).
    Padded steps carry the previous hidden state through unchanged, so the
    forward pass ends on the last real token and the backward pass starts on it.
    """
    emb = params["src_emb"][src]
    B, T, _ = emb.shape
    H = params["enc_fwd_U"].shape[0]
    m = mask[:, :, None]
    out = {}
    caches = {}
    for d, steps in (("fwd", range(T)), ("bwd", range(T - 1, -1, -1))):
        W, U, b = params[f"enc_{d}_W"], params[f"enc_{d}_U"], params[f"enc_{d}_b"]
        h = np.zeros((B, H))
        hs = np.zeros((B, T, H))
        cs = [None] * T
        for t in steps:
            h_new, cs[t] = gru_cell(emb[:, t], h, W, U, b)
            h = np.where(m[:, t], h_new, h)
            hs[:, t] = h
        out[d] = hs
        caches[d] = cs
    states = np.where(m, np.concatenate([out["fwd"], out["bwd"]], axis=-1), 0.0)
    final = np.concatenate([out["fwd"][:, T - 1], out["bwd"][:, 0]], axis=-1)
    return states, final, (src, mask, caches)


def encode_backward(params: dict, dstates: np.ndarray, dfinal: np.ndarray, cache, grads: dict) -> None:
    """Accumulate encoder parameter gradients into ``grads``."""
    src, mask, caches = cache
    B, T = src.shape
    H = params["enc_fwd_U"].shape[0]
    m = mask[:, :, None]
    dstates = np.where(m, dstates, 0.0)
    dh_all = {"fwd": dstates[..., :H].copy(), "bwd": dstates[..., H:].copy()}
    dh_all["fwd"][:, T - 1] += dfinal[:, :H]
    dh_all["bwd"][:, 0] += dfinal[:, H:]
    demb = np.zeros((B, T, params["src_emb"].shape[1]))
    for d, steps in (("fwd", range(T - 1, -1, -1)), ("bwd", range(T))):
        W, U = params[f"enc_{d}_W"], params[f"enc_{d}_U"]
        dW = np.zeros_like(W)
        dU = np.zeros_like(U)
        db = np.zeros(3 * H)
        carry = np.zeros((B, H))
        for t in steps:
            g = dh_all[d][:, t] + carry
            dh_new = np.where(m[:, t], g, 0.0)
            dx, dh_prev, dWt, dUt, dbt = gru_cell_backward(dh_new, caches[d][t], W, U)
            carry = dh_prev + np.where(m[:, t], 0.0, g)
            demb[:, t] += dx
            dW += dWt
            dU += dUt
            db += dbt
        grads[f"enc_{d}_W"] += dW
        grads[f"enc_{d}_U"] += dU
        grads[f"enc_{d}_b"] += db
    np.add.at(grads["src_emb"], src.reshape(-1), demb.reshape(-1, demb.shape[-1]))


def encode(source_ids, params: dict) -> EncodedSource:
    check_source(source_ids, params["src_emb"].shape[0])
    src, mask = pad_batch([list(source_ids)])
    states, final, _ = encode_batch(params, src, mask)
    return EncodedSource(states[0], final[0])


def check_param_shapes(params: dict, expected: dict) -> None:
    for k, shape in expected.items():
        if params[k].shape != shape:
            raise DimensionError(f"parameter {k} has shape {params[k].shape}, expected {shape}")
