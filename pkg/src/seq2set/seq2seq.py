"""Attention seq2seq decoder with a coverage vector and the soft set loss.

Output classes are indexed ``0 = EOS, 1..V = herbs``; a herb with herb-vocab id
``i`` is class ``i - EOS_ID``. The coverage indicator covers herbs only, at
index ``i - EOS_ID - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import BOS_ID, EOS_ID, dedup
from .encoder import (
    EncodedSource,
    InputError,
    check_source,
    encode,
    encode_backward,
    encode_batch,
    init_encoder_params,
    pad_batch,
)
from .tensor import DimensionError, NumericError, glorot, gru_cell, gru_cell_backward, log_softmax, softmax

LOG_FLOOR = np.log(1e-12)


class DecodeLengthError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    source_vocab_size: int  # rows of the source embedding table, reserved ids included
    herb_vocab_size: int  # V, herbs only
    embed_dim: int = 100
    hidden_dim: int = 300
    max_decode_len: int = 20
    coverage_enabled: bool = True
    soft_loss_enabled: bool = True

    def __post_init__(self):
        for k in ("source_vocab_size", "herb_vocab_size", "embed_dim", "hidden_dim", "max_decode_len"):
            if int(getattr(self, k)) < 1:
                raise ValueError(f"{k} must be positive")

    @property
    def n_classes(self) -> int:
        return self.herb_vocab_size + 1


def herb_class(herb_id: int) -> int:
    return herb_id - EOS_ID


def class_herb(cls: int) -> int:
    return cls + EOS_ID


# --------------------------------------------------------------------------
# Targets and losses
# --------------------------------------------------------------------------

def soft_target(gold, n_classes: int, t: int, eos: int | None = None) -> np.ndarray:
    """Soft distribution for decoding step ``t`` over ``n_classes`` classes.

    For t < M: ((bag(gold) / M) + onehot(gold[t])) / 2. For t == M (the
    end-of-sequence step, requires ``eos``) the hard one-hot on ``eos``.
    """
    gold = list(gold)
    M = len(gold)
    if M == 0 or len(set(gold)) != M:
        raise ValueError(f"gold sequence must be nonempty and duplicate-free: {gold}")
    q = np.zeros(n_classes)
    if t == M and eos is not None:
        q[eos] = 1.0
        return q
    if not 0 <= t < M:
        raise ValueError(f"step {t} outside gold sequence of length {M}")
    q[gold] = 1.0 / M
    q[gold[t]] += 1.0
    return q / 2.0


def hard_target(gold, n_classes: int, t: int, eos: int | None = None) -> np.ndarray:
    q = np.zeros(n_classes)
    q[eos if t == len(gold) else gold[t]] = 1.0
    return q


def step_targets(gold_classes, n_classes: int, soft: bool, eos: int = 0) -> np.ndarray:
    """Target rows for every step of ``gold + [EOS]``; shape [M+1, n_classes]."""
    fn = soft_target if soft else hard_target
    return np.stack([fn(gold_classes, n_classes, t, eos=eos) for t in range(len(gold_classes) + 1)])


def step_loss(q, probs) -> float:
    """Cross entropy of one decoding step against target distribution ``q``."""
    return float(-np.sum(np.asarray(q) * np.log(np.maximum(probs, 1e-12))))


def sequence_loss(step_probs, gold, mode: str = "hard", eos: int = 0) -> float:
    """-sum_t q_t . log p_t for one sequence; probabilities clamped at 1e-12."""
    step_probs = np.asarray(step_probs, dtype=float)
    if step_probs.shape[0] != len(gold) + 1:
        raise ValueError(f"expected {len(gold) + 1} steps (gold + EOS), got {step_probs.shape[0]}")
    if mode not in ("hard", "soft"):
        raise ValueError(f"unknown loss mode {mode!r}")
    Q = step_targets(list(gold), step_probs.shape[1], mode == "soft", eos)
    return float(-np.sum(Q * np.log(np.maximum(step_probs, 1e-12))))


def batch_sequence_loss(batch_step_probs, golds, mode: str = "hard") -> float:
    return float(np.mean([sequence_loss(p, g, mode) for p, g in zip(batch_step_probs, golds)]))


# --------------------------------------------------------------------------
# Model
# --------------------------------------------------------------------------

@dataclass
class DecoderState:
    s: np.ndarray
    coverage_indicator: np.ndarray  # [V] multi-hot of emitted herbs
    coverage_vector: np.ndarray | None
    emitted: list = field(default_factory=list)

    @property
    def t(self) -> int:
        return len(self.emitted)


def init_seq2seq_params(config: ModelConfig, rng) -> dict:
    d, H, V = config.embed_dim, config.hidden_dim, config.herb_vocab_size
    p = init_encoder_params(rng, config.source_vocab_size, d, H)
    p["bridge_W"] = glorot(rng, 2 * H, H)
    p["bridge_b"] = np.zeros(H)
    p["att_W"] = glorot(rng, H, H)
    p["att_U"] = glorot(rng, 2 * H, H)
    p["att_b"] = np.zeros(H)
    p["att_v"] = glorot(rng, H, 1).reshape(H)
    p["tgt_emb"] = glorot(rng, V + EOS_ID + 1, d)
    d_in = d + 2 * H + (H if config.coverage_enabled else 0)
    p["dec_W"] = np.concatenate([glorot(rng, d_in, H) for _ in range(3)], axis=1)
    p["dec_U"] = np.concatenate([glorot(rng, H, H) for _ in range(3)], axis=1)
    p["dec_b"] = np.zeros(3 * H)
    if config.coverage_enabled:
        p["cov_W"] = glorot(rng, V, H)
        p["cov_b"] = np.zeros(H)
    p["out_W"] = glorot(rng, H, V + 1)
    p["out_b"] = np.zeros(V + 1)
    return p


def coverage_vector(D: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """tanh(D W + b) for a multi-hot (or batch of multi-hot) indicator D."""
    if not np.all((D == 0) | (D == 1)):
        raise ValueError("coverage indicator must be binary")
    if D.shape[-1] != W.shape[0]:
        raise DimensionError(f"coverage indicator {D.shape} incompatible with W {W.shape}")
    return np.tanh(D @ W + b)


def _attend(params, s_prev, enc, UH, smask):
    pre = np.tanh(UH + (s_prev @ params["att_W"])[:, None, :])
    e = pre @ params["att_v"]
    e = np.where(smask, e, -np.inf)
    alpha = softmax(e, axis=-1)
    c = np.einsum("bt,btk->bk", alpha, enc)
    return c, alpha, pre


class Seq2Seq:
    kind = "seq2seq"

    def __init__(self, config: ModelConfig, params: dict | None = None, rng=None):
        self.config = config
        if params is None:
            if rng is None:
                raise ValueError("need either params or an rng for initialization")
            params = init_seq2seq_params(config, rng)
        self.params = params

    # ---- single-example surface ----

    def encode(self, source_ids) -> EncodedSource:
        return encode(source_ids, self.params)

    def attend(self, s_prev: np.ndarray, enc: EncodedSource):
        """Returns (context [2H], attention weights [T])."""
        states = enc.states[None]
        UH = states @ self.params["att_U"] + self.params["att_b"]
        smask = np.ones((1, enc.length), dtype=bool)
        c, alpha, _ = _attend(self.params, s_prev[None], states, UH, smask)
        return c[0], alpha[0]

    def initial_state(self, enc: EncodedSource) -> DecoderState:
        s0 = np.tanh(enc.final @ self.params["bridge_W"] + self.params["bridge_b"])
        D = np.zeros(self.config.herb_vocab_size)
        return DecoderState(s0, D, self._coverage(D[None])[0] if self.config.coverage_enabled else None)

    def _coverage(self, D):
        return coverage_vector(D, self.params["cov_W"], self.params["cov_b"])

    def decode_step(self, state: DecoderState, y_prev: int, enc: EncodedSource):
        """One decoder step; returns (new state, logits over EOS + herbs).

        The returned state has ``y`` appended once the caller passes it back
        through :meth:`emit`; the step itself only advances the hidden state.
        """
        if state.t >= self.config.max_decode_len:
            raise DecodeLengthError(f"decode step {state.t} >= max_decode_len {self.config.max_decode_len}")
        if y_prev != BOS_ID and not EOS_ID < y_prev <= EOS_ID + self.config.herb_vocab_size:
            raise InputError(f"previous token {y_prev} is neither BOS nor a herb")
        states = enc.states[None]
        UH = states @ self.params["att_U"] + self.params["att_b"]
        smask = np.ones((1, enc.length), dtype=bool)
        a = state.coverage_vector[None] if self.config.coverage_enabled else None
        s, logits, _ = self._step(state.s[None], np.array([y_prev]), states, UH, smask, a)
        new = DecoderState(s[0], state.coverage_indicator.copy(), state.coverage_vector, list(state.emitted))
        return new, logits[0]

    def emit(self, state: DecoderState, cls: int) -> DecoderState:
        """Record an emitted output class (EOS or herb) and refresh coverage."""
        D = state.coverage_indicator.copy()
        if cls != 0:
            D[cls - 1] = 1.0
        a = self._coverage(D[None])[0] if self.config.coverage_enabled else None
        return DecoderState(state.s, D, a, state.emitted + [cls])

    def _step(self, s, y_prev, states, UH, smask, a):
        c, alpha, _ = _attend(self.params, s, states, UH, smask)
        parts = [self.params["tgt_emb"][y_prev], c]
        if a is not None:
            parts.append(a)
        s_new, _ = gru_cell(np.concatenate(parts, axis=-1), s, self.params["dec_W"], self.params["dec_U"], self.params["dec_b"])
        logits = s_new @ self.params["out_W"] + self.params["out_b"]
        return s_new, logits, alpha

    # ---- batched training ----

    def _prepare(self, batch):
        """batch: list of (source ids, gold herb ids) pairs."""
        V = self.config.herb_vocab_size
        for src_ids, gold in batch:
            check_source(src_ids, self.config.source_vocab_size)
            if not gold:
                raise InputError("empty gold herb list")
            if any(not EOS_ID < g <= EOS_ID + V for g in gold):
                raise InputError(f"gold ids outside herb vocabulary: {gold}")
        src, smask = pad_batch([list(s) for s, _ in batch])
        golds = [[herb_class(g) for g in gold[: self.config.max_decode_len]] for _, gold in batch]
        B = len(batch)
        L = max(len(g) for g in golds) + 1
        y_in = np.zeros((B, L), dtype=np.int64)
        tmask = np.zeros((B, L), dtype=bool)
        Q = np.zeros((B, L, V + 1))
        D = np.zeros((B, L, V))
        for b, g in enumerate(golds):
            M = len(g)
            y_in[b, 0] = BOS_ID
            y_in[b, 1 : M + 1] = [class_herb(c) for c in g]
            tmask[b, : M + 1] = True
            Q[b, : M + 1] = step_targets(g, V + 1, self.config.soft_loss_enabled)
            for t in range(1, M + 1):
                D[b, t] = D[b, t - 1]
                D[b, t, g[t - 1] - 1] = 1.0
        return src, smask, y_in, tmask, Q, D

    def loss_and_grads(self, batch, need_grads: bool = True):
        """Teacher-forced mean loss over the batch and its parameter gradients."""
        if len(batch) == 1:
            # BLAS rounds single-row products differently; a duplicated pair has the
            # same mean and keeps every batch on one reduction path
            batch = [batch[0], batch[0]]
        P = self.params
        cov = self.config.coverage_enabled
        src, smask, y_in, tmask, Q, D = self._prepare(batch)
        B, L = y_in.shape
        H = self.config.hidden_dim
        d = self.config.embed_dim

        states, final, ecache = encode_batch(P, src, smask)
        s = np.tanh(final @ P["bridge_W"] + P["bridge_b"])
        s0 = s
        UH = states @ P["att_U"] + P["att_b"]
        steps = []
        total = 0.0
        for t in range(L):
            c, alpha, pre = _attend(P, s, states, UH, smask)
            parts = [P["tgt_emb"][y_in[:, t]], c]
            a = None
            if cov:
                a = np.tanh(D[:, t] @ P["cov_W"] + P["cov_b"])
                parts.append(a)
            s_new, gcache = gru_cell(np.concatenate(parts, axis=-1), s, P["dec_W"], P["dec_U"], P["dec_b"])
            logits = s_new @ P["out_W"] + P["out_b"]
            logp = log_softmax(logits)
            active = logp > LOG_FLOOR
            q = Q[:, t]
            step_loss = -np.sum(q * np.maximum(logp, LOG_FLOOR), axis=-1)
            total += float(np.sum(np.where(tmask[:, t], step_loss, 0.0)))
            steps.append((s, c, alpha, pre, a, gcache, s_new, logp, active))
            s = s_new
        loss = total / B
        if not np.isfinite(loss):
            raise NumericError(f"non-finite loss {loss}")
        if not need_grads:
            return loss, None

        grads = {k: np.zeros_like(v) for k, v in P.items()}
        dstates = np.zeros_like(states)
        dUH = np.zeros_like(UH)
        ds_next = np.zeros((B, H))
        for t in range(L - 1, -1, -1):
            s_prev, c, alpha, pre, a, gcache, s_new, logp, active = steps[t]
            qa = Q[:, t] * active
            p = np.exp(logp)
            dlogits = p * qa.sum(axis=-1, keepdims=True) - qa
            dlogits = np.where(tmask[:, t, None], dlogits, 0.0) / B
            grads["out_W"] += s_new.T @ dlogits
            grads["out_b"] += dlogits.sum(axis=0)
            ds = dlogits @ P["out_W"].T + ds_next
            dx, ds_prev, dW, dU, db = gru_cell_backward(ds, gcache, P["dec_W"], P["dec_U"])
            grads["dec_W"] += dW
            grads["dec_U"] += dU
            grads["dec_b"] += db
            np.add.at(grads["tgt_emb"], y_in[:, t], dx[:, :d])
            dc = dx[:, d : d + 2 * H]
            if cov:
                dpa = dx[:, d + 2 * H :] * (1.0 - a * a)
                grads["cov_W"] += D[:, t].T @ dpa
                grads["cov_b"] += dpa.sum(axis=0)
            # attention
            dalpha = np.einsum("bk,btk->bt", dc, states)
            dstates += alpha[:, :, None] * dc[:, None, :]
            de = alpha * (dalpha - np.sum(alpha * dalpha, axis=-1, keepdims=True))
            grads["att_v"] += np.einsum("btk,bt->k", pre, de)
            dpre = de[:, :, None] * P["att_v"] * (1.0 - pre * pre)
            dUH += dpre
            dq = dpre.sum(axis=1)
            grads["att_W"] += s_prev.T @ dq
            ds_next = ds_prev + dq @ P["att_W"].T

        dpre0 = ds_next * (1.0 - s0 * s0)
        grads["bridge_W"] += final.T @ dpre0
        grads["bridge_b"] += dpre0.sum(axis=0)
        dfinal = dpre0 @ P["bridge_W"].T
        flat_states = states.reshape(-1, 2 * H)
        flat_dUH = dUH.reshape(-1, H)
        grads["att_U"] += flat_states.T @ flat_dUH
        grads["att_b"] += flat_dUH.sum(axis=0)
        dstates += dUH @ P["att_U"].T
        encode_backward(P, dstates, dfinal, ecache, grads)
        return loss, grads

    def loss(self, batch) -> float:
        return self.loss_and_grads(batch, need_grads=False)[0]

    # ---- generation ----

    def generate_batch(self, sources, dedup_output: bool = True):
        """Greedy decoding. Returns (outputs, raw emissions) as herb-id lists."""
        for s in sources:
            check_source(s, self.config.source_vocab_size)
        P = self.params
        V = self.config.herb_vocab_size
        src, smask = pad_batch([list(s) for s in sources])
        states, final, _ = encode_batch(P, src, smask)
        s = np.tanh(final @ P["bridge_W"] + P["bridge_b"])
        UH = states @ P["att_U"] + P["att_b"]
        B = len(sources)
        D = np.zeros((B, V))
        y = np.full(B, BOS_ID, dtype=np.int64)
        done = np.zeros(B, dtype=bool)
        raw = [[] for _ in range(B)]
        for _ in range(self.config.max_decode_len):
            a = np.tanh(D @ P["cov_W"] + P["cov_b"]) if self.config.coverage_enabled else None
            s, logits, _ = self._step(s, y, states, UH, smask, a)
            cls = np.argmax(logits, axis=-1)
            for b in range(B):
                if done[b]:
                    continue
                if cls[b] == 0:
                    done[b] = True
                else:
                    raw[b].append(class_herb(int(cls[b])))
                    D[b, cls[b] - 1] = 1.0
            if done.all():
                break
            y = np.where(cls == 0, BOS_ID, cls + EOS_ID)
        outputs = [dedup(r) for r in raw] if dedup_output else [list(r) for r in raw]
        return outputs, raw

    def generate(self, source_ids, dedup_output: bool = True) -> list:
        return self.generate_batch([source_ids], dedup_output)[0][0]
