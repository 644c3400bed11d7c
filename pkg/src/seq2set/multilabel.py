"""Multi-label baseline: encoder final state -> independent sigmoid per herb.

Training uses a pairwise hinge loss: for one record with positive set P and
negatives N (all other herbs),

    loss = sum_{p in P, n in N} max(0, 1 - (score_p - score_n)) / V

and a batch loss is the mean over records. Herbs are predicted when they rank
within the top ``k`` probabilities *and* exceed ``threshold``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import EOS_ID
from .encoder import check_source, encode_backward, encode_batch, init_encoder_params, pad_batch
from .tensor import NumericError, glorot, sigmoid


@dataclass(frozen=True)
class MultiLabelConfig:
    source_vocab_size: int
    herb_vocab_size: int
    embed_dim: int = 100
    hidden_dim: int = 300
    k: int = 20
    threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        for name in ("source_vocab_size", "herb_vocab_size", "embed_dim", "hidden_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


def select_herbs(probs, k: int = 20, threshold: float = 0.5) -> set:
    """Indices ranked within the top k (ties -> smaller index first) with prob > threshold."""
    probs = np.asarray(probs)
    order = np.lexsort((np.arange(probs.size), -probs))[:k]
    return {int(i) for i in order if probs[i] > threshold}


def maxmargin_loss(scores, gold) -> float:
    return maxmargin_loss_and_grad(scores, gold)[0]


def maxmargin_loss_and_grad(scores, gold):
    """Pairwise hinge loss for one record and its gradient w.r.t. ``scores``."""
    scores = np.asarray(scores, dtype=float)
    V = scores.size
    pos = np.zeros(V, dtype=bool)
    pos[list(gold)] = True
    if not pos.any():
        raise ValueError("gold set must be nonempty")
    sp = scores[pos]
    sn = scores[~pos]
    margin = 1.0 - (sp[:, None] - sn[None, :])
    active = margin > 0
    loss = float(np.sum(margin[active])) / V
    grad = np.zeros(V)
    grad[pos] = -active.sum(axis=1) / V
    grad[~pos] = active.sum(axis=0) / V
    return loss, grad


class MultiLabel:
    kind = "multilabel"

    def __init__(self, config: MultiLabelConfig, params: dict | None = None, rng=None):
        self.config = config
        if params is None:
            if rng is None:
                raise ValueError("need either params or an rng for initialization")
            params = init_encoder_params(rng, config.source_vocab_size, config.embed_dim, config.hidden_dim)
            params["ml_W"] = glorot(rng, 2 * config.hidden_dim, config.herb_vocab_size)
        self.params = params

    def scores_batch(self, sources):
        for s in sources:
            check_source(s, self.config.source_vocab_size)
        src, mask = pad_batch([list(s) for s in sources])
        states, final, cache = encode_batch(self.params, src, mask)
        return final @ self.params["ml_W"], final, states, cache

    def predict_probs(self, source_ids) -> np.ndarray:
        return sigmoid(self.scores_batch([source_ids])[0][0])

    def loss_and_grads(self, batch, need_grads: bool = True):
        """batch: list of (source ids, gold herb ids)."""
        if len(batch) == 1:
            # BLAS rounds single-row products differently; a duplicated pair has the
            # same mean and keeps every batch on one reduction path
            batch = [batch[0], batch[0]]
        scores, final, states, cache = self.scores_batch([s for s, _ in batch])
        B = len(batch)
        dscores = np.zeros_like(scores)
        total = 0.0
        for b, (_, gold) in enumerate(batch):
            loss_b, g = maxmargin_loss_and_grad(scores[b], [h - EOS_ID - 1 for h in gold])
            total += loss_b
            dscores[b] = g / B
        loss = total / B
        if not np.isfinite(loss):
            raise NumericError(f"non-finite loss {loss}")
        if not need_grads:
            return loss, None
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        grads["ml_W"] += final.T @ dscores
        dfinal = dscores @ self.params["ml_W"].T
        encode_backward(self.params, np.zeros_like(states), dfinal, cache, grads)
        return loss, grads

    def loss(self, batch) -> float:
        return self.loss_and_grads(batch, need_grads=False)[0]

    def generate_batch(self, sources, dedup_output: bool = True):
        """Selected herb ids per source, in herb-id order; raw == output (no repeats)."""
        probs = sigmoid(self.scores_batch(sources)[0])
        outs = [sorted(h + EOS_ID + 1 for h in select_herbs(p, self.config.k, self.config.threshold)) for p in probs]
        return outs, [list(o) for o in outs]

    def generate(self, source_ids, dedup_output: bool = True) -> list:
        return self.generate_batch([source_ids])[0][0]
