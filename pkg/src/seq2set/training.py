"""Mini-batch training with per-epoch dev evaluation and best-F1 model selection."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

from .checkpoint import save_checkpoint
from .corpus import ConfigError, Record, Vocab, build_vocab
from .evaluation import EvalReport, micro_prf, repetition_rate
from .multilabel import MultiLabel, MultiLabelConfig
from .seq2seq import ModelConfig, Seq2Seq
from .tensor import AdamState, NumericError, adam_step, make_rng


@dataclass
class RunConfig:
    variant: str = "seq2seq"
    embed_dim: int = 100
    hidden_dim: int = 300
    max_decode_len: int = 20
    coverage: bool | None = None  # None -> on for seq2seq
    soft_loss: bool | None = None  # None -> on for seq2seq
    lr: float = 1e-3
    batch_size: int = 20
    epochs: int = 10
    seed: int = 0
    checkpoint_dir: str | None = None
    eval_every: int = 1
    min_count: int = 1
    tokenize: str = "char"
    k: int = 20
    threshold: float = 0.5
    stop_at_f1: float | None = None

    def __post_init__(self):
        if self.variant not in ("seq2seq", "multilabel"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if self.eval_every < 1:
            raise ConfigError("eval cadence must be >= 1")
        if not self.lr > 0:
            raise ConfigError("learning rate must be positive")
        if self.variant == "multilabel":
            if self.coverage is not None or self.soft_loss is not None:
                raise ConfigError("coverage / soft-loss flags apply to the seq2seq variant only")
        else:
            if self.coverage is None:
                self.coverage = True
            if self.soft_loss is None:
                self.soft_loss = True


def build_model(cfg: RunConfig, source_vocab: Vocab, herb_vocab: Vocab, rng):
    if cfg.variant == "multilabel":
        mc = MultiLabelConfig(
            len(source_vocab), herb_vocab.n_regular, cfg.embed_dim, cfg.hidden_dim, cfg.k, cfg.threshold
        )
        return MultiLabel(mc, rng=rng)
    mc = ModelConfig(
        len(source_vocab),
        herb_vocab.n_regular,
        cfg.embed_dim,
        cfg.hidden_dim,
        cfg.max_decode_len,
        bool(cfg.coverage),
        bool(cfg.soft_loss),
    )
    return Seq2Seq(mc, rng=rng)


def to_examples(records, source_vocab: Vocab, herb_vocab: Vocab):
    """(source ids, herb ids) pairs; herbs outside the vocabulary are dropped."""
    out = []
    for r in records:
        herbs = [herb_vocab.stoi[h] for h in r.herbs if h in herb_vocab]
        out.append((source_vocab.encode(r.symptoms), herbs))
    return out


def predict(model, records, source_vocab: Vocab, herb_vocab: Vocab, dedup: bool = True, chunk: int = 256):
    """Returns (predicted herb-name lists, raw emission name lists)."""
    outs, raws = [], []
    for i in range(0, len(records), chunk):
        srcs = [source_vocab.encode(r.symptoms) for r in records[i : i + chunk]]
        o, raw = model.generate_batch(srcs, dedup)
        outs.extend(herb_vocab.decode(x) for x in o)
        raws.extend(herb_vocab.decode(x) for x in raw)
    return outs, raws


def evaluate_model(model, records, source_vocab: Vocab, herb_vocab: Vocab, dedup: bool = True) -> EvalReport:
    preds, raws = predict(model, records, source_vocab, herb_vocab, dedup)
    report = micro_prf(zip(preds, (r.herbs for r in records)), dedup=dedup)
    report.duplicate_rate = repetition_rate(raws)
    return report


def train_step(model, batch, opt: AdamState) -> float:
    """Teacher-forced forward/backward on ``batch`` and one Adam update.

    Returns the loss measured before the update.
    """
    loss, grads = model.loss_and_grads(batch)
    adam_step(model.params, grads, opt)
    return loss


@dataclass
class TrainResult:
    model: object
    source_vocab: Vocab
    herb_vocab: Vocab
    best_params: dict
    best_f1: float
    best_epoch: int
    history: list = field(default_factory=list)
    log_lines: list = field(default_factory=list)

    def best_model(self):
        m = copy.copy(self.model)
        m.params = self.best_params
        return m


def format_epoch(epoch: int, loss: float, report: EvalReport | None) -> str:
    line = f"epoch={epoch} train_loss={loss!r}"
    if report is not None:
        line += (
            f" dev_p={report.precision!r} dev_r={report.recall!r}"
            f" dev_f1={report.f1!r} dup_rate={report.duplicate_rate!r}"
        )
    return line


def train(cfg: RunConfig, train_records, dev_records, log=None, vocabs=None) -> TrainResult:
    """Train per ``cfg``; ``log`` receives one line per epoch."""
    train_records = list(train_records)
    if not train_records:
        raise ConfigError("empty training set")
    source_vocab, herb_vocab = vocabs if vocabs is not None else build_vocab(train_records, cfg.min_count)
    model = build_model(cfg, source_vocab, herb_vocab, make_rng(cfg.seed))
    shuffle_rng = make_rng(cfg.seed + 0x5EED)
    opt = AdamState(lr=cfg.lr)
    examples = to_examples(train_records, source_vocab, herb_vocab)
    examples = [e for e in examples if e[1]]
    ckdir = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else None
    if ckdir is not None:
        ckdir.mkdir(parents=True, exist_ok=True)

    result = TrainResult(model, source_vocab, herb_vocab, copy.deepcopy(model.params), -1.0, 0)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(examples))
        losses = []
        for bi, start in enumerate(range(0, len(examples), cfg.batch_size)):
            batch = [examples[j] for j in order[start : start + cfg.batch_size]]
            try:
                loss = train_step(model, batch, opt)
            except NumericError as e:
                raise NumericError(f"epoch {epoch} batch {bi}: {e}") from None
            losses.append(loss)
        mean_loss = math.fsum(losses) / len(losses)

        report = None
        if dev_records and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            report = evaluate_model(model, dev_records, source_vocab, herb_vocab)
            if report.f1 > result.best_f1:
                result.best_f1 = report.f1
                result.best_epoch = epoch
                result.best_params = copy.deepcopy(model.params)
                if ckdir is not None:
                    save_checkpoint(ckdir / "best.ckpt", model, source_vocab, herb_vocab, _meta(cfg, epoch, report))
        line = format_epoch(epoch, mean_loss, report)
        result.history.append((epoch, mean_loss, report))
        result.log_lines.append(line)
        if log is not None:
            log(line)
        if ckdir is not None:
            save_checkpoint(ckdir / "last.ckpt", model, source_vocab, herb_vocab, _meta(cfg, epoch, report))
        if cfg.stop_at_f1 is not None and report is not None and report.f1 >= cfg.stop_at_f1:
            break
    if not dev_records:
        result.best_params = copy.deepcopy(model.params)
        result.best_epoch = epoch
    return result


def _meta(cfg: RunConfig, epoch: int, report: EvalReport | None) -> dict:
    meta = {"epoch": epoch, "tokenize": cfg.tokenize, "seed": cfg.seed}
    if report is not None:
        meta["dev_f1"] = report.f1
    return meta

