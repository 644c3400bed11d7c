"""Sequence-to-set generation: attention seq2seq with a coverage vector and a
soft set loss, a multi-label baseline, and micro P/R/F1 evaluation.

Everything is float64 numpy with hand-derived gradients.
"""

from .corpus import (
    AliasTable,
    Record,
    SyntheticSpec,
    Vocab,
    build_vocab,
    gen_synthetic,
    normalize_record,
    split_dataset,
)
from .evaluation import EvalReport, micro_prf, repetition_rate
from .multilabel import MultiLabel, MultiLabelConfig, maxmargin_loss, select_herbs
from .seq2seq import ModelConfig, Seq2Seq, sequence_loss, soft_target
from .tensor import AdamState, adam_step, grad_check, make_rng
from .training import RunConfig, evaluate_model, train, train_step

__version__ = "0.1.0"
