"""Set prediction two ways: independent sigmoids vs. a decoder that emits a list.

The multi-label head scores every herb at once and keeps those within the top
k above a threshold. The decoder generates herbs one by one. Both share the
same bidirectional GRU encoder.

Run: python demos/multilabel_vs_seq2seq.py
"""

from seq2set.corpus import SyntheticSpec, synthetic_splits
from seq2set.training import RunConfig, evaluate_model, train

train_recs, dev, test = synthetic_splits(SyntheticSpec(seed=2), 1000, 100, 100)
common = dict(embed_dim=16, hidden_dim=32, epochs=5, lr=3e-3, seed=2, tokenize="whitespace")

for cfg in (RunConfig(variant="multilabel", **common), RunConfig(variant="seq2seq", **common)):
    res = train(cfg, train_recs, dev)
    rep = evaluate_model(res.best_model(), test, res.source_vocab, res.herb_vocab)
    print(f"{cfg.variant:>10}: P {rep.precision:.3f}  R {rep.recall:.3f}  F1 {rep.f1:.3f}")
