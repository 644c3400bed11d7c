"""The repetition problem and what the coverage input does about it.

Trains a plain attention decoder and one that also sees which herbs it has
already produced, on a small synthetic corpus, then compares how often each
repeats a herb in its raw output. Takes a minute or two on one core.

Run: python demos/repetition_and_coverage.py
"""

from seq2set.corpus import SyntheticSpec, synthetic_splits
from seq2set.training import RunConfig, evaluate_model, predict, train

train_recs, dev, test = synthetic_splits(SyntheticSpec(seed=1), 1000, 100, 100)
print("example record:", " ".join(test[0].symptoms), "->", " ".join(test[0].herbs))

for coverage in (False, True):
    cfg = RunConfig(embed_dim=16, hidden_dim=32, epochs=10, lr=3e-3, seed=1, tokenize="whitespace",
                    coverage=coverage, soft_loss=False)
    res = train(cfg, train_recs, dev)
    model = res.best_model()
    rep = evaluate_model(model, test, res.source_vocab, res.herb_vocab)
    _, raw = predict(model, test[:1], res.source_vocab, res.herb_vocab)
    label = "with coverage" if coverage else "plain decoder"
    print(f"{label:>14}: F1 {rep.f1:.3f}  duplicate rate {rep.duplicate_rate:.3f}  raw output {' '.join(raw[0])}")
