"""Micro-averaged set metrics and the raw-emission duplicate rate."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class EvalReport:
    tp: int
    fp: int
    fn: int
    duplicate_rate: float = 0.0
    per_record: list = field(default_factory=list, repr=False)

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def as_text(self) -> str:
        rows = [
            ("precision", f"{self.precision:.4f}"),
            ("recall", f"{self.recall:.4f}"),
            ("f1", f"{self.f1:.4f}"),
            ("dup_rate", f"{self.duplicate_rate:.4f}"),
            ("tp/fp/fn", f"{self.tp}/{self.fp}/{self.fn}"),
        ]
        return "\n".join(f"{k:<10s}{v:>12s}" for k, v in rows)

    def as_kv(self) -> str:
        return (
            f"micro_p={self.precision!r} micro_r={self.recall!r} "
            f"micro_f1={self.f1!r} dup_rate={self.duplicate_rate!r}"
        )


def micro_prf(pairs, dedup: bool = True, keep_records: bool = False) -> EvalReport:
    """Micro P/R/F1 over (predicted, gold) pairs.

    Predictions are reduced to sets before scoring. With ``dedup=False`` every
    repeated emission of a herb counts as a false positive instead.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no (predicted, gold) pairs to evaluate")
    tp = fp = fn = 0
    per = []
    for pred, gold in pairs:
        gold = set(gold)
        if not gold:
            raise ValueError("gold set must be nonempty")
        n_pred = len(set(pred)) if dedup else len(pred)
        hit = len(set(pred) & gold)
        tp += hit
        fp += n_pred - hit
        fn += len(gold) - hit
        if keep_records:
            per.append((hit, n_pred - hit, len(gold) - hit))
    return EvalReport(tp, fp, fn, per_record=per)


def repetition_rate(raw_emissions) -> float:
    """(total emissions - distinct-per-record emissions) / total emissions."""
    total = sum(len(r) for r in raw_emissions)
    if total == 0:
        return 0.0
    unique = sum(len(set(r)) for r in raw_emissions)
    return (total - unique) / total


def evaluate(predictions, golds, raw_emissions=None) -> EvalReport:
    report = micro_prf(zip(predictions, golds))
    report.duplicate_rate = repetition_rate(raw_emissions if raw_emissions is not None else predictions)
    return report
