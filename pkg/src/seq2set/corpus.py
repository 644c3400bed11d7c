"""Records, vocabularies, file formats, normalization and synthetic data.

Corpus file: one record per line, ``symptom text<TAB>herb1 herb2 ...``.
Alias file: ``variant<TAB>canonical`` or ``@prescription<TAB>herb1 herb2 ...``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .tensor import make_rng

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3
RESERVED = (PAD, UNK, BOS, EOS)


class DataError(ValueError):
    pass


class ConfigError(ValueError):
    pass


def dedup(items) -> list:
    """Keep the first occurrence of each item, preserving order."""
    seen = set()
    out = []
    for x in items:
        if x not in seen:
            seen.add(x)
            out.append(x)
    return out


def tokenize(text: str, mode: str = "char") -> list[str]:
    if mode == "char":
        return [c for c in text if not c.isspace()]
    if mode == "whitespace":
        return text.split()
    raise ConfigError(f"unknown tokenization mode {mode!r}")


@dataclass(frozen=True)
class Record:
    symptoms: tuple
    herbs: tuple

    def __post_init__(self):
        object.__setattr__(self, "symptoms", tuple(self.symptoms))
        object.__setattr__(self, "herbs", tuple(self.herbs))
        if not self.symptoms:
            raise DataError("record has no symptom tokens")
        if not self.herbs:
            raise DataError("record has no herbs")
        if len(set(self.herbs)) != len(self.herbs):
            raise DataError(f"record has duplicate herbs: {' '.join(self.herbs)}")


def parse_line(line: str, mode: str = "char", lineno: int | None = None) -> Record:
    where = f"line {lineno}: " if lineno is not None else ""
    if "\t" not in line:
        raise DataError(f"{where}expected 'symptoms<TAB>herbs'")
    text, herbs = line.rstrip("\n").split("\t", 1)
    try:
        return Record(tokenize(text, mode), herbs.split())
    except DataError as e:
        raise DataError(f"{where}{e}") from None


def format_record(rec: Record, mode: str = "char") -> str:
    sep = "" if mode == "char" else " "
    return sep.join(rec.symptoms) + "\t" + " ".join(rec.herbs)


def read_corpus(path, mode: str = "char", dedup_herbs: bool = False) -> list[Record]:
    """Read a corpus file. With ``dedup_herbs`` repeated herbs are collapsed
    instead of rejected (useful for raw files before normalization)."""
    records = []
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f, 1):
            if not line.strip():
                continue
            if dedup_herbs and "\t" in line:
                text, herbs = line.rstrip("\n").split("\t", 1)
                line = text + "\t" + " ".join(dedup(herbs.split()))
            records.append(parse_line(line, mode, i))
    return records


def write_corpus(path, records, mode: str = "char") -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(format_record(rec, mode) + "\n")


# --------------------------------------------------------------------------
# Alias projection and prescription expansion
# --------------------------------------------------------------------------

@dataclass
class AliasTable:
    aliases: dict = field(default_factory=dict)
    prescriptions: dict = field(default_factory=dict)

    def __post_init__(self):
        for variant, canon in self.aliases.items():
            if canon in self.aliases and self.aliases[canon] != canon:
                raise DataError(f"chained alias {variant} -> {canon} -> {self.aliases[canon]}")
        for name in self.prescriptions:
            self._expand(name, ())

    def canonical(self, herb: str) -> str:
        return self.aliases.get(herb, herb)

    def _expand(self, name: str, stack: tuple) -> list:
        if name in stack:
            cycle = " -> ".join(stack[stack.index(name):] + (name,))
            raise DataError(f"prescription expansion cycle: {cycle}")
        out = []
        for part in self.prescriptions[name]:
            part = self.canonical(part)
            if part in self.prescriptions:
                out.extend(self._expand(part, stack + (name,)))
            else:
                out.append(part)
        return out

    def expand(self, herb: str) -> list:
        herb = self.canonical(herb)
        if herb in self.prescriptions:
            return self._expand(herb, ())
        return [herb]


def read_alias_table(path) -> AliasTable:
    aliases, prescriptions = {}, {}
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            if "\t" not in line:
                raise DataError(f"alias file line {i}: expected a TAB separator")
            left, right = line.split("\t", 1)
            if left.startswith("@"):
                prescriptions[left[1:]] = right.split()
            else:
                aliases[left.strip()] = right.strip()
    return AliasTable(aliases, prescriptions)


def _strip_dose(herb: str) -> str:
    # "name:dose" or "name(prep)" annotations are dropped
    for sep in (":", "(", "（"):
        herb = herb.split(sep, 1)[0]
    return herb.strip()


def normalize_record(raw: Record, aliases: AliasTable) -> Record:
    """Project aliases, expand prescription names and collapse duplicates.

    Raises ``DataError`` if nothing is left after cleaning.
    """
    herbs = []
    for h in raw.herbs:
        h = _strip_dose(h)
        if h:
            herbs.extend(aliases.expand(h))
    herbs = dedup(herbs)
    if not herbs:
        raise DataError("record rejected: empty herb list after normalization")
    return Record(raw.symptoms, herbs)


def normalize_corpus(records, aliases: AliasTable):
    """Returns (kept records, list of (index, reason) for rejected ones)."""
    kept, rejected = [], []
    for i, rec in enumerate(records):
        try:
            kept.append(normalize_record(rec, aliases))
        except DataError as e:
            rejected.append((i, str(e)))
    return kept, rejected


# --------------------------------------------------------------------------
# Splitting and vocabularies
# --------------------------------------------------------------------------

def split_sizes(n: int, fractions=(0.9, 0.05, 0.05)) -> tuple:
    dev = int(round(n * fractions[1]))
    test = int(round(n * fractions[2]))
    return n - dev - test, dev, test


def split_dataset(records, seed: int, fractions=(0.9, 0.05, 0.05)):
    """Seeded shuffle, then a train/dev/test partition (90/5/5 by default)."""
    records = list(records)
    if len(records) < 20:
        raise DataError(f"need at least 20 records to split, got {len(records)}")
    n_train, n_dev, _ = split_sizes(len(records), fractions)
    order = make_rng(seed).permutation(len(records))
    shuffled = [records[i] for i in order]
    return shuffled[:n_train], shuffled[n_train : n_train + n_dev], shuffled[n_train + n_dev :]


class Vocab:
    """Token <-> id bijection with PAD/UNK/BOS/EOS at ids 0-3."""

    def __init__(self, tokens=()):
        self.itos = list(RESERVED)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids) -> list[str]:
        return [self.itos[i] for i in ids]

    @property
    def n_regular(self) -> int:
        return len(self.itos) - len(RESERVED)


def _ordered(counter: Counter, min_count: int) -> list:
    return [t for t, c in sorted(counter.items(), key=lambda kv: (-kv[1], kv[0])) if c >= min_count]


def build_vocab(records, min_count: int = 1) -> tuple[Vocab, Vocab]:
    """Source vocab (tokens seen < min_count times fall back to UNK) and herb vocab.

    Ids are assigned by descending frequency, ties broken lexicographically.
    """
    src = Counter(t for r in records for t in r.symptoms)
    herbs = Counter(h for r in records for h in r.herbs)
    return Vocab(_ordered(src, min_count)), Vocab(_ordered(herbs, 1))


def length_stats(records, limit: int = 20) -> dict:
    lengths = np.array([len(r.herbs) for r in records])
    return {
        "records": int(lengths.size),
        "mean": float(lengths.mean()),
        "max": int(lengths.max()),
        "under_limit": float(np.mean(lengths <= limit)),
        "limit": limit,
    }


def format_stats(stats: dict) -> str:
    return (
        f"records   {stats['records']}\n"
        f"average   {stats['mean']:.2f}\n"
        f"max       {stats['max']}\n"
        f"<= {stats['limit']:<6d} {100 * stats['under_limit']:.2f}%"
    )


# --------------------------------------------------------------------------
# Synthetic symptom -> herb-set task
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    n_symptoms: int = 30
    n_herbs: int = 40
    fanout: tuple = (1, 2)
    symptoms_per_record: tuple = (3, 6)
    n_records: int = 2000
    max_herbs: int = 16
    seed: int = 0


def synthetic_mapping(spec: SyntheticSpec) -> dict:
    """Fixed symptom -> herbs table; herbs are dealt from a shuffled deck so
    that different symptoms overlap as little as the sizes allow."""
    lo, hi = spec.fanout
    if not (1 <= lo <= hi):
        raise ConfigError(f"invalid fan-out range {spec.fanout}")
    if spec.n_herbs < hi:
        raise ConfigError(f"herb vocabulary ({spec.n_herbs}) smaller than fan-out ({hi})")
    rng = make_rng(spec.seed)
    names_s = [f"s{i:02d}" for i in range(spec.n_symptoms)]
    names_h = [f"h{i:02d}" for i in range(spec.n_herbs)]
    deck: list = []
    mapping = {}
    for s in names_s:
        k = int(rng.integers(lo, hi + 1))
        chosen: list = []
        while len(chosen) < k:
            if not deck:
                deck = list(rng.permutation(spec.n_herbs))
            h = names_h[deck.pop()]
            if h not in chosen:
                chosen.append(h)
        mapping[s] = chosen
    return mapping


def gen_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> list[Record]:
    """Noise-free records: the herb list is the first-mention-ordered union of
    the herbs mapped from each symptom token, capped at ``max_herbs``."""
    lo, hi = spec.symptoms_per_record
    if not (1 <= lo <= hi <= spec.n_symptoms):
        raise ConfigError(f"invalid symptoms-per-record range {spec.symptoms_per_record}")
    if spec.n_records < 1:
        raise ConfigError("n_records must be positive")
    mapping = synthetic_mapping(spec)
    names = list(mapping)
    rng = make_rng(spec.seed + 1)
    records = []
    while len(records) < spec.n_records:
        k = int(rng.integers(lo, hi + 1))
        symptoms = [names[i] for i in rng.choice(len(names), size=k, replace=False)]
        herbs = dedup(h for s in symptoms for h in mapping[s])
        if len(herbs) > spec.max_herbs:
            continue
        records.append(Record(symptoms, herbs))
    return records


def synthetic_splits(spec: SyntheticSpec, n_train: int, n_dev: int, n_test: int):
    """Disjoint train/dev/test lists drawn from one synthetic stream."""
    total = n_train + n_dev + n_test
    recs = gen_synthetic(replace(spec, n_records=total))
    return recs[:n_train], recs[n_train : n_train + n_dev], recs[n_train + n_dev :]


def mean_length(records) -> float:
    return math.fsum(len(r.herbs) for r in records) / len(records)
