"""Command-line interface: synth, stats, normalize, train, eval, predict.

Exit codes: 0 success, 2 usage or data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint
from .corpus import (
    ConfigError,
    DataError,
    SyntheticSpec,
    format_stats,
    gen_synthetic,
    length_stats,
    normalize_corpus,
    read_alias_table,
    read_corpus,
    tokenize,
    write_corpus,
)
from .evaluation import micro_prf, repetition_rate
from .tensor import NumericError
from .training import RunConfig, predict, train

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


def _add_synth(sub):
    p = sub.add_parser("synth", help="write a synthetic symptom -> herb-set corpus")
    p.add_argument("--out", required=True, help="output corpus file")
    p.add_argument("--symptoms", type=int, default=30, help="symptom vocabulary size")
    p.add_argument("--herbs", type=int, default=40, help="herb vocabulary size")
    p.add_argument("--fanout-min", type=int, default=1)
    p.add_argument("--fanout-max", type=int, default=2)
    p.add_argument("--min-symptoms", type=int, default=3, help="symptom tokens per record, lower bound")
    p.add_argument("--max-symptoms", type=int, default=6, help="symptom tokens per record, upper bound")
    p.add_argument("--records", type=int, default=2000)
    p.add_argument("--skip", type=int, default=0, help="discard this many records first (disjoint splits)")
    p.add_argument("--seed", type=int, default=0)


def _add_train(sub):
    p = sub.add_parser("train", help="train a model, keeping best.ckpt and last.ckpt")
    p.add_argument("--train", required=True, dest="train_file")
    p.add_argument("--dev", required=True, dest="dev_file")
    p.add_argument("--out", required=True, dest="checkpoint_dir", help="checkpoint directory")
    p.add_argument("--config", help="JSON file with run settings (flags take precedence)")
    p.add_argument("--variant", choices=["seq2seq", "multilabel"])
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--max-len", type=int, dest="max_decode_len")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--min-count", type=int)
    p.add_argument("--k", type=int, help="multilabel top-k")
    p.add_argument("--threshold", type=float, help="multilabel probability threshold")
    p.add_argument("--tokenize", choices=["char", "whitespace"])
    p.add_argument("--coverage", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--soft-loss", action=argparse.BooleanOptionalAction, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seq2set", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth(sub)

    p = sub.add_parser("stats", help="herb-list length statistics of a corpus file")
    p.add_argument("file")
    p.add_argument("--tokenize", choices=["char", "whitespace"], default="char")
    p.add_argument("--limit", type=int, default=20)

    p = sub.add_parser("normalize", help="apply alias projection and prescription expansion")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--aliases", required=True)
    p.add_argument("--tokenize", choices=["char", "whitespace"], default="char")

    _add_train(sub)

    p = sub.add_parser("eval", help="micro P/R/F1 and duplicate rate of a checkpoint on a corpus")
    p.add_argument("checkpoint")
    p.add_argument("test_file")
    p.add_argument("--no-dedup", action="store_true", help="score raw emissions (repeats count as false positives)")
    p.add_argument("--tokenize", choices=["char", "whitespace"])
    p.add_argument("--format", choices=["text", "kv", "both"], default="both")

    p = sub.add_parser("predict", help="generate a herb list for one symptom text")
    p.add_argument("checkpoint")
    p.add_argument("text")
    p.add_argument("--raw", action="store_true", help="also print the raw emission list")
    p.add_argument("--tokenize", choices=["char", "whitespace"])
    return parser


def run_config_from_args(args) -> RunConfig:
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    values = {}
    if args.config:
        try:
            values.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from None
        unknown = set(values) - fields
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for name in fields:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return RunConfig(**values)


def cmd_synth(args, out) -> int:
    spec = SyntheticSpec(
        n_symptoms=args.symptoms,
        n_herbs=args.herbs,
        fanout=(args.fanout_min, args.fanout_max),
        symptoms_per_record=(args.min_symptoms, args.max_symptoms),
        n_records=args.records + args.skip,
        seed=args.seed,
    )
    records = gen_synthetic(spec)[args.skip :]
    write_corpus(args.out, records, mode="whitespace")
    return EXIT_OK


def cmd_stats(args, out) -> int:
    records = read_corpus(args.file, args.tokenize)
    print(format_stats(length_stats(records, args.limit)), file=out)
    return EXIT_OK


def cmd_normalize(args, out) -> int:
    aliases = read_alias_table(args.aliases)
    raw = read_corpus(args.input, args.tokenize, dedup_herbs=True)
    kept, rejected = normalize_corpus(raw, aliases)
    write_corpus(args.output, kept, args.tokenize)
    for i, reason in rejected:
        print(f"rejected record {i + 1}: {reason}", file=sys.stderr)
    print(f"kept={len(kept)} rejected={len(rejected)}", file=out)
    return EXIT_OK


def cmd_train(args, out) -> int:
    cfg = run_config_from_args(args)
    train_records = read_corpus(args.train_file, cfg.tokenize)
    dev_records = read_corpus(args.dev_file, cfg.tokenize)
    ckdir = Path(cfg.checkpoint_dir)
    ckdir.mkdir(parents=True, exist_ok=True)
    with open(ckdir / "train.log", "a", encoding="utf-8") as logf:

        def log(line):
            print(line, file=out)
            logf.write(line + "\n")
            logf.flush()

        result = train(cfg, train_records, dev_records, log=log)
        log(f"best_epoch={result.best_epoch} best_dev_f1={result.best_f1!r}")
    return EXIT_OK


def _load(path):
    try:
        return load_checkpoint(path)
    except (OSError, CheckpointError) as e:
        raise UsageError(f"cannot load checkpoint {path}: {e}") from None


def cmd_eval(args, out) -> int:
    model, sv, hv, meta = _load(args.checkpoint)
    mode = args.tokenize or meta.get("tokenize", "char")
    records = read_corpus(args.test_file, mode)
    src_known = sum(t in sv for r in records for t in r.symptoms)
    herb_known = sum(h in hv for r in records for h in r.herbs)
    if src_known == 0 or herb_known == 0:
        raise UsageError("vocabulary mismatch: test file shares no symptom tokens or no herbs with the checkpoint")
    dedup = not args.no_dedup
    preds, raws = predict(model, records, sv, hv, dedup=dedup)
    report = micro_prf(zip(preds, (r.herbs for r in records)), dedup=dedup)
    report.duplicate_rate = repetition_rate(raws)
    if args.format in ("text", "both"):
        print(report.as_text(), file=out)
    if args.format in ("kv", "both"):
        print(report.as_kv(), file=out)
    return EXIT_OK


def cmd_predict(args, out) -> int:
    model, sv, hv, meta = _load(args.checkpoint)
    tokens = tokenize(args.text, args.tokenize or meta.get("tokenize", "char"))
    if not tokens:
        raise UsageError("empty symptom text")
    outs, raws = model.generate_batch([sv.encode(tokens)])
    print(" ".join(hv.decode(outs[0])), file=out)
    if args.raw:
        print(" ".join(hv.decode(raws[0])), file=out)
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "stats": cmd_stats,
    "normalize": cmd_normalize,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args, out)
    except NumericError as e:
        print(f"error: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, DataError, ConfigError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
