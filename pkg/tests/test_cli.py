import io
import json

import pytest

from seq2set.cli import main
from seq2set.corpus import read_corpus

TINY = ["--embed-dim", "4", "--hidden-dim", "8", "--batch-size", "10", "--lr", "0.01", "--tokenize", "whitespace"]


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    common = ["--symptoms", 8, "--herbs", 10, "--seed", 3]
    assert run("synth", "--out", d / "train.tsv", "--records", 60, *common)[0] == 0
    assert run("synth", "--out", d / "dev.tsv", "--records", 20, "--skip", 60, *common)[0] == 0
    return d


@pytest.fixture(scope="module")
def trained(corpus):
    out_dir = corpus / "run"
    code, text = run("train", "--train", corpus / "train.tsv", "--dev", corpus / "dev.tsv", "--out", out_dir,
                     "--epochs", 3, *TINY)
    assert code == 0, text
    return out_dir, text


def test_synth_round_trip_and_determinism(corpus, tmp_path):
    records = read_corpus(corpus / "train.tsv", "whitespace")
    assert len(records) == 60
    assert all(len(set(r.herbs)) == len(r.herbs) for r in records)
    run("synth", "--out", tmp_path / "a.tsv", "--records", 60, "--symptoms", 8, "--herbs", 10, "--seed", 3)
    assert (tmp_path / "a.tsv").read_bytes() == (corpus / "train.tsv").read_bytes()


def test_skip_gives_continuation_of_the_stream(corpus, tmp_path):
    run("synth", "--out", tmp_path / "all.tsv", "--records", 80, "--symptoms", 8, "--herbs", 10, "--seed", 3)
    lines = (tmp_path / "all.tsv").read_text(encoding="utf-8").splitlines()
    assert lines[60:] == (corpus / "dev.tsv").read_text(encoding="utf-8").splitlines()


def test_stats(corpus):
    code, text = run("stats", corpus / "train.tsv", "--tokenize", "whitespace")
    assert code == 0 and text.splitlines()[0].split() == ["records", "60"]
    assert "average" in text


def test_normalize(tmp_path):
    (tmp_path / "raw.tsv").write_text("头痛\t甲 方一\n咳\t:5g\n", encoding="utf-8")
    (tmp_path / "al.tsv").write_text("@方一\t乙 甲\n", encoding="utf-8")
    code, text = run("normalize", tmp_path / "raw.tsv", tmp_path / "out.tsv", "--aliases", tmp_path / "al.tsv")
    assert code == 0 and "kept=1 rejected=1" in text
    assert (tmp_path / "out.tsv").read_text(encoding="utf-8") == "头痛\t甲 乙\n"


def test_train_log_and_checkpoints(trained):
    out_dir, text = trained
    assert (out_dir / "best.ckpt").exists() and (out_dir / "last.ckpt").exists()
    lines = text.splitlines()
    assert [l.split()[0] for l in lines[:3]] == ["epoch=1", "epoch=2", "epoch=3"]
    assert lines[-1].startswith("best_epoch=")
    assert (out_dir / "train.log").read_text(encoding="utf-8") == text


def test_eval_reproduces_best_dev_f1(trained, corpus):
    out_dir, text = trained
    best = float(text.splitlines()[-1].split("best_dev_f1=")[1])
    code, out = run("eval", out_dir / "best.ckpt", corpus / "dev.tsv", "--format", "kv")
    assert code == 0
    kv = dict(item.split("=") for item in out.split())
    assert float(kv["micro_f1"]) == best


def test_eval_no_dedup_never_scores_higher(trained, corpus):
    out_dir, _ = trained
    _, a = run("eval", out_dir / "last.ckpt", corpus / "dev.tsv", "--format", "kv")
    _, b = run("eval", out_dir / "last.ckpt", corpus / "dev.tsv", "--format", "kv", "--no-dedup")
    fa = float(dict(i.split("=") for i in a.split())["micro_p"])
    fb = float(dict(i.split("=") for i in b.split())["micro_p"])
    assert fb <= fa


def test_eval_vocab_mismatch(trained, tmp_path):
    out_dir, _ = trained
    (tmp_path / "other.tsv").write_text("zz yy\tQQ\n", encoding="utf-8")
    assert run("eval", out_dir / "best.ckpt", tmp_path / "other.tsv")[0] == 2


def test_predict(trained, corpus):
    out_dir, _ = trained
    symptoms = " ".join(read_corpus(corpus / "dev.tsv", "whitespace")[0].symptoms)
    code, text = run("predict", out_dir / "best.ckpt", symptoms, "--raw")
    assert code == 0
    dedup, raw = text.split("\n")[:2]
    assert len(dedup.split()) == len(set(dedup.split())) <= 20
    assert len(raw.split()) >= len(dedup.split())
    assert run("predict", out_dir / "best.ckpt", symptoms)[1] == run("predict", out_dir / "best.ckpt", symptoms)[1]


def test_predict_empty_text(trained):
    out_dir, _ = trained
    assert run("predict", out_dir / "best.ckpt", "   ")[0] == 2


def test_same_seed_gives_identical_logs(corpus, tmp_path):
    logs = []
    for name in ("a", "b"):
        code, _ = run("train", "--train", corpus / "train.tsv", "--dev", corpus / "dev.tsv", "--out", tmp_path / name,
                      "--epochs", 2, *TINY)
        assert code == 0
        logs.append((tmp_path / name / "train.log").read_bytes())
    assert logs[0] == logs[1]
    assert (tmp_path / "a" / "last.ckpt").read_bytes() == (tmp_path / "b" / "last.ckpt").read_bytes()


def test_config_file_with_flag_override(corpus, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 5, "hidden_dim": 8, "embed_dim": 4, "tokenize": "whitespace"}))
    code, text = run("train", "--train", corpus / "train.tsv", "--dev", corpus / "dev.tsv", "--out", tmp_path / "r",
                     "--config", cfg, "--epochs", 1)
    assert code == 0 and text.splitlines()[0].startswith("epoch=1") and "epoch=2" not in text


def test_multilabel_training(corpus, tmp_path):
    code, text = run("train", "--train", corpus / "train.tsv", "--dev", corpus / "dev.tsv", "--out", tmp_path / "ml",
                     "--variant", "multilabel", "--epochs", 2, *TINY)
    assert code == 0, text
    assert run("eval", tmp_path / "ml" / "best.ckpt", corpus / "dev.tsv")[0] == 0


@pytest.mark.parametrize(
    "extra",
    [
        ["--epochs", "0"],
        ["--variant", "multilabel", "--coverage"],
        ["--lr", "-1"],
    ],
)
def test_invalid_training_config(corpus, tmp_path, extra):
    code, _ = run("train", "--train", corpus / "train.tsv", "--dev", corpus / "dev.tsv", "--out", tmp_path / "x", *extra)
    assert code == 2


def test_unreadable_inputs(tmp_path):
    assert run("stats", tmp_path / "missing.tsv")[0] == 2
    assert run("eval", tmp_path / "missing.ckpt", tmp_path / "missing.tsv")[0] == 2
    (tmp_path / "bad.tsv").write_text("no tab\n", encoding="utf-8")
    assert run("stats", tmp_path / "bad.tsv")[0] == 2


def test_unknown_command():
    assert run("frobnicate")[0] == 2
