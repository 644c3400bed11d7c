import numpy as np
import pytest

from seq2set.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from seq2set.corpus import Record, build_vocab
from seq2set.multilabel import MultiLabel, MultiLabelConfig
from seq2set.seq2seq import ModelConfig, Seq2Seq
from seq2set.tensor import make_rng


@pytest.fixture
def vocabs():
    return build_vocab([Record(["a", "b", "c"], ["X", "Y"]), Record(["c", "d"], ["Z"])])


def build(kind, sv, hv, **kw):
    if kind == "seq2seq":
        return Seq2Seq(ModelConfig(len(sv), hv.n_regular, embed_dim=3, hidden_dim=5, **kw), rng=make_rng(0))
    return MultiLabel(MultiLabelConfig(len(sv), hv.n_regular, embed_dim=3, hidden_dim=5, k=7, threshold=0.3), rng=make_rng(0))


@pytest.mark.parametrize("kind", ["seq2seq", "multilabel"])
def test_round_trip_is_bitwise(tmp_path, vocabs, kind):
    sv, hv = vocabs
    m = build(kind, sv, hv)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, m, sv, hv, {"epoch": 3})
    m2, sv2, hv2, meta = load_checkpoint(path)
    assert m2.kind == kind and m2.config == m.config
    assert sv2 == sv and hv2 == hv and meta["epoch"] == 3
    assert m2.params.keys() == m.params.keys()
    for k in m.params:
        assert m2.params[k].tobytes() == m.params[k].tobytes()
    # saving the loaded model reproduces the file byte for byte
    save_checkpoint(tmp_path / "again.ckpt", m2, sv2, hv2, meta)
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_coverage_disabled_config_survives(tmp_path, vocabs):
    sv, hv = vocabs
    m = build("seq2seq", sv, hv, coverage_enabled=False, soft_loss_enabled=False)
    save_checkpoint(tmp_path / "m.ckpt", m, sv, hv, {})
    m2 = load_checkpoint(tmp_path / "m.ckpt")[0]
    assert not m2.config.coverage_enabled and "cov_W" not in m2.params


def test_bad_magic(tmp_path):
    p = tmp_path / "x.ckpt"
    p.write_bytes(b"NOTIT" + b"\0" * 20)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(p)


def test_truncated_and_trailing(tmp_path, vocabs):
    sv, hv = vocabs
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, build("seq2seq", sv, hv), sv, hv, {})
    data = path.read_bytes()
    path.write_bytes(data[:-5])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    path.write_bytes(data + b"x")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_wrong_version(tmp_path, vocabs):
    sv, hv = vocabs
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, build("seq2seq", sv, hv), sv, hv, {})
    data = bytearray(path.read_bytes())
    data[5:9] = (99).to_bytes(4, "little")
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)
