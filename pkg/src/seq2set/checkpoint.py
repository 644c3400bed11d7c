"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"SGS2S"                      magic
    u32   format version
    u64   header length, then UTF-8 JSON header:
          {"kind": "seq2seq" | "multilabel", "config": {...},
           "source_vocab": [...], "herb_vocab": [...], "meta": {...}}
    u32   tensor count, then per tensor:
          u32 name length, name (UTF-8), u32 ndim, u64 * ndim shape,
          float64 little-endian values in row-major order
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from .corpus import Vocab
from .multilabel import MultiLabel, MultiLabelConfig
from .seq2seq import ModelConfig, Seq2Seq

MAGIC = b"SGS2S"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _vocab_from_list(tokens) -> Vocab:
    v = Vocab()
    if list(tokens[: len(v)]) != v.itos:
        raise CheckpointError("vocabulary does not start with the reserved tokens")
    for t in tokens[len(v) :]:
        v.add(t)
    return v


def save_checkpoint(path, model, source_vocab: Vocab, herb_vocab: Vocab, meta: dict | None = None) -> None:
    header = {
        "kind": model.kind,
        "config": asdict(model.config),
        "source_vocab": source_vocab.itos,
        "herb_vocab": herb_vocab.itos,
        "meta": meta or {},
    }
    hbytes = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(hbytes)))
        f.write(hbytes)
        f.write(struct.pack("<I", len(model.params)))
        for name, arr in model.params.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read(f, n: int) -> bytes:
    b = f.read(n)
    if len(b) != n:
        raise CheckpointError("truncated checkpoint")
    return b


def load_checkpoint(path):
    """Returns (model, source vocab, herb vocab, meta)."""
    with open(path, "rb") as f:
        if _read(f, len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
        (version,) = struct.unpack("<I", _read(f, 4))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<Q", _read(f, 8))
        header = json.loads(_read(f, hlen).decode("utf-8"))
        (count,) = struct.unpack("<I", _read(f, 4))
        params = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read(f, 4))
            name = _read(f, nlen).decode("utf-8")
            (ndim,) = struct.unpack("<I", _read(f, 4))
            shape = struct.unpack(f"<{ndim}Q", _read(f, 8 * ndim))
            n = int(np.prod(shape)) if ndim else 1
            params[name] = np.frombuffer(_read(f, 8 * n), dtype="<f8").astype(np.float64).reshape(shape)
        if f.read(1):
            raise CheckpointError(f"{path}: trailing bytes after tensors")

    kind = header["kind"]
    if kind == "seq2seq":
        model = Seq2Seq(ModelConfig(**header["config"]), params=params)
    elif kind == "multilabel":
        model = MultiLabel(MultiLabelConfig(**header["config"]), params=params)
    else:
        raise CheckpointError(f"unknown model kind {kind!r}")
    return model, _vocab_from_list(header["source_vocab"]), _vocab_from_list(header["herb_vocab"]), header["meta"]
