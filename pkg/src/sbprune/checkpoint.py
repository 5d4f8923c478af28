"""Binary checkpoint format for encoder models.

Layout, in order:

  - 8 bytes ASCII magic ``SBPRUNE1``
  - 8 bytes little-endian unsigned header length H
  - H bytes UTF-8 JSON header: format version, encoder config, optional
    vocabulary token list, and a tensor table of {name, shape, offset}
  - tensor payloads: contiguous little-endian IEEE-754 float32, in header
    order, offsets relative to the first payload byte

File size must equal 16 + H + total payload exactly; anything shorter or
longer is rejected, so a truncated or padded file can never half-load.
Writes go to a temp file in the target directory and rename into place.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .data import Vocab
from .encoder import EncoderConfig, EncoderModel, LayerParams
from .errors import CorruptionError, FormatError
from .tensor import Tensor

MAGIC = b"SBPRUNE1"
FORMAT_VERSION = 1


def save_checkpoint(model: EncoderModel, path) -> None:
    tensors = []
    payloads = []
    offset = 0
    for name, t in model.named_parameters():
        data = np.ascontiguousarray(t.data.astype("<f4", copy=False))
        tensors.append({"name": name, "shape": list(t.data.shape), "offset": offset})
        payloads.append(data.tobytes())
        offset += data.nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "vocab": model.vocab.to_list() if model.vocab is not None else None,
        "tensors": tensors,
    }
    blob = json.dumps(header, ensure_ascii=False).encode("utf-8")

    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".ckpt-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<Q", len(blob)))
            f.write(blob)
            for p in payloads:
                f.write(p)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _expected_names_and_shapes(config: EncoderConfig):
    d, f = config.hidden_dim, config.ffn_dim
    out = [("token_embedding", (config.vocab_size, d)),
           ("position_embedding", (config.max_seq_len, d))]
    part_shapes = {
        "attn.wq": (d, d), "attn.wk": (d, d), "attn.wv": (d, d), "attn.wo": (d, d),
        "attn.bq": (d,), "attn.bk": (d,), "attn.bv": (d,), "attn.bo": (d,),
        "attn_ln.gain": (d,), "attn_ln.bias": (d,),
        "ffn.w1": (d, f), "ffn.b1": (f,), "ffn.w2": (f, d), "ffn.b2": (d,),
        "ffn_ln.gain": (d,), "ffn_ln.bias": (d,),
    }
    for i in range(config.num_layers):
        for suffix, _ in LayerParams.NAMED:
            out.append((f"layer.{i}.{suffix}", part_shapes[suffix]))
    return out


def load_checkpoint(path) -> EncoderModel:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise FormatError(f"not a checkpoint (bad magic): {path}")
    (header_len,) = struct.unpack("<Q", raw[8:16])
    if 16 + header_len > len(raw):
        raise CorruptionError("header extends past end of file")
    try:
        header = json.loads(raw[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptionError(f"unreadable header: {e}") from None
    if not isinstance(header, dict) or header.get("format_version") != FORMAT_VERSION:
        raise FormatError(
            f"unsupported format version {header.get('format_version')!r}"
        )
    try:
        config = EncoderConfig.from_dict(header["config"])
        table = header["tensors"]
    except (KeyError, TypeError) as e:
        raise CorruptionError(f"malformed header: {e}") from None

    expected = _expected_names_and_shapes(config)
    if len(table) != len(expected):
        raise CorruptionError(
            f"tensor table has {len(table)} entries, config implies {len(expected)}"
        )
    offset = 0
    for entry, (name, shape) in zip(table, expected):
        if entry.get("name") != name:
            raise CorruptionError(f"tensor {entry.get('name')!r} where {name!r} expected")
        if tuple(entry.get("shape", ())) != shape:
            raise CorruptionError(
                f"tensor {name}: shape {entry.get('shape')} does not match config {list(shape)}"
            )
        if entry.get("offset") != offset:
            raise CorruptionError(f"tensor {name}: offset {entry.get('offset')} != {offset}")
        offset += int(np.prod(shape)) * 4

    body = raw[16 + header_len:]
    if len(body) != offset:
        raise CorruptionError(
            f"payload is {len(body)} bytes, header declares {offset}"
        )

    arrays = {}
    for entry, (name, shape) in zip(table, expected):
        start = entry["offset"]
        count = int(np.prod(shape))
        arr = np.frombuffer(body, dtype="<f4", count=count, offset=start)
        arrays[name] = arr.astype(np.float32).reshape(shape)

    def tensor(name):
        return Tensor(arrays[name], requires_grad=True)

    layers = []
    for i in range(config.num_layers):
        layers.append(LayerParams(**{
            attr: tensor(f"layer.{i}.{suffix}") for suffix, attr in LayerParams.NAMED
        }))
    vocab = Vocab(header["vocab"]) if header.get("vocab") is not None else None
    return EncoderModel(config=config, token_embedding=tensor("token_embedding"),
                        position_embedding=tensor("position_embedding"),
                        layers=layers, vocab=vocab)
