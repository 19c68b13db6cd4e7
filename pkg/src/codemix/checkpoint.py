"""Checkpoint container: a directory holding

  config.txt    human-readable `key = value` model configuration
  vocab.txt     one token per line, in id order
  manifest.tsv  name <TAB> dtype <TAB> shape <TAB> byte offset <TAB> scale
  weights.bin   raw little-endian payload blob

f32 payloads round-trip byte-exactly. Quantized models add i8 entries with
a per-tensor scale column.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import CheckpointError, ShapeError
from .numerics import Tensor
from .quant import QuantizedSeq2Seq, QuantizedTensor
from .seq2seq.model import Seq2SeqConfig, Seq2SeqModel, _param_shapes
from .text import Vocab

_FORMAT = "seq2seq-checkpoint-v1"
_DTYPES = {"f32": np.dtype("<f4"), "i8": np.dtype("int8")}


def _write_kv(path: Path, items: dict[str, object]) -> None:
    lines = [f"{k} = {v}\n" for k, v in items.items()]
    path.write_text("".join(lines), encoding="utf-8")


def read_kv(path: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CheckpointError(f"{path}: bad key-value line {lineno}: {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def save_checkpoint(model: Seq2SeqModel, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    cfg = model.config

    items: dict[str, object] = {"format": _FORMAT}
    items["quantized"] = int(isinstance(model, QuantizedSeq2Seq))
    items.update(cfg.scalar_items())
    _write_kv(path / "config.txt", items)

    (path / "vocab.txt").write_text(
        "".join(t + "\n" for t in cfg.vocab.id_to_token), encoding="utf-8")

    manifest_lines = []
    blob = bytearray()
    for name, _, _ in _param_shapes(cfg):
        if isinstance(model, QuantizedSeq2Seq) and name in model.qparams:
            q = model.qparams[name]
            payload = q.payload.tobytes()
            dtype, scale = "i8", repr(float(q.scale))
            shape = q.shape
        else:
            t = model.params[name]
            payload = t.data.astype("<f4").tobytes()
            dtype, scale = "f32", ""
            shape = t.data.shape
        shape_s = "x".join(str(s) for s in shape)
        manifest_lines.append(f"{name}\t{dtype}\t{shape_s}\t{len(blob)}\t{scale}\n")
        blob.extend(payload)
    (path / "manifest.tsv").write_text("".join(manifest_lines), encoding="utf-8")
    (path / "weights.bin").write_bytes(bytes(blob))


def _parse_manifest(path: Path):
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        parts = line.split("\t")
        if len(parts) != 5:
            raise CheckpointError(f"{path}: bad manifest line {lineno}: {line!r}")
        name, dtype, shape_s, offset_s, scale_s = parts
        if dtype not in _DTYPES:
            raise CheckpointError(f"{path}: unknown dtype {dtype!r} for tensor "
                                  f"'{name}'")
        try:
            shape = tuple(int(s) for s in shape_s.split("x"))
            offset = int(offset_s)
        except ValueError:
            raise CheckpointError(f"{path}: bad manifest line {lineno}: "
                                  f"{line!r}") from None
        rows.append((name, dtype, shape, offset, scale_s))
    return rows


def load_checkpoint(path):
    """Load a Seq2SeqModel (or QuantizedSeq2Seq) saved by save_checkpoint."""
    path = Path(path)
    for fname in ("config.txt", "vocab.txt", "manifest.tsv", "weights.bin"):
        if not (path / fname).exists():
            raise CheckpointError(f"{path}: missing {fname}")
    kv = read_kv(path / "config.txt")
    if kv.get("format") != _FORMAT:
        raise CheckpointError(f"{path}: unknown checkpoint format "
                              f"{kv.get('format')!r}")
    tokens = (path / "vocab.txt").read_text(encoding="utf-8").split("\n")[:-1]
    vocab = Vocab(tokens, mode=kv.get("vocab_mode", "word"))
    try:
        cfg = Seq2SeqConfig(
            vocab=vocab,
            n_enc_layers=int(kv["n_enc_layers"]),
            n_dec_layers=int(kv["n_dec_layers"]),
            d_model=int(kv["d_model"]),
            n_heads=int(kv["n_heads"]),
            d_ff=int(kv["d_ff"]),
            max_len=int(kv["max_len"]),
            dropout_prob=float(kv["dropout_prob"]),
            init_std=float(kv["init_std"]),
        )
    except KeyError as e:
        raise CheckpointError(f"{path}: config.txt missing key {e}") from None

    expected = {name: shape for name, shape, _ in _param_shapes(cfg)}
    blob = (path / "weights.bin").read_bytes()
    params: dict[str, Tensor] = {}
    qparams: dict[str, QuantizedTensor] = {}
    seen = set()
    for name, dtype, shape, offset, scale_s in _parse_manifest(path / "manifest.tsv"):
        if name not in expected:
            raise CheckpointError(f"{path}: unexpected tensor '{name}'")
        if shape != expected[name]:
            raise ShapeError(f"{path}: tensor '{name}' has shape {shape}, "
                             f"config implies {expected[name]}")
        np_dtype = _DTYPES[dtype]
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * np_dtype.itemsize
        if offset < 0 or offset + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated container: tensor "
                                  f"'{name}' needs bytes [{offset}, "
                                  f"{offset + nbytes}) of {len(blob)}")
        arr = np.frombuffer(blob, dtype=np_dtype, count=count,
                            offset=offset).reshape(shape)
        if dtype == "i8":
            qparams[name] = QuantizedTensor(arr.copy(), np.float32(scale_s),
                                            shape)
        else:
            params[name] = Tensor(arr.astype(np.float32),
                                  requires_grad=True)
        seen.add(name)
    missing = set(expected) - seen
    if missing:
        raise CheckpointError(f"{path}: manifest missing tensors: "
                              f"{sorted(missing)}")
    if qparams:
        return QuantizedSeq2Seq(cfg, params, qparams)
    return Seq2SeqModel(cfg, params)
