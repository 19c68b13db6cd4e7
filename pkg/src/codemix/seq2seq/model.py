"""Transformer encoder-decoder with tied embeddings and learned positions.

Conventions used everywhere in the package:
  encoder input   = source tokens + EOS (+ PAD)
  decoder input   = BOS + target tokens (+ PAD)
  decoder labels  = target tokens + EOS (+ PAD, ignored by the loss)

With equal source/target token counts (the autoencoder augmentation) this
makes cross-attention matrices square, which the attention analysis relies
on. Pre-norm residual blocks are used for stable from-scratch training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, ShapeError
from ..numerics import (Tensor, add, dropout, gather_rows, gelu,
                        layer_norm, linear, matmul, mul, reshape, softmax,
                        transpose)
from ..text import BOS, EOS, PAD, Vocab, encode

NEG_INF = -1e9  # additive attention mask; finite so tensors stay finite


@dataclass
class Seq2SeqConfig:
    vocab: Vocab
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 256
    max_len: int = 32
    dropout_prob: float = 0.1
    init_std: float = 0.02

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise DataError(f"d_model {self.d_model} not divisible by "
                            f"n_heads {self.n_heads}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def scalar_items(self) -> dict[str, object]:
        return {
            "n_enc_layers": self.n_enc_layers,
            "n_dec_layers": self.n_dec_layers,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "d_ff": self.d_ff,
            "max_len": self.max_len,
            "dropout_prob": self.dropout_prob,
            "init_std": self.init_std,
            "vocab_mode": self.vocab.mode,
        }


@dataclass
class AttentionCapture:
    """Row-stochastic cross-attention matrices, one array per decoder layer
    of shape (batch, heads, decoder positions, encoder positions)."""

    layers: list[np.ndarray] = field(default_factory=list)


def _param_shapes(cfg: Seq2SeqConfig) -> list[tuple[str, tuple[int, ...], str]]:
    """(name, shape, kind) for every parameter, in creation order.
    kind is one of weight/bias/ln_gain/ln_bias."""
    d, f, v, m = cfg.d_model, cfg.d_ff, len(cfg.vocab), cfg.max_len
    out: list[tuple[str, tuple[int, ...], str]] = [
        ("tok_emb", (v, d), "weight"),
        ("enc_pos", (m, d), "weight"),
        ("dec_pos", (m, d), "weight"),
    ]

    def attn(prefix: str):
        for nm in ("wq", "wk", "wv", "wo"):
            out.append((f"{prefix}.{nm}", (d, d), "weight"))
        for nm in ("bq", "bk", "bv", "bo"):
            out.append((f"{prefix}.{nm}", (d,), "bias"))

    def ln(prefix: str):
        out.append((f"{prefix}.g", (d,), "ln_gain"))
        out.append((f"{prefix}.b", (d,), "ln_bias"))

    def ffn(prefix: str):
        out.append((f"{prefix}.w1", (d, f), "weight"))
        out.append((f"{prefix}.b1", (f,), "bias"))
        out.append((f"{prefix}.w2", (f, d), "weight"))
        out.append((f"{prefix}.b2", (d,), "bias"))

    for i in range(cfg.n_enc_layers):
        ln(f"enc{i}.ln1"); attn(f"enc{i}.attn")
        ln(f"enc{i}.ln2"); ffn(f"enc{i}.ffn")
    ln("enc_lnf")
    for i in range(cfg.n_dec_layers):
        ln(f"dec{i}.ln1"); attn(f"dec{i}.self")
        ln(f"dec{i}.ln2"); attn(f"dec{i}.cross")
        ln(f"dec{i}.ln3"); ffn(f"dec{i}.ffn")
    ln("dec_lnf")
    return out


class Seq2SeqModel:
    """Parameters plus forward passes. Training mutates parameters through
    the optimizer (single writer); inference is read-only."""

    def __init__(self, config: Seq2SeqConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    # Parameter access point; the quantized variant overrides this.
    def p(self, name: str) -> Tensor:
        return self.params[name]

    @property
    def model_id(self) -> str:
        c = self.config
        return f"seq2seq-{c.n_enc_layers}x{c.n_dec_layers}-d{c.d_model}"

    def trainable(self) -> dict[str, Tensor]:
        return self.params

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, t in self.params.items():
            np.copyto(t.data, snap[k])

    def astype(self, dtype) -> "Seq2SeqModel":
        params = {k: Tensor(t.data.astype(dtype), requires_grad=True)
                  for k, t in self.params.items()}
        return Seq2SeqModel(self.config, params)

    # -- forward ----------------------------------------------------------

    def _attention(self, q_in: Tensor, kv_in: Tensor, prefix: str,
                   mask: np.ndarray | None, capture: list | None,
                   train: bool, rng) -> Tensor:
        cfg = self.config
        B, T, D = q_in.shape
        S = kv_in.shape[1]
        H, dh = cfg.n_heads, cfg.head_dim

        def heads(x: Tensor, n: int) -> Tensor:
            return transpose(reshape(x, (B, n, H, dh)), (0, 2, 1, 3))

        q = heads(linear(q_in, self.p(f"{prefix}.wq"), self.p(f"{prefix}.bq")), T)
        k = heads(linear(kv_in, self.p(f"{prefix}.wk"), self.p(f"{prefix}.bk")), S)
        v = heads(linear(kv_in, self.p(f"{prefix}.wv"), self.p(f"{prefix}.bv")), S)
        scores = matmul(mul(q, 1.0 / np.sqrt(dh)), transpose(k, (0, 1, 3, 2)))
        if mask is not None:
            scores = add(scores, mask)
        attn = softmax(scores, axis=-1)
        if capture is not None:
            capture.append(attn.data.copy())
        if train and cfg.dropout_prob > 0:
            attn = dropout(attn, cfg.dropout_prob, rng)
        ctx = matmul(attn, v)  # (B, H, T, dh)
        ctx = reshape(transpose(ctx, (0, 2, 1, 3)), (B, T, D))
        return linear(ctx, self.p(f"{prefix}.wo"), self.p(f"{prefix}.bo"))

    def _ffn(self, x: Tensor, prefix: str) -> Tensor:
        h = gelu(linear(x, self.p(f"{prefix}.w1"), self.p(f"{prefix}.b1")))
        return linear(h, self.p(f"{prefix}.w2"), self.p(f"{prefix}.b2"))

    def _ln(self, x: Tensor, prefix: str) -> Tensor:
        return layer_norm(x, self.p(f"{prefix}.g"), self.p(f"{prefix}.b"))

    def _drop(self, x: Tensor, train: bool, rng) -> Tensor:
        if train and self.config.dropout_prob > 0:
            return dropout(x, self.config.dropout_prob, rng)
        return x

    def _embed(self, ids: np.ndarray, pos_name: str) -> Tensor:
        cfg = self.config
        B, T = ids.shape
        if T > cfg.max_len:
            raise DataError(f"sequence length {T} exceeds max_len {cfg.max_len}")
        tok = gather_rows(self.p("tok_emb"), ids)
        pos = gather_rows(self.p(pos_name), np.arange(T))
        return add(tok, pos)

    def encode(self, src_ids: np.ndarray, train: bool = False,
               rng=None) -> tuple[Tensor, np.ndarray]:
        """Returns (encoder states (B,S,D), additive key mask (B,1,1,S))."""
        src_ids = np.asarray(src_ids, dtype=np.int64)
        key_mask = np.where(src_ids == PAD, NEG_INF, 0.0)
        key_mask = key_mask[:, None, None, :].astype(self.dtype)
        x = self._embed(src_ids, "enc_pos")
        for i in range(self.config.n_enc_layers):
            h = self._ln(x, f"enc{i}.ln1")
            a = self._attention(h, h, f"enc{i}.attn", key_mask, None, train, rng)
            x = add(x, self._drop(a, train, rng))
            f = self._ffn(self._ln(x, f"enc{i}.ln2"), f"enc{i}.ffn")
            x = add(x, self._drop(f, train, rng))
        return self._ln(x, "enc_lnf"), key_mask

    def decode(self, enc_out: Tensor, enc_key_mask: np.ndarray,
               dec_in: np.ndarray, train: bool = False, rng=None,
               capture: AttentionCapture | None = None) -> Tensor:
        """Teacher-forced decoder pass; returns logits (B, T, vocab)."""
        dec_in = np.asarray(dec_in, dtype=np.int64)
        B, T = dec_in.shape
        causal = np.triu(np.full((T, T), NEG_INF, dtype=self.dtype), k=1)
        causal = causal[None, None, :, :]
        x = self._embed(dec_in, "dec_pos")
        for i in range(self.config.n_dec_layers):
            h = self._ln(x, f"dec{i}.ln1")
            a = self._attention(h, h, f"dec{i}.self", causal, None, train, rng)
            x = add(x, self._drop(a, train, rng))
            sink = capture.layers if capture is not None else None
            c = self._attention(self._ln(x, f"dec{i}.ln2"), enc_out,
                                f"dec{i}.cross", enc_key_mask, sink, train, rng)
            x = add(x, self._drop(c, train, rng))
            f = self._ffn(self._ln(x, f"dec{i}.ln3"), f"dec{i}.ffn")
            x = add(x, self._drop(f, train, rng))
        x = self._ln(x, "dec_lnf")
        # Tied output projection: logits = x @ tok_emb^T
        return linear(x, self.p("tok_emb"), transpose_w=True)

    def forward(self, src_ids: np.ndarray, dec_in: np.ndarray,
                train: bool = False, rng=None,
                capture_attn: bool = False
                ) -> tuple[Tensor, AttentionCapture | None]:
        capture = AttentionCapture() if capture_attn else None
        enc_out, key_mask = self.encode(src_ids, train, rng)
        logits = self.decode(enc_out, key_mask, dec_in, train, rng, capture)
        return logits, capture

    @property
    def dtype(self):
        return self.params["tok_emb"].dtype


def init_model(config: Seq2SeqConfig, rng: np.random.Generator,
               dtype=np.float32) -> Seq2SeqModel:
    """All weight matrices ~ N(0, init_std); biases and layer-norm offsets
    zero; layer-norm gains one. Draw order is fixed, so a seed pins the
    weights bit-for-bit."""
    params: dict[str, Tensor] = {}
    for name, shape, kind in _param_shapes(config):
        if kind == "weight":
            data = rng.normal(0.0, config.init_std, size=shape)
        elif kind == "ln_gain":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        params[name] = Tensor(data.astype(dtype), requires_grad=True)
    return Seq2SeqModel(config, params)


def forward_teacher_forced(model: Seq2SeqModel, src_ids, tgt_ids,
                           capture_attn: bool = False):
    """Single-example teacher-forced pass.

    `src_ids` is the full encoder input and `tgt_ids` the full decoder input
    (callers BOS-prefix the target themselves; labels are the EOS-suffixed
    target). Returns logits of shape (len(tgt_ids), vocab), plus the
    attention capture when requested.
    """
    src = np.asarray([src_ids], dtype=np.int64)
    tgt = np.asarray([tgt_ids], dtype=np.int64)
    logits, capture = model.forward(src, tgt, capture_attn=capture_attn)
    return reshape(logits, (tgt.shape[1], len(model.config.vocab))), capture


def encode_source(text: str, vocab: Vocab) -> list[int]:
    """Encoder input ids for a text: tokens + EOS."""
    return encode(text, vocab) + [EOS]


def pad_batch(src_seqs: list[list[int]], tgt_seqs: list[list[int]],
              max_len: int) -> dict[str, np.ndarray]:
    """Pad plain (BOS/EOS-free) id sequences into training arrays.

    src     = tokens + EOS + PAD...
    dec_in  = BOS + tokens + PAD...
    labels  = tokens + EOS + PAD...  (label_mask marks real positions)
    """
    if len(src_seqs) != len(tgt_seqs):
        raise ShapeError("sources and targets differ in length")
    S = max(len(x) + 1 for x in src_seqs)
    T = max(len(x) + 1 for x in tgt_seqs)
    if S > max_len or T > max_len:
        raise DataError(f"batch length (src {S}, tgt {T}) exceeds max_len {max_len}")
    B = len(src_seqs)
    src = np.full((B, S), PAD, dtype=np.int64)
    dec_in = np.full((B, T), PAD, dtype=np.int64)
    labels = np.full((B, T), PAD, dtype=np.int64)
    mask = np.zeros((B, T), dtype=np.float32)
    for i, (s, t) in enumerate(zip(src_seqs, tgt_seqs)):
        src[i, :len(s)] = s
        src[i, len(s)] = EOS
        dec_in[i, 0] = BOS
        dec_in[i, 1:1 + len(t)] = t
        labels[i, :len(t)] = t
        labels[i, len(t)] = EOS
        mask[i, :len(t) + 1] = 1.0
    return {"src": src, "dec_in": dec_in, "labels": labels, "label_mask": mask}


def make_batch(vocab: Vocab, sources: list[str], targets: list[str],
               max_len: int) -> dict[str, np.ndarray]:
    """Encode raw texts and pad them into training arrays (see pad_batch)."""
    return pad_batch([encode(s, vocab) for s in sources],
                     [encode(t, vocab) for t in targets], max_len)
