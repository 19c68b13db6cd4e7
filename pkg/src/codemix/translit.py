"""Hybrid transliteration: dictionary lookup first, character-level
transformer fallback decoded greedily for out-of-dictionary words."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError
from .numerics import make_rng
from .seq2seq import (Seq2SeqConfig, Seq2SeqModel, greedy_decode, init_model)
from .seq2seq.model import encode_source
from .text import ParallelExample, Provenance, Vocab, build_vocab, decode
from .train import fit


class TranslitDict:
    """word -> transliteration map with case-normalized (lowercase) keys.
    Duplicate keys and empty entries are rejected."""

    def __init__(self, pairs: dict[str, str] | None = None):
        self.pairs: dict[str, str] = {}
        for k, v in (pairs or {}).items():
            self.add(k, v)

    def add(self, word: str, translit: str) -> None:
        key = word.strip().lower()
        value = translit.strip()
        if not key or not value:
            raise DataError("transliteration entries must be non-empty")
        if key in self.pairs:
            raise DataError(f"duplicate transliteration key: {key!r}")
        self.pairs[key] = value

    def lookup(self, word: str) -> str | None:
        return self.pairs.get(word.lower())

    def __len__(self) -> int:
        return len(self.pairs)


def load_translit_dict(path) -> TranslitDict:
    """TSV file: `word<TAB>transliteration` per line, UTF-8."""
    path = Path(path)
    try:
        raw = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        raise DataError(f"{path}: not valid UTF-8: {e}") from None
    d = TranslitDict()
    for lineno, line in enumerate(raw.split("\n"), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}: malformed line {lineno}: {line!r}")
        try:
            d.add(parts[0], parts[1])
        except DataError as e:
            raise DataError(f"{path}: line {lineno}: {e}") from None
    return d


def char_seq2seq_config(vocab: Vocab, max_len: int = 24) -> Seq2SeqConfig:
    """The character-level fallback model: 2+2 layers, 4 heads, hidden 128."""
    if vocab.mode != "char":
        raise DataError("transliteration model needs a char-level vocab")
    return Seq2SeqConfig(vocab=vocab, n_enc_layers=2, n_dec_layers=2,
                         d_model=128, n_heads=4, d_ff=256, max_len=max_len,
                         dropout_prob=0.0)


def transliterate_word(model: Seq2SeqModel, word: str,
                       max_len: int = 24) -> str:
    vocab = model.config.vocab
    ids = greedy_decode(model, encode_source(word, vocab), max_len=max_len)
    return decode(ids, vocab)


def hybrid_transliterate(text: str, tdict: TranslitDict,
                         model: Seq2SeqModel | None = None,
                         decode_word=transliterate_word) -> str:
    """Per word: use the dictionary mapping when present, otherwise greedy
    decode the character model. Words are joined by single spaces."""
    out = []
    for word in text.split():
        hit = tdict.lookup(word)
        if hit is not None:
            out.append(hit)
        elif model is not None:
            out.append(decode_word(model, word))
        else:
            raise DataError(f"word {word!r} not in the transliteration "
                            f"dictionary and no fallback model was given")
    return " ".join(out)


def train_translit(word_pairs: list[tuple[str, str]],
                   config: Seq2SeqConfig | None = None,
                   rng: np.random.Generator | None = None,
                   epochs: int = 60, lr: float = 1e-3,
                   batch_size: int = 32) -> Seq2SeqModel:
    """Character-level seq2seq training on (word, transliteration) pairs,
    reusing the shared training loop (no augmentation)."""
    if not word_pairs:
        raise DataError("train_translit needs a non-empty pair list")
    rng = rng or make_rng(0)
    corpus = [ParallelExample(w.lower(), t.lower(), Provenance.CLEAN_MANUAL)
              for w, t in word_pairs]
    if config is None:
        vocab = build_vocab(corpus, mode="char", min_count=1)
        config = char_seq2seq_config(vocab)
    init_rng, fit_rng = rng.spawn(2)
    model = init_model(config, init_rng)
    fit(model, corpus, epochs=epochs, lr=lr, batch_size=batch_size,
        kinds=(), lam=0.0, label_smoothing=0.0, weight_decay=0.0,
        rng=fit_rng, stage="translit")
    return model
