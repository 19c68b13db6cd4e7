import numpy as np
import pytest

from codemix.errors import DataError
from codemix.numerics import make_rng
from codemix.translit import (TranslitDict, char_seq2seq_config,
                              hybrid_transliterate, load_translit_dict,
                              train_translit, transliterate_word)
from codemix.text import build_vocab


class TestDict:
    def test_case_normalized_lookup(self):
        d = TranslitDict({"Juta": "joota"})
        assert d.lookup("JUTA") == "joota"
        assert d.lookup("juta") == "joota"

    def test_duplicate_keys_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            TranslitDict({"a": "x"}).add("A", "y")

    def test_empty_entries_rejected(self):
        with pytest.raises(DataError):
            TranslitDict({"": "x"})
        with pytest.raises(DataError):
            TranslitDict({"a": "  "})

    def test_load_tsv(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("juta\tjoota\nkala\tkaala\n", encoding="utf-8")
        d = load_translit_dict(p)
        assert len(d) == 2 and d.lookup("kala") == "kaala"

    def test_load_rejects_malformed(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("juta joota\n", encoding="utf-8")
        with pytest.raises(DataError, match="line 1"):
            load_translit_dict(p)

    def test_load_rejects_duplicates(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("a\tx\na\ty\n", encoding="utf-8")
        with pytest.raises(DataError, match="line 2"):
            load_translit_dict(p)


def cipher_pairs(n_words, seed, word_len=(3, 7)):
    """Alphabet substitution cipher task: a -> n, b -> o, ..."""
    src_alpha = "abcdefghijklm"
    tgt_alpha = "nopqrstuvwxyz"
    table = str.maketrans(src_alpha, tgt_alpha)
    rng = make_rng(seed)
    seen = set()
    pairs = []
    while len(pairs) < n_words:
        length = int(rng.integers(word_len[0], word_len[1]))
        w = "".join(src_alpha[int(rng.integers(13))] for _ in range(length))
        if w in seen:
            continue
        seen.add(w)
        pairs.append((w, w.translate(table)))
    return pairs


class TestHybrid:
    def test_all_words_in_dict_bypass_model(self):
        d = TranslitDict({"juta": "joota", "kala": "kaala"})
        calls = []

        def spy(model, word):
            calls.append(word)
            return word

        out = hybrid_transliterate("juta kala juta", d, model=object(),
                                   decode_word=spy)
        assert out == "joota kaala joota"
        assert calls == []  # dictionary path only

    def test_model_called_exactly_for_oov_words(self):
        d = TranslitDict({"juta": "joota"})
        calls = []

        def spy(model, word):
            calls.append(word)
            return word.upper()

        out = hybrid_transliterate("juta zzz juta yyy", d, model=object(),
                                   decode_word=spy)
        assert out == "joota ZZZ joota YYY"
        assert calls == ["zzz", "yyy"]

    def test_empty_input_empty_output(self):
        d = TranslitDict({"a": "b"})
        assert hybrid_transliterate("", d) == ""

    def test_oov_without_model_rejected(self):
        d = TranslitDict({"juta": "joota"})
        with pytest.raises(DataError, match="zzz"):
            hybrid_transliterate("juta zzz", d)


class TestTrainTranslit:
    def test_cipher_generalizes_to_held_out_words(self):
        # word lengths 1-8 give direct per-character supervision; dropout
        # pushes the model from memorization to the systematic mapping
        train = cipher_pairs(60, seed=60, word_len=(1, 8))
        test = [p for p in cipher_pairs(80, seed=61)[60:]
                if p not in train][:20]
        vocab = build_vocab([w for p in train for w in p], mode="char")
        cfg = char_seq2seq_config(vocab)
        cfg.dropout_prob = 0.2
        model = train_translit(train, config=cfg, rng=make_rng(62),
                               epochs=400, lr=1e-3, batch_size=16)
        correct = sum(transliterate_word(model, w) == t for w, t in test)
        assert correct / len(test) >= 0.95

    def test_overfit_memorizes_single_char_words(self):
        pairs = [("a", "n"), ("b", "o"), ("c", "p"), ("d", "q")]
        model = train_translit(pairs, rng=make_rng(63), epochs=150, lr=2e-3)
        for w, t in pairs:
            assert transliterate_word(model, w) == t

    def test_oov_word_after_overfit(self):
        pairs = cipher_pairs(10, seed=64)
        d = TranslitDict(dict(pairs[:5]))
        model = train_translit(pairs, rng=make_rng(65), epochs=200, lr=1e-3)
        oov_word, oov_tgt = pairs[7]
        assert d.lookup(oov_word) is None
        out = hybrid_transliterate(oov_word, d, model)
        assert out == oov_tgt  # memorized by the fallback model

    def test_output_chars_within_target_vocab(self):
        pairs = cipher_pairs(30, seed=66)
        model = train_translit(pairs, rng=make_rng(67), epochs=60, lr=1e-3)
        vocab_chars = set("".join(model.config.vocab.id_to_token[5:]))
        for w, _ in cipher_pairs(10, seed=68):
            out = transliterate_word(model, w)
            assert set(out) <= vocab_chars | {" "}

    def test_deterministic(self):
        pairs = cipher_pairs(10, seed=69)
        m1 = train_translit(pairs, rng=make_rng(70), epochs=5)
        m2 = train_translit(pairs, rng=make_rng(70), epochs=5)
        for k in m1.params:
            assert np.array_equal(m1.params[k].data, m2.params[k].data)

    def test_empty_pairs_rejected(self):
        with pytest.raises(DataError):
            train_translit([])

    def test_char_config_requires_char_vocab(self):
        with pytest.raises(DataError):
            char_seq2seq_config(build_vocab(["a b"], mode="word"))
