import numpy as np
import pytest

from codemix.errors import DataError
from codemix.numerics import (AdamWState, finite_diff_grad_check, make_rng,
                              softmax, step_tensors, Tensor)
from codemix.seq2seq import (Seq2SeqConfig, beam_search, forward_teacher_forced,
                             greedy_decode, init_model, label_smoothed_ce,
                             make_batch)
from codemix.text import BOS, EOS, PAD, Vocab, build_vocab

from oracles import exhaustive_best_sequence, sequence_log_prob


def tiny_vocab(n_content=4):
    return Vocab([f"w{i}" for i in range(n_content)])


def tiny_model(seed=0, n_content=4, layers=1, d=16, heads=2, max_len=12,
               dropout=0.0):
    cfg = Seq2SeqConfig(vocab=tiny_vocab(n_content), n_enc_layers=layers,
                        n_dec_layers=layers, d_model=d, n_heads=heads,
                        d_ff=2 * d, max_len=max_len, dropout_prob=dropout)
    return init_model(cfg, make_rng(seed))


class TestInit:
    def test_weight_statistics(self):
        m = tiny_model(seed=1, n_content=200, d=64)
        emb = m.params["tok_emb"].data  # 205 x 64 > 10k elements
        assert emb.size > 10_000
        assert -0.01 < emb.mean() < 0.01
        assert 0.015 < emb.std() < 0.025

    def test_biases_zero_gains_one(self):
        m = tiny_model(seed=2)
        assert np.all(m.params["enc0.attn.bq"].data == 0)
        assert np.all(m.params["enc0.ln1.g"].data == 1)
        assert np.all(m.params["dec0.ln1.b"].data == 0)

    def test_same_seed_identical_weights(self):
        a, b = tiny_model(seed=3), tiny_model(seed=3)
        for k in a.params:
            assert np.array_equal(a.params[k].data, b.params[k].data), k

    def test_head_divisibility_enforced(self):
        with pytest.raises(DataError):
            Seq2SeqConfig(vocab=tiny_vocab(), d_model=10, n_heads=4)


class TestForward:
    def test_logits_shape(self):
        m = tiny_model()
        logits, _ = forward_teacher_forced(m, [5, 6, 2], [1, 5, 6, 7])
        assert logits.shape == (4, len(m.config.vocab))

    def test_causality_exact(self):
        m = tiny_model(seed=4)
        src = [5, 6, 2]
        tgt = [1, 5, 6, 7, 8]
        base, _ = forward_teacher_forced(m, src, tgt)
        for j in range(1, len(tgt)):
            perturbed = list(tgt)
            perturbed[j] = 8 if perturbed[j] != 8 else 7
            out, _ = forward_teacher_forced(m, src, perturbed)
            assert np.array_equal(out.data[:j], base.data[:j]), f"pos {j}"

    def test_padding_invariance(self):
        m = tiny_model(seed=5)
        tgt = [1, 5, 6]
        a, _ = forward_teacher_forced(m, [5, 6, 2], tgt)
        b, _ = forward_teacher_forced(m, [5, 6, 2, PAD, PAD], tgt)
        assert np.abs(a.data - b.data).max() < 1e-5

    def test_too_long_rejected(self):
        m = tiny_model(max_len=4)
        with pytest.raises(DataError):
            forward_teacher_forced(m, [5] * 9, [1, 5])

    def test_cross_attention_rows_stochastic(self):
        m = tiny_model(seed=6, layers=2)
        _, cap = forward_teacher_forced(m, [5, 6, 7, 2], [1, 5, 6],
                                        capture_attn=True)
        assert len(cap.layers) == 2
        for layer in cap.layers:
            sums = layer.sum(axis=-1)
            assert np.abs(sums - 1.0).max() < 1e-5

    def test_dropout_only_in_train_mode(self):
        m = tiny_model(seed=7, dropout=0.5)
        src = np.array([[5, 6, 2]])
        dec = np.array([[1, 5]])
        a, _ = m.forward(src, dec)
        b, _ = m.forward(src, dec)
        assert np.array_equal(a.data, b.data)
        c, _ = m.forward(src, dec, train=True, rng=make_rng(0))
        assert not np.array_equal(a.data, c.data)


class TestLabelSmoothedCE:
    def test_epsilon_zero_is_plain_ce(self):
        rng = make_rng(8)
        logits = Tensor(rng.standard_normal((6, 9)))
        targets = rng.integers(5, 9, size=6)
        ls = label_smoothed_ce(logits, targets, 0.0, ignore_index=PAD).item()
        p = softmax(logits, axis=-1).data
        ce = -np.mean(np.log(p[np.arange(6), targets]))
        assert abs(ls - ce) < 1e-6

    def test_uniform_prediction_gives_log_vocab(self):
        for eps in (0.0, 0.1, 0.5):
            logits = Tensor(np.zeros((4, 11)))
            targets = np.array([5, 6, 7, 8])
            loss = label_smoothed_ce(logits, targets, eps).item()
            assert abs(loss - np.log(11)) < 1e-6

    def test_decomposition_identity(self):
        # LS-CE == (1-eps) * CE(one-hot) + eps * CE(uniform target)
        rng = make_rng(9)
        logits64 = Tensor(rng.standard_normal((5, 8)))
        targets = rng.integers(5, 8, size=5)
        eps = 0.1
        ls = label_smoothed_ce(logits64, targets, eps).item()
        ce = label_smoothed_ce(logits64, targets, 0.0).item()
        logp = np.log(softmax(logits64, axis=-1).data)
        uniform_ce = -np.mean(logp.mean(axis=-1))
        assert abs(ls - ((1 - eps) * ce + eps * uniform_ce)) < 1e-10

    def test_pad_positions_ignored(self):
        logits = Tensor(make_rng(10).standard_normal((4, 7)))
        with_pad = label_smoothed_ce(logits, np.array([5, 6, PAD, PAD]), 0.1)
        no_pad = label_smoothed_ce(Tensor(logits.data[:2]),
                                   np.array([5, 6]), 0.1)
        assert abs(with_pad.item() - no_pad.item()) < 1e-6

    def test_all_pad_rejected(self):
        logits = Tensor(np.zeros((2, 7)))
        with pytest.raises(DataError):
            label_smoothed_ce(logits, np.array([PAD, PAD]), 0.1)

    def test_invalid_epsilon_rejected(self):
        logits = Tensor(np.zeros((1, 7)))
        with pytest.raises(DataError):
            label_smoothed_ce(logits, np.array([5]), 1.0)

    def test_gradient_matches_finite_differences(self):
        m = tiny_model(seed=11, d=8).astype(np.float64)
        batch = make_batch(m.config.vocab, ["w0 w1", "w2"], ["w1 w0", "w3"],
                           m.config.max_len)

        def loss_fn(params):
            logits, _ = m.forward(batch["src"], batch["dec_in"])
            return label_smoothed_ce(logits, batch["labels"], 0.1)

        err = finite_diff_grad_check(loss_fn, m.params, epsilon=1e-5,
                                     max_coords_per_tensor=4)
        assert err < 1e-4


class TestGreedy:
    def test_stops_at_first_eos_and_never_emits_pad_bos(self):
        for seed in range(8):
            m = tiny_model(seed=seed)
            out = greedy_decode(m, [5, 6, 2], max_len=8)
            assert PAD not in out and BOS not in out and EOS not in out
            assert len(out) <= 8

    def test_deterministic(self):
        m = tiny_model(seed=12)
        a = greedy_decode(m, [5, 2], max_len=6)
        b = greedy_decode(m, [5, 2], max_len=6)
        assert a == b


class TestBeam:
    def test_beam_one_equals_greedy_on_random_models(self):
        rng = make_rng(13)
        for trial in range(50):
            m = tiny_model(seed=100 + trial, n_content=3, d=8, heads=2)
            src = list(rng.integers(5, 8, size=int(rng.integers(1, 4)))) + [EOS]
            g = greedy_decode(m, src, max_len=4)
            b = beam_search(m, src, beam=1, max_len=4)
            assert g == b.ids, f"trial {trial}"

    def test_beam_matches_exhaustive_enumeration(self):
        # beam >= |V|^max_len explores everything: result must equal the
        # brute-force argmax over all decodable sequences, exactly.
        for trial in range(6):
            m = tiny_model(seed=200 + trial, n_content=0, d=8, heads=2)
            vocab_size = len(m.config.vocab)  # 5: specials only
            max_len = 3
            src = [EOS]
            res = beam_search(m, src, beam=vocab_size ** max_len,
                              max_len=max_len)
            ids, score, finished = exhaustive_best_sequence(m, src, max_len)
            assert res.ids == ids
            assert res.finished == finished
            assert res.score == score  # identical floats, same order

    def test_greedy_trap(self):
        # constructed model whose step-1 argmax leads into a low-probability
        # continuation: beam=3 must find a strictly better-scoring sequence
        found = False
        for seed in range(60):
            m = tiny_model(seed=300 + seed, n_content=3, d=8)
            src = [5, 2]
            g = greedy_decode(m, src, max_len=3)
            b = beam_search(m, src, beam=3, max_len=3)
            if b.ids != g:
                enc_out, key_mask = m.encode(np.array([src]))
                g_score = sequence_log_prob(m, enc_out, key_mask, g + [EOS])
                assert b.score > g_score
                found = True
                break
        assert found, "no greedy trap found across seeds"

    def test_unfinished_flagged(self):
        # EOS banned by construction: a model whose EOS row is forced to
        # -inf cannot finish; emulate by max_len too small for EOS choice
        m = tiny_model(seed=14)
        res = beam_search(m, [5, 2], beam=2, max_len=1)
        if not res.finished:
            assert len(res.ids) == 1
        # (when the model happens to emit EOS at step 1, finished is fine)

    def test_invalid_beam_rejected(self):
        m = tiny_model()
        with pytest.raises(DataError):
            beam_search(m, [5, 2], beam=0)


class TestOverfitSanity:
    def test_loss_halves_in_50_steps(self):
        vocab = build_vocab(["w0 w1 w2 w3 w4 w5"], mode="word")
        cfg = Seq2SeqConfig(vocab=vocab, n_enc_layers=1, n_dec_layers=1,
                            d_model=32, n_heads=4, d_ff=64, max_len=12,
                            dropout_prob=0.0)
        m = init_model(cfg, make_rng(15))
        rng = make_rng(16)
        pairs = [(f"w{i} w{(i+1) % 6}", f"w{(i+2) % 6} w{i}")
                 for i in range(6)] * 17  # ~100 examples
        batch = make_batch(vocab, [p[0] for p in pairs],
                           [p[1] for p in pairs], cfg.max_len)
        opt = AdamWState(lr=1e-3)
        first = None
        for step in range(50):
            logits, _ = m.forward(batch["src"], batch["dec_in"])
            loss = label_smoothed_ce(logits, batch["labels"], 0.1)
            if first is None:
                first = loss.item()
            loss.backward()
            step_tensors(m.params, opt)
        logits, _ = m.forward(batch["src"], batch["dec_in"])
        final = label_smoothed_ce(logits, batch["labels"], 0.1).item()
        assert final < 0.5 * first
