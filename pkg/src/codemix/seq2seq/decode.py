"""Greedy and beam-search decoding.

Scores are unnormalized sums of token log-probabilities (no length
penalty). PAD and BOS are never emitted; EOS is allowed from the first
step. Ties break toward the earlier-generated candidate, which makes
beam size 1 reproduce greedy decoding exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from ..numerics import no_grad
from ..text import BOS, EOS, PAD, Vocab, decode as decode_ids
from .model import Seq2SeqModel, encode_source


@dataclass
class BeamResult:
    ids: list[int]          # generated tokens, EOS excluded
    score: float            # sum of token log-probabilities
    finished: bool          # False when no hypothesis emitted EOS in time


def _log_probs(model: Seq2SeqModel, enc_out, key_mask,
               dec_prefix: list[int]) -> np.ndarray:
    """Next-token log-probabilities after the given decoder prefix."""
    dec_in = np.asarray([dec_prefix], dtype=np.int64)
    logits = model.decode(enc_out, key_mask, dec_in).data[0, -1]
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def _banned_mask(vocab_size: int) -> np.ndarray:
    mask = np.zeros(vocab_size)
    mask[PAD] = -np.inf
    mask[BOS] = -np.inf
    return mask


def _max_steps(model: Seq2SeqModel, max_len: int) -> int:
    # The BOS-prefixed decoder input must stay within the model's max_len.
    return min(max_len, model.config.max_len - 1)


def greedy_decode(model: Seq2SeqModel, src_ids, max_len: int = 32) -> list[int]:
    """Argmax token at each step until EOS or max_len tokens."""
    with no_grad():
        src = np.asarray([src_ids], dtype=np.int64)
        enc_out, key_mask = model.encode(src)
        ban = _banned_mask(len(model.config.vocab))
        prefix = [BOS]
        out: list[int] = []
        for _ in range(_max_steps(model, max_len)):
            lp = _log_probs(model, enc_out, key_mask, prefix) + ban
            tok = int(np.argmax(lp))
            if tok == EOS:
                break
            out.append(tok)
            prefix.append(tok)
        return out


def beam_search(model: Seq2SeqModel, src_ids, beam: int = 3,
                max_len: int = 32) -> BeamResult:
    """Best EOS-terminated hypothesis by summed log-probability.

    Finished hypotheses leave the active beam. If nothing finishes within
    max_len steps the best unfinished hypothesis is returned with
    finished=False.
    """
    if beam < 1:
        raise DataError(f"beam must be >= 1, got {beam}")
    with no_grad():
        src = np.asarray([src_ids], dtype=np.int64)
        enc_out, key_mask = model.encode(src)
        ban = _banned_mask(len(model.config.vocab))
        active: list[tuple[float, list[int]]] = [(0.0, [])]
        finished: list[tuple[float, list[int]]] = []
        for _ in range(_max_steps(model, max_len)):
            scores: list[float] = []
            cands: list[tuple[int, int]] = []  # (active index, token)
            for hi, (score, ids) in enumerate(active):
                lp = _log_probs(model, enc_out, key_mask, [BOS] + ids) + ban
                # Per-hypothesis top-beam by token log-probability; only a
                # global top-beam among these can survive, so nothing viable
                # is lost and beam=1 selects exactly greedy's argmax.
                for tok in np.argsort(-lp, kind="stable")[:beam]:
                    if np.isfinite(lp[tok]):
                        scores.append(score + float(lp[tok]))
                        cands.append((hi, int(tok)))
            order = np.argsort(-np.asarray(scores), kind="stable")[:beam]
            next_active: list[tuple[float, list[int]]] = []
            for oi in order:
                hi, tok = cands[oi]
                score = scores[oi]
                ids = active[hi][1]
                if tok == EOS:
                    finished.append((score, ids))
                else:
                    next_active.append((score, ids + [tok]))
            active = next_active
            if not active:
                break
        if finished:
            best = max(range(len(finished)), key=lambda i: finished[i][0])
            score, ids = finished[best]
            return BeamResult(ids, score, True)
        best = max(range(len(active)), key=lambda i: active[i][0])
        score, ids = active[best]
        return BeamResult(ids, score, False)


def translate(model: Seq2SeqModel, text: str, beam: int = 3,
              max_len: int = 32) -> str:
    """Encode, decode with beam search, and detokenize."""
    vocab = model.config.vocab
    src = encode_source(text, vocab)
    result = beam_search(model, src, beam=beam, max_len=max_len)
    return decode_ids(result.ids, vocab)


def translate_corpus(model: Seq2SeqModel, texts: list[str], beam: int = 3,
                     max_len: int = 32) -> list[str]:
    return [translate(model, t, beam=beam, max_len=max_len) for t in texts]
