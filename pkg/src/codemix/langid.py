"""Code-mix query detection: a linear-chain CRF token labeler with character
n-gram features, an averaged-embedding baseline classifier, and query-level
aggregation (any HI token makes the query HINGLISH).

The CRF is trained on the exact negative log-likelihood via the forward
algorithm in log space; gradients are expected minus gold feature counts
from forward-backward marginals, so a brute-force path enumeration can
verify both the partition function and Viterbi.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .numerics import (AdamWState, Tensor, adamw_step, gather_rows, linear,
                       log_softmax, make_rng, mul, step_tensors,
                       take_along_last, tsum)

LABELS = ("EN", "HI", "OT")
LABEL_INDEX = {lab: i for i, lab in enumerate(LABELS)}
N_LABELS = len(LABELS)
BOS_WORD = "<s>"
EOS_WORD = "</s>"


class QueryLanguage(enum.Enum):
    ENGLISH = "english"
    HINGLISH = "hinglish"
    OTHER = "other"


@dataclass
class LabeledToken:
    word: str
    label: str  # one of LABELS

    def __post_init__(self):
        if not self.word:
            raise DataError("LabeledToken.word must be non-empty")
        if self.label not in LABEL_INDEX:
            raise DataError(f"unknown label {self.label!r}")


LabeledQuery = list[LabeledToken]


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------

_LEN_BUCKETS = ("1", "2", "3", "4", "5", "6+")


def _word_features(word: str, offset: str) -> list[str]:
    """Lowercased char n-grams (1..4, padded with ^/$ for n >= 2), length
    bucket, digit flag, special-character flag."""
    if word in (BOS_WORD, EOS_WORD):
        return [f"{offset}:{word}"]
    w = word.lower()
    feats = [f"{offset}:1:{c}" for c in w]
    padded = "^" + w + "$"
    for n in (2, 3, 4):
        feats += [f"{offset}:{n}:{padded[i:i + n]}"
                  for i in range(len(padded) - n + 1)]
    bucket = _LEN_BUCKETS[min(len(w), 6) - 1]
    feats.append(f"{offset}:len:{bucket}")
    if any(c in "0123456789" for c in w):
        feats.append(f"{offset}:digit")
    if any(not c.isalnum() for c in w):
        feats.append(f"{offset}:special")
    # Binary features: duplicates collapse to a single firing.
    return sorted(set(feats))


def extract_features(words: list[str], position: int) -> tuple[str, ...]:
    """Features of the context window (previous, current, next word), with
    BOS/EOS dummies at the boundaries. Deterministic for a given input."""
    if not 0 <= position < len(words):
        raise DataError(f"position {position} out of range for {len(words)} words")
    prev_w = words[position - 1] if position > 0 else BOS_WORD
    next_w = words[position + 1] if position + 1 < len(words) else EOS_WORD
    feats = (_word_features(prev_w, "-1")
             + _word_features(words[position], "0")
             + _word_features(next_w, "+1"))
    return tuple(feats)


# ---------------------------------------------------------------------------
# CRF model
# ---------------------------------------------------------------------------

FEATURE_TEMPLATE_VERSION = "ngram134-window3-v1"


@dataclass
class CRFModel:
    feature_index: dict[str, int]
    weights: np.ndarray        # (n_features, 3) emission weights
    transitions: np.ndarray    # (3, 3) [from, to]
    template_version: str = FEATURE_TEMPLATE_VERSION

    def token_feature_ids(self, words: list[str], position: int) -> np.ndarray:
        ids = [self.feature_index[f]
               for f in extract_features(words, position)
               if f in self.feature_index]
        return np.asarray(ids, dtype=np.int64)

    def emissions(self, words: list[str]) -> np.ndarray:
        """(len(words), 3) emission scores."""
        out = np.zeros((len(words), N_LABELS))
        for t in range(len(words)):
            ids = self.token_feature_ids(words, t)
            if ids.size:
                out[t] = self.weights[ids].sum(axis=0)
        return out


def _logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def crf_log_partition(model: CRFModel, words: list[str]) -> float:
    """Forward algorithm in log space."""
    if not words:
        raise DataError("crf_log_partition needs at least one word")
    emis = model.emissions(words)
    alpha = emis[0].copy()
    for t in range(1, len(words)):
        alpha = _logsumexp(alpha[:, None] + model.transitions, axis=0) + emis[t]
    return float(_logsumexp(alpha, axis=0))


def crf_path_score(model: CRFModel, words: list[str],
                   labels: list[int]) -> float:
    emis = model.emissions(words)
    score = float(emis[0, labels[0]])
    for t in range(1, len(words)):
        score += float(model.transitions[labels[t - 1], labels[t]])
        score += float(emis[t, labels[t]])
    return score


def crf_nll_grad(model: CRFModel, query: LabeledQuery
                 ) -> tuple[float, dict[int, np.ndarray], np.ndarray]:
    """NLL = log Z - score(gold path) and its gradient.

    Returns (nll, emission gradient as {feature id: (3,) vector},
    transition gradient (3, 3)). The gradient is expected counts from
    forward-backward marginals minus gold counts.
    """
    words = [tok.word for tok in query]
    gold = [LABEL_INDEX[tok.label] for tok in query]
    L = len(words)
    emis = model.emissions(words)
    trans = model.transitions

    alpha = np.zeros((L, N_LABELS))
    alpha[0] = emis[0]
    for t in range(1, L):
        alpha[t] = _logsumexp(alpha[t - 1][:, None] + trans, axis=0) + emis[t]
    log_z = float(_logsumexp(alpha[-1], axis=0))

    beta = np.zeros((L, N_LABELS))
    for t in range(L - 2, -1, -1):
        beta[t] = _logsumexp(trans + (emis[t + 1] + beta[t + 1])[None, :], axis=1)

    # Token marginals gamma[t, y] and expected transition counts.
    gamma = np.exp(alpha + beta - log_z)
    grad_trans = np.zeros((N_LABELS, N_LABELS))
    for t in range(L - 1):
        pair = (alpha[t][:, None] + trans
                + (emis[t + 1] + beta[t + 1])[None, :] - log_z)
        grad_trans += np.exp(pair)
        grad_trans[gold[t], gold[t + 1]] -= 1.0

    grad_feats: dict[int, np.ndarray] = {}
    for t in range(L):
        diff = gamma[t].copy()
        diff[gold[t]] -= 1.0
        for fid in model.token_feature_ids(words, t):
            acc = grad_feats.get(int(fid))
            if acc is None:
                grad_feats[int(fid)] = diff.copy()
            else:
                acc += diff
    nll = log_z - crf_path_score(model, words, gold)
    return nll, grad_feats, grad_trans


def viterbi(model: CRFModel, words: list[str]) -> list[str]:
    """Argmax label path; ties break toward the lower label index
    (EN < HI < OT)."""
    if not words:
        raise DataError("viterbi needs at least one word")
    emis = model.emissions(words)
    L = len(words)
    delta = emis[0].copy()
    back = np.zeros((L, N_LABELS), dtype=np.int64)
    for t in range(1, L):
        cand = delta[:, None] + model.transitions  # [prev, cur]
        back[t] = cand.argmax(axis=0)              # lowest index wins ties
        delta = cand.max(axis=0) + emis[t]
    path = [int(np.argmax(delta))]
    for t in range(L - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return [LABELS[i] for i in path]


def train_crf(corpus: list[LabeledQuery], l2: float = 1e-4, epochs: int = 8,
              rng: np.random.Generator | None = None, lr: float = 0.05,
              batch_size: int = 8) -> CRFModel:
    """Minimize NLL + l2 * ||w||^2 with mini-batch AdamW on the exact
    gradient. The feature index is built from the training corpus."""
    if not corpus:
        raise DataError("train_crf needs a non-empty corpus")
    rng = rng or np.random.default_rng(0)
    feature_index: dict[str, int] = {}
    for query in corpus:
        words = [tok.word for tok in query]
        for t in range(len(words)):
            for f in extract_features(words, t):
                if f not in feature_index:
                    feature_index[f] = len(feature_index)
    model = CRFModel(feature_index,
                     np.zeros((len(feature_index), N_LABELS)),
                     np.zeros((N_LABELS, N_LABELS)))
    params = {"weights": model.weights, "transitions": model.transitions}
    opt = AdamWState(lr=lr, weight_decay=0.0)
    for _ in range(epochs):
        order = rng.permutation(len(corpus))
        for start in range(0, len(corpus), batch_size):
            idxs = order[start:start + batch_size]
            gw = np.zeros_like(model.weights)
            gt = np.zeros_like(model.transitions)
            for i in idxs:
                _, gf, gtr = crf_nll_grad(model, corpus[i])
                for fid, vec in gf.items():
                    gw[fid] += vec
                gt += gtr
            scale = 1.0 / len(idxs)
            gw *= scale
            gt *= scale
            # l2 penalty gradient (2*l2*w) lives in the objective, not in
            # AdamW's decoupled decay, per the stated objective.
            gw += 2.0 * l2 * model.weights
            gt += 2.0 * l2 * model.transitions
            adamw_step(params, {"weights": gw, "transitions": gt}, opt)
    return model


def detect_query_language(model: CRFModel, query: str) -> QueryLanguage:
    """HINGLISH if any token is HI; ENGLISH if all are EN; OTHER otherwise."""
    words = query.split()
    if not words:
        raise DataError("cannot detect the language of an empty query")
    labels = viterbi(model, words)
    return aggregate_labels(labels)


def aggregate_labels(labels: list[str]) -> QueryLanguage:
    if any(lab == "HI" for lab in labels):
        return QueryLanguage.HINGLISH
    if all(lab == "EN" for lab in labels):
        return QueryLanguage.ENGLISH
    return QueryLanguage.OTHER


def query_gold_language(query: LabeledQuery) -> QueryLanguage:
    return aggregate_labels([tok.label for tok in query])


# ---------------------------------------------------------------------------
# Averaged-embedding baseline
# ---------------------------------------------------------------------------

class AvgEmbeddingClassifier:
    """Word embeddings averaged over the query, then a linear softmax over
    the three query-level classes. Word order never affects the output:
    ids are sorted before averaging, making permutation invariance exact."""

    CLASSES = (QueryLanguage.ENGLISH, QueryLanguage.HINGLISH,
               QueryLanguage.OTHER)

    def __init__(self, word_index: dict[str, int], dim: int = 32):
        self.word_index = word_index
        self.dim = dim
        self.params: dict[str, Tensor] = {}

    def _ids(self, query: str) -> np.ndarray:
        words = query.split()
        if not words:
            raise DataError("cannot classify an empty query")
        unk = len(self.word_index)
        ids = [self.word_index.get(w, unk) for w in words]
        return np.asarray(sorted(ids), dtype=np.int64)

    def _logits(self, queries: list[str]) -> Tensor:
        embs = []
        for q in queries:
            ids = self._ids(q)
            vecs = gather_rows(self.params["emb"], ids)
            embs.append(mul(tsum(vecs, axis=0), 1.0 / len(ids)))
        return linear(_stack(embs), self.params["w"], self.params["b"])

    def classify(self, query: str) -> QueryLanguage:
        logits = self._logits([query])
        return self.CLASSES[int(np.argmax(logits.data[0]))]


def _stack(tensors: list[Tensor]) -> Tensor:
    """Stack 1-D tape tensors into a 2-D tensor (gradient flows to each)."""
    from .numerics.tensor import Tensor as T, _make
    data = np.stack([t.data for t in tensors])

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t.accumulate_grad(g[i])

    return _make(data, tuple(tensors), backward)


def baseline_avg_embedding_classifier(
        corpus: list[LabeledQuery], dim: int = 32, epochs: int = 12,
        lr: float = 0.05, batch_size: int = 32,
        rng: np.random.Generator | None = None) -> AvgEmbeddingClassifier:
    """Train the averaged-embedding baseline on query-level labels derived
    from the token labels by the aggregation rule."""
    if not corpus:
        raise DataError("baseline classifier needs a non-empty corpus")
    rng = rng or np.random.default_rng(0)
    word_index: dict[str, int] = {}
    for query in corpus:
        for tok in query:
            if tok.word not in word_index:
                word_index[tok.word] = len(word_index)
    clf = AvgEmbeddingClassifier(word_index, dim)
    n_words = len(word_index) + 1  # + UNK row
    clf.params = {
        "emb": Tensor(rng.normal(0.0, 0.1, size=(n_words, dim)),
                      requires_grad=True),
        "w": Tensor(rng.normal(0.0, 0.1, size=(dim, 3)), requires_grad=True),
        "b": Tensor(np.zeros(3), requires_grad=True),
    }
    texts = [" ".join(tok.word for tok in q) for q in corpus]
    labels = np.asarray([clf.CLASSES.index(query_gold_language(q))
                         for q in corpus], dtype=np.int64)
    opt = AdamWState(lr=lr, weight_decay=0.0)
    for _ in range(epochs):
        order = rng.permutation(len(texts))
        for start in range(0, len(texts), batch_size):
            idxs = order[start:start + batch_size]
            logits = clf._logits([texts[i] for i in idxs])
            logp = log_softmax(logits, axis=-1)
            gold = take_along_last(logp, labels[idxs])
            loss = mul(tsum(gold), -1.0 / len(idxs))
            loss.backward()
            step_tensors(clf.params, opt)
    return clf


# ---------------------------------------------------------------------------
# Evaluation and IO
# ---------------------------------------------------------------------------

def eval_prf(predictions: list[QueryLanguage], gold: list[QueryLanguage],
             positive: QueryLanguage = QueryLanguage.HINGLISH
             ) -> tuple[float, float, float]:
    """Precision/recall/F1 on the positive class. Zero predicted positives
    gives precision 0 (and F1 0)."""
    if len(predictions) != len(gold):
        raise DataError("predictions and gold differ in length")
    tp = sum(1 for p, g in zip(predictions, gold)
             if p is positive and g is positive)
    fp = sum(1 for p, g in zip(predictions, gold)
             if p is positive and g is not positive)
    fn = sum(1 for p, g in zip(predictions, gold)
             if p is not positive and g is positive)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return precision, recall, f1


def load_token_labels(path) -> list[LabeledQuery]:
    """CoNLL-style file: `token<TAB>label` lines, blank line between
    queries, labels in {EN, HI, OT}."""
    path = Path(path)
    try:
        raw = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        raise DataError(f"{path}: not valid UTF-8: {e}") from None
    queries: list[LabeledQuery] = []
    current: LabeledQuery = []
    for lineno, line in enumerate(raw.split("\n"), start=1):
        if not line.strip():
            if current:
                queries.append(current)
                current = []
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or parts[1] not in LABEL_INDEX:
            raise DataError(f"{path}: malformed line {lineno}: {line!r}")
        current.append(LabeledToken(parts[0], parts[1]))
    if current:
        queries.append(current)
    return queries


def save_token_labels(queries: list[LabeledQuery], path) -> None:
    lines = []
    for q in queries:
        for tok in q:
            lines.append(f"{tok.word}\t{tok.label}\n")
        lines.append("\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def save_crf(model: CRFModel, path) -> None:
    """JSON serialization of the sparse CRF."""
    payload = {
        "template_version": model.template_version,
        "features": list(model.feature_index.keys()),
        "weights": model.weights.tolist(),
        "transitions": model.transitions.tolist(),
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_crf(path) -> CRFModel:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        feats = payload["features"]
        model = CRFModel({f: i for i, f in enumerate(feats)},
                         np.asarray(payload["weights"], dtype=np.float64),
                         np.asarray(payload["transitions"], dtype=np.float64),
                         payload.get("template_version",
                                     FEATURE_TEMPLATE_VERSION))
    except (json.JSONDecodeError, KeyError, ValueError) as e:
        raise DataError(f"{path}: corrupt CRF model file: {e}") from None
    if model.weights.shape != (len(feats), N_LABELS):
        raise DataError(f"{path}: weight matrix shape mismatch")
    return model


# ---------------------------------------------------------------------------
# Synthetic token-labeled benchmark
# ---------------------------------------------------------------------------

_EN_CONSONANTS = "bcdfghlmnrst"
_EN_VOWELS = "eo"
_HI_CONSONANTS = "jkpqvxz"
_HI_VOWELS = "aiu"
_SHARED_CONSONANTS = "dkmrt"
_SHARED_VOWELS = "ai"

_START_P = (0.50, 0.38, 0.12)          # EN, HI, OT
_STICKY = np.array([
    [0.78, 0.16, 0.06],
    [0.18, 0.76, 0.06],
    [0.40, 0.40, 0.20],
])


def _lex_words(rng, n, consonants, vowels, taken, min_syll=2, max_syll=4):
    words = []
    while len(words) < n:
        k = int(rng.integers(min_syll, max_syll + 1))
        w = "".join(consonants[rng.integers(len(consonants))]
                    + vowels[rng.integers(len(vowels))] for _ in range(k))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def gen_langid_corpus(n_queries: int, seed: int = 0, ambiguous_rate: float = 0.25,
                      min_len: int = 2, max_len: int = 6
                      ) -> list[LabeledQuery]:
    """Two toy languages with disjoint alphabets plus a shared (ambiguous)
    word set that only context disambiguates; OT words carry digits. Label
    sequences follow a sticky Markov chain, so neighboring words are
    informative about ambiguous tokens."""
    rng = make_rng(seed ^ 0x1A6B1D)
    taken: set[str] = set()
    en = _lex_words(rng, 150, _EN_CONSONANTS, _EN_VOWELS, taken)
    hi = _lex_words(rng, 150, _HI_CONSONANTS, _HI_VOWELS, taken)
    shared = _lex_words(rng, 40, _SHARED_CONSONANTS, _SHARED_VOWELS, taken)
    ot = [f"{rng.integers(1, 512)}{rng.choice(list('gxk'))}" for _ in range(60)]

    queries: list[LabeledQuery] = []
    for _ in range(n_queries):
        length = int(rng.integers(min_len, max_len + 1))
        state = int(rng.choice(3, p=_START_P))
        toks: LabeledQuery = []
        for _ in range(length):
            if state == 2:
                word = ot[int(rng.integers(len(ot)))]
            elif rng.random() < ambiguous_rate:
                word = shared[int(rng.integers(len(shared)))]
            elif state == 0:
                word = en[int(rng.integers(len(en)))]
            else:
                word = hi[int(rng.integers(len(hi)))]
            toks.append(LabeledToken(word, LABELS[state]))
            state = int(rng.choice(3, p=_STICKY[state]))
        queries.append(toks)
    return queries
