"""Sequence-level knowledge distillation with CE / Jensen-Shannon losses,
plus int8 weight quantization and single-threaded latency benchmarking.

The teacher is frozen: it pseudo-labels a pool of unlabeled sources once
(beam search), and per student step its teacher-forced output distribution
over a pseudo-labeled batch is matched by the student under the CE or JS
loss. The student objective is
    (1 - lambda) * (loss_s + loss_d) + lambda * loss_kd
with lambda = 0.5 by default.
"""

from __future__ import annotations

import enum
import math
import platform
import time
from dataclasses import dataclass, field

import numpy as np

from .augment import AugKind, sample_augmented_batch
from .errors import DataError, NonFiniteError, TrainingDivergedError
from .numerics import (AdamWState, Tensor, add, exp, log_softmax, mul,
                       no_grad, softmax, step_tensors, tsum, xlogy)
from .quant import QuantizedSeq2Seq, quantize_model  # noqa: F401 (re-export)
from .seq2seq import (Seq2SeqConfig, Seq2SeqModel, beam_search, init_model,
                      label_smoothed_ce, make_batch, pad_batch)
from .seq2seq.model import encode_source
from .text import Corpus, ParallelExample, Provenance, decode
from .train import DEFAULT_STAGE2_KINDS

LN2 = float(np.log(2.0))
JS_UPPER_BOUND = 2.0 * LN2


class KDKind(enum.Enum):
    CE = "ce"
    JS = "js"


def generate_pseudo_labels(teacher: Seq2SeqModel, sources: list[str],
                           beam: int = 3, max_len: int = 32
                           ) -> tuple[Corpus, list[int]]:
    """Beam-decode every source with the frozen teacher.

    Returns (pseudo-labeled examples with NOISY_PSEUDO provenance, indices
    of skipped sources). A source is skipped when decoding fails to finish
    or produces an empty target.
    """
    vocab = teacher.config.vocab
    out: Corpus = []
    skipped: list[int] = []
    for i, src in enumerate(sources):
        result = beam_search(teacher, encode_source(src, vocab), beam=beam,
                             max_len=max_len)
        if not result.finished or not result.ids:
            skipped.append(i)
            continue
        out.append(ParallelExample(src, decode(result.ids, vocab),
                                   Provenance.NOISY_PSEUDO))
    return out, skipped


def _as_prob_tensor(p) -> Tensor:
    t = p if isinstance(p, Tensor) else Tensor(np.asarray(p))
    if t.data.ndim < 1:
        raise DataError("probability input must have at least one axis")
    return t


def _check_shapes(t: Tensor, s: Tensor) -> None:
    if t.shape != s.shape:
        raise DataError(f"teacher/student distribution shapes differ: "
                        f"{t.shape} vs {s.shape}")


def kd_loss_ce(teacher_probs, student_probs) -> Tensor:
    """Mean over positions of -sum_k T[k] * log S[k].

    Rows index positions, the last axis the vocabulary. Entries with
    T[k] == 0 contribute exactly zero.
    """
    tp, sp = _as_prob_tensor(teacher_probs), _as_prob_tensor(student_probs)
    _check_shapes(tp, sp)
    n_rows = max(1, int(np.prod(tp.shape[:-1])))
    total = tsum(xlogy(tp.detach(), sp))
    return mul(total, -1.0 / n_rows)


def _xlogy_np(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    nz = x != 0
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(nz, x * np.log(np.where(nz, y, 1.0)), 0.0)


def _js_node(t_probs: np.ndarray, s_probs, scale: float) -> Tensor:
    """Fused JS tape node: D_KL(T||m) + D_KL(S||m) summed and scaled, with
    gradient d/dS = scale * log(S / m). The single-expression backward makes
    the gradient exactly zero wherever S equals T bitwise, so an
    already-converged student is a true fixed point under Adam."""
    from .numerics.tensor import _make
    sp = s_probs if isinstance(s_probs, Tensor) else Tensor(s_probs)
    s = sp.data
    m = 0.5 * (t_probs + s)
    # Summing each KL term separately keeps the value exactly symmetric
    # in (T, S): scalar addition commutes where element-wise mixing of the
    # four terms would round differently.
    kl_t = (_xlogy_np(t_probs, t_probs) - _xlogy_np(t_probs, m)).sum()
    kl_s = (_xlogy_np(s, s) - _xlogy_np(s, m)).sum()
    value = (kl_t + kl_s) * scale

    def backward(g):
        if sp.requires_grad:
            nz = (s > 0) & (m > 0)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(nz, np.log(np.where(nz, s / m, 1.0)), 0.0)
            sp.accumulate_grad(g * scale * ratio)

    return _make(np.asarray(value), (sp,), backward)


def kd_loss_js(teacher_probs, student_probs) -> Tensor:
    """Jensen-Shannon loss: D_KL(T || m) + D_KL(S || m), m = (T + S) / 2.

    Natural log, mean over positions. Symmetric, bounded by 2 ln 2, zero
    iff T == S. 0 * log(0 / x) is treated as 0; the gradient with respect
    to the student is log(S/m) (zero at exact zeros), and no gradient
    flows to the teacher.
    """
    tp, sp = _as_prob_tensor(teacher_probs), _as_prob_tensor(student_probs)
    _check_shapes(tp, sp)
    n_rows = max(1, int(np.prod(tp.shape[:-1])))
    return _js_node(tp.data, sp, 1.0 / n_rows)


def student_loss(loss_s, loss_d, loss_kd, lam: float = 0.5):
    """(1 - lambda) * (loss_s + loss_d) + lambda * loss_kd."""
    for name, v in (("loss_s", loss_s), ("loss_d", loss_d),
                    ("loss_kd", loss_kd)):
        val = v.item() if isinstance(v, Tensor) else float(v)
        if not math.isfinite(val):
            raise DataError(f"{name} is not finite: {val}")
    if any(isinstance(v, Tensor) for v in (loss_s, loss_d, loss_kd)):
        return add(mul(add(loss_s, loss_d), 1.0 - lam), mul(loss_kd, lam))
    return (1.0 - lam) * (loss_s + loss_d) + lam * loss_kd


@dataclass
class DistillConfig:
    epochs: int = 4
    lr: float = 1e-3
    batch_size: int = 64
    lam: float = 0.5
    label_smoothing: float = 0.1
    weight_decay: float = 0.01
    kinds: tuple[AugKind, ...] = DEFAULT_STAGE2_KINDS
    kd_max_len: int = 32


@dataclass
class StepTrace:
    loss_s: float
    loss_d: float
    loss_kd: float


@dataclass
class DistillReport:
    kd_kind: str
    steps: list[StepTrace] = field(default_factory=list)
    epoch_means: list[dict[str, float]] = field(default_factory=list)
    skipped_sources: int = 0


def _kd_batch_loss(student: Seq2SeqModel, teacher: Seq2SeqModel,
                   batch: dict[str, np.ndarray], kd_kind: KDKind,
                   train_rng) -> Tensor:
    """Teacher-forced distribution matching on a pseudo-labeled batch.

    Both models run on the same inputs; the teacher's distribution is a
    constant (no gradient flows into it). PAD positions are excluded by
    masking both distributions to zero rows, which contribute nothing
    under the 0*log0 convention; the mean divides by real positions only.
    """
    with no_grad():
        t_logits, _ = teacher.forward(batch["src"], batch["dec_in"])
        # exp(log_softmax) rather than softmax: bitwise-identical to the
        # student's probability path, so a student that equals the teacher
        # sees an exactly-zero KD loss and gradient.
        t_probs = np.exp(log_softmax(t_logits, axis=-1).data)
    s_logits, _ = student.forward(batch["src"], batch["dec_in"], train=True,
                                  rng=train_rng)
    mask = batch["label_mask"]           # (B, T), 1.0 on real positions
    n_pos = max(1, int(mask.sum()))
    t_masked = t_probs * mask[..., None]
    s_logp = log_softmax(s_logits, axis=-1)
    if kd_kind is KDKind.CE:
        # -sum T * logS with the teacher constant; logS stays finite, so
        # underflowed student probabilities cannot poison the loss.
        total = tsum(mul(Tensor(t_masked), s_logp))
        return mul(total, -1.0 / n_pos)
    # JS: work with S = exp(logS) (stable); mask rows symmetrically.
    s_probs = mul(exp(s_logp), Tensor(mask[..., None].astype(np.float32)))
    return _js_node(t_masked, s_probs, 1.0 / n_pos)


def train_student(student_config: Seq2SeqConfig, teacher: Seq2SeqModel,
                  clean_corpus: Corpus, unlabeled_pool: list[str],
                  kd_kind: KDKind, rng: np.random.Generator,
                  config: DistillConfig | None = None, beam: int = 3,
                  initial_student: Seq2SeqModel | None = None
                  ) -> tuple[Seq2SeqModel, DistillReport]:
    """Distill the frozen teacher into a student (freshly initialized, or
    `initial_student` trained in place when given).

    Per step: supervised + augmentation losses on a clean batch, KD loss on
    a pseudo-labeled batch sampled from the teacher-labeled pool, combined
    as (1-lambda)(loss_s + loss_d) + lambda * loss_kd.
    """
    if not clean_corpus or not unlabeled_pool:
        raise DataError("train_student needs non-empty clean corpus and pool")
    cfg = config or DistillConfig()
    init_rng, data_rng, aug_rng, kd_rng, drop_rng = rng.spawn(5)
    student = initial_student or init_model(student_config, init_rng)
    vocab = student_config.vocab

    pseudo, skipped = generate_pseudo_labels(teacher, unlabeled_pool,
                                             beam=beam,
                                             max_len=cfg.kd_max_len)
    if not pseudo:
        raise DataError("teacher produced no usable pseudo-labels")
    report = DistillReport(kd_kind=kd_kind.value, skipped_sources=len(skipped))

    opt = AdamWState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    snapshot = student.snapshot()
    for epoch in range(cfg.epochs):
        order = data_rng.permutation(len(clean_corpus))
        epoch_steps: list[StepTrace] = []
        try:
            for start in range(0, len(clean_corpus), cfg.batch_size):
                rows = [clean_corpus[i]
                        for i in order[start:start + cfg.batch_size]]
                batch = make_batch(vocab, [ex.source for ex in rows],
                                   [ex.target for ex in rows],
                                   student_config.max_len)
                logits, _ = student.forward(batch["src"], batch["dec_in"],
                                            train=True, rng=drop_rng)
                loss_s = label_smoothed_ce(logits, batch["labels"],
                                           cfg.label_smoothing)
                if cfg.kinds:
                    aug = sample_augmented_batch(clean_corpus, cfg.kinds,
                                                 len(rows), aug_rng, vocab)
                    abatch = pad_batch(aug.inputs, aug.outputs,
                                       student_config.max_len)
                    alogits, _ = student.forward(abatch["src"],
                                                 abatch["dec_in"],
                                                 train=True, rng=drop_rng)
                    loss_d = label_smoothed_ce(alogits, abatch["labels"],
                                               cfg.label_smoothing)
                else:
                    loss_d = Tensor(0.0)
                kd_idx = kd_rng.integers(0, len(pseudo), size=len(rows))
                kd_rows = [pseudo[int(i)] for i in kd_idx]
                kd_batch = make_batch(vocab, [ex.source for ex in kd_rows],
                                      [ex.target for ex in kd_rows],
                                      student_config.max_len)
                loss_kd = _kd_batch_loss(student, teacher, kd_batch, kd_kind,
                                         drop_rng)
                loss = student_loss(loss_s, loss_d, loss_kd, cfg.lam)
                loss.backward()
                step_tensors(student.trainable(), opt)
                epoch_steps.append(StepTrace(loss_s.item(), loss_d.item(),
                                             loss_kd.item()))
        except NonFiniteError as e:
            student.restore(snapshot)
            raise TrainingDivergedError(
                f"distillation epoch {epoch + 1}: {e}; student rolled back "
                f"to the last epoch-end snapshot") from e
        snapshot = student.snapshot()
        report.steps.extend(epoch_steps)
        report.epoch_means.append({
            "loss_s": float(np.mean([s.loss_s for s in epoch_steps])),
            "loss_d": float(np.mean([s.loss_d for s in epoch_steps])),
            "loss_kd": float(np.mean([s.loss_kd for s in epoch_steps])),
        })
    return student, report


# ---------------------------------------------------------------------------
# Latency benchmarking
# ---------------------------------------------------------------------------

@dataclass
class LatencyReport:
    model_id: str
    hardware: str
    samples_ms: list[float]
    p50_ms: float
    p95_ms: float

    def records(self) -> list[dict[str, object]]:
        return [{"model": self.model_id, "hardware": self.hardware,
                 "p50_ms": round(self.p50_ms, 3),
                 "p95_ms": round(self.p95_ms, 3),
                 "n_samples": len(self.samples_ms)}]


def bench_latency(model: Seq2SeqModel, queries: list[str], warmup: int = 10,
                  samples: int = 200, beam: int = 3,
                  max_len: int = 32) -> LatencyReport:
    """Single-threaded per-query beam-search decode timing; p50/p95 from
    the empirical distribution. Queries are cycled when samples exceeds
    the query count."""
    if samples < 200:
        raise DataError("bench_latency needs at least 200 samples")
    if warmup < 10:
        raise DataError("bench_latency needs at least 10 warmup decodes")
    if not queries:
        raise DataError("bench_latency needs at least one query")
    vocab = model.config.vocab
    encoded = [encode_source(q, vocab) for q in queries]
    for i in range(warmup):
        beam_search(model, encoded[i % len(encoded)], beam=beam,
                    max_len=max_len)
    times: list[float] = []
    for i in range(samples):
        src = encoded[i % len(encoded)]
        t0 = time.perf_counter()
        beam_search(model, src, beam=beam, max_len=max_len)
        times.append((time.perf_counter() - t0) * 1000.0)
    arr = np.asarray(times)
    return LatencyReport(
        model_id=model.model_id,
        hardware=platform.processor() or platform.machine(),
        samples_ms=times,
        p50_ms=float(np.percentile(arr, 50)),
        p95_ms=float(np.percentile(arr, 95)),
    )
