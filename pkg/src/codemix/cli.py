"""Command-line surface tying the pipeline together.

Exit codes: 0 success, 1 usage error, 2 data/model error.
Subcommands: gen-corpus, train, distill, translate, detect-lang, translit,
eval-bleu, bench-latency, analyze-xattn, train-langid.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import XAttnExperimentConfig, ae_xattn_experiment
from .bleu import bleu_corpus
from .checkpoint import load_checkpoint, read_kv, save_checkpoint
from .distill import (DistillConfig, KDKind, bench_latency, quantize_model,
                      train_student)
from .errors import CodemixError, UsageError
from .langid import (detect_query_language, eval_prf, gen_langid_corpus,
                     load_crf, load_token_labels, query_gold_language,
                     save_crf, save_token_labels, train_crf)
from .numerics import make_rng
from .seq2seq import Seq2SeqConfig, init_model, translate
from .text import (Provenance, SynthTaskSpec, build_vocab, gen_clean_corpus,
                   gen_synthetic_corpus, load_parallel_tsv,
                   save_parallel_tsv, synthetic_vocab)
from .train import (TrainingConfig, config_from_items, train_stage1,
                    train_stage2)
from .translit import (hybrid_transliterate, load_translit_dict,
                       train_translit)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage problems, never 2
        raise UsageError(message)


def _read_lines(spec: str) -> list[str]:
    if spec == "-":
        return [ln.rstrip("\n") for ln in sys.stdin if ln.strip()]
    path = Path(spec)
    if not path.exists():
        raise UsageError(f"input file not found: {spec}")
    return [ln for ln in path.read_text(encoding="utf-8").splitlines()
            if ln.strip()]


def _write_lines(spec: str, lines: list[str]) -> None:
    text = "".join(ln + "\n" for ln in lines)
    if spec == "-":
        sys.stdout.write(text)
    else:
        Path(spec).write_text(text, encoding="utf-8")


def _write_records(path: str | None, records: list[dict]) -> None:
    if not path:
        return
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def _model_config(args, vocab) -> Seq2SeqConfig:
    return Seq2SeqConfig(vocab=vocab, n_enc_layers=args.enc_layers,
                         n_dec_layers=args.dec_layers, d_model=args.d_model,
                         n_heads=args.heads, d_ff=args.d_ff,
                         max_len=args.max_len, dropout_prob=args.dropout)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--enc-layers", type=int, default=2)
    p.add_argument("--dec-layers", type=int, default=2)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--d-ff", type=int, default=256)
    p.add_argument("--max-len", type=int, default=32)
    p.add_argument("--dropout", type=float, default=0.1)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_gen_corpus(args) -> int:
    spec = SynthTaskSpec(lexicon_size=args.lexicon_size,
                         code_mix_ratio=args.code_mix_ratio,
                         noise_char_drop_prob=args.noise,
                         pseudo_label_error_rate=args.q,
                         min_len=args.min_len, max_len=args.max_words,
                         seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train, test = gen_synthetic_corpus(spec, args.n_train, args.n_test)
    save_parallel_tsv(train, out / "train.tsv")
    save_parallel_tsv(test, out / "test.tsv")
    print(f"wrote {len(train)} noisy pairs to {out / 'train.tsv'}")
    print(f"wrote {len(test)} clean test pairs to {out / 'test.tsv'}")
    if args.n_clean:
        clean = gen_clean_corpus(spec, args.n_clean)
        save_parallel_tsv(clean, out / "clean.tsv")
        print(f"wrote {len(clean)} clean pairs to {out / 'clean.tsv'}")
    if args.langid_n:
        queries = gen_langid_corpus(args.langid_n, seed=args.seed)
        save_token_labels(queries, out / "langid.conll")
        print(f"wrote {len(queries)} labeled queries to {out / 'langid.conll'}")
    return 0


def _cmd_train(args) -> int:
    tcfg = TrainingConfig()
    if args.config:
        tcfg = config_from_items(read_kv(Path(args.config)))
    if args.seed is not None:
        tcfg.seed = args.seed
    noisy = load_parallel_tsv(args.train_tsv, Provenance.NOISY_PSEUDO) \
        if args.train_tsv else []
    clean = load_parallel_tsv(args.clean_tsv, Provenance.CLEAN_MANUAL) \
        if args.clean_tsv else []
    if args.stage in ("stage1", "both") and not noisy:
        raise UsageError("--train-tsv is required for stage1 training")
    if args.stage in ("stage2", "both") and not clean:
        raise UsageError("--clean-tsv is required for stage2 training")
    rng = make_rng(tcfg.seed)
    init_rng, s1_rng, s2_rng = rng.spawn(3)
    if args.init_from:
        model = load_checkpoint(args.init_from)
    else:
        vocab = build_vocab(noisy + clean, mode="word", min_count=1)
        model = init_model(_model_config(args, vocab), init_rng)
    records = []
    if args.stage in ("stage1", "both"):
        rep = train_stage1(model, noisy, tcfg, s1_rng)
        records += rep.records()
    if args.stage in ("stage2", "both"):
        rep = train_stage2(model, clean, tcfg, s2_rng)
        records += rep.records()
    save_checkpoint(model, args.out)
    for rec in records:
        print(json.dumps(rec))
    _write_records(args.report, records)
    print(f"checkpoint written to {args.out}")
    return 0


def _cmd_distill(args) -> int:
    teacher = load_checkpoint(args.teacher)
    clean = load_parallel_tsv(args.clean_tsv, Provenance.CLEAN_MANUAL)
    pool = _read_lines(args.pool)
    student_cfg = Seq2SeqConfig(vocab=teacher.config.vocab,
                                n_enc_layers=args.enc_layers,
                                n_dec_layers=args.dec_layers,
                                d_model=args.d_model, n_heads=args.heads,
                                d_ff=args.d_ff,
                                max_len=teacher.config.max_len,
                                dropout_prob=args.dropout)
    dcfg = DistillConfig(epochs=args.epochs, lr=args.lr,
                         batch_size=args.batch_size, lam=args.lam)
    student, report = train_student(student_cfg, teacher, clean, pool,
                                    KDKind(args.kd), make_rng(args.seed),
                                    dcfg, beam=args.beam)
    if args.quantize:
        student = quantize_model(student)
    save_checkpoint(student, args.out)
    records = [{"epoch": i + 1, **{k: round(v, 6) for k, v in m.items()}}
               for i, m in enumerate(report.epoch_means)]
    for rec in records:
        print(json.dumps(rec))
    _write_records(args.report, records)
    print(f"student checkpoint written to {args.out}")
    return 0


def _cmd_translate(args) -> int:
    model = load_checkpoint(args.checkpoint)
    queries = _read_lines(args.input)
    outputs = [translate(model, q, beam=args.beam, max_len=args.max_len)
               for q in queries]
    _write_lines(args.output, outputs)
    return 0


def _cmd_detect_lang(args) -> int:
    crf = load_crf(args.model)
    queries = _read_lines(args.input)
    _write_lines(args.output,
                 [detect_query_language(crf, q).value for q in queries])
    return 0


def _cmd_translit(args) -> int:
    tdict = load_translit_dict(args.dict)
    model = load_checkpoint(args.model) if args.model else None
    texts = _read_lines(args.input)
    _write_lines(args.output,
                 [hybrid_transliterate(t, tdict, model) for t in texts])
    return 0


def _cmd_eval_bleu(args) -> int:
    cands = _read_lines(args.candidates)
    refs = _read_lines(args.references)
    report = bleu_corpus(cands, refs)
    print(f"BLEU = {report.bleu:.2f}")
    print(f"precisions = {['%.4f' % p for p in report.precisions]}")
    print(f"brevity_penalty = {report.brevity_penalty:.4f} "
          f"(candidate {report.candidate_len} / reference "
          f"{report.reference_len} tokens)")
    _write_records(args.report, report.records())
    return 0


def _cmd_bench_latency(args) -> int:
    model = load_checkpoint(args.checkpoint)
    queries = _read_lines(args.queries)
    rep = bench_latency(model, queries, warmup=args.warmup,
                        samples=args.samples, beam=args.beam,
                        max_len=args.max_len)
    print(f"model={rep.model_id} p50={rep.p50_ms:.2f}ms p95={rep.p95_ms:.2f}ms "
          f"({len(rep.samples_ms)} samples, hardware: {rep.hardware})")
    _write_records(args.report, rep.records())
    return 0


def _cmd_analyze_xattn(args) -> int:
    cfg = XAttnExperimentConfig()
    cfg.n_dec_layers = args.dec_layers
    cfg.epochs = args.epochs
    cfg.n_train = args.n_train
    seeds = [int(s) for s in args.seeds.split(",") if s]
    curve = ae_xattn_experiment(cfg, seeds)
    for rec in curve.records():
        print(json.dumps(rec))
    _write_records(args.report, curve.records())
    return 0


def _cmd_train_langid(args) -> int:
    queries = load_token_labels(args.conll)
    crf = train_crf(queries, l2=args.l2, epochs=args.epochs,
                    rng=make_rng(args.seed))
    save_crf(crf, args.out)
    print(f"CRF model written to {args.out} "
          f"({len(crf.feature_index)} features)")
    if args.eval_conll:
        test = load_token_labels(args.eval_conll)
        preds = [detect_query_language(crf, " ".join(t.word for t in q))
                 for q in test]
        gold = [query_gold_language(q) for q in test]
        p, r, f1 = eval_prf(preds, gold)
        print(f"hinglish detection: precision={p:.3f} recall={r:.3f} "
              f"f1={f1:.3f}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="codemix",
                     description="Code-mix query translation lab")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("gen-corpus", parents=[], help="generate the "
                       "synthetic benchmark corpora")
    p.add_argument("--out", required=True)
    p.add_argument("--lexicon-size", type=int, default=100)
    p.add_argument("--code-mix-ratio", type=float, default=0.3)
    p.add_argument("--noise", type=float, default=0.1,
                   help="interior character drop probability")
    p.add_argument("--q", type=float, default=0.05,
                   help="pseudo-label word error rate")
    p.add_argument("--min-len", type=int, default=2)
    p.add_argument("--max-words", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=20000)
    p.add_argument("--n-test", type=int, default=2000)
    p.add_argument("--n-clean", type=int, default=0)
    p.add_argument("--langid-n", type=int, default=0)
    p.set_defaults(func=_cmd_gen_corpus)

    p = sub.add_parser("train", help="train a translation model")
    p.add_argument("--train-tsv")
    p.add_argument("--clean-tsv")
    p.add_argument("--out", required=True)
    p.add_argument("--stage", choices=("stage1", "stage2", "both"),
                   default="both")
    p.add_argument("--config", help="flat key=value training config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--init-from", help="checkpoint to continue from")
    p.add_argument("--report", help="write JSONL epoch records here")
    _add_model_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("distill", help="distill a teacher into a student")
    p.add_argument("--teacher", required=True)
    p.add_argument("--clean-tsv", required=True)
    p.add_argument("--pool", required=True,
                   help="unlabeled sources, one per line ('-' for stdin)")
    p.add_argument("--kd", choices=("ce", "js"), default="js")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=4)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lam", type=float, default=0.5)
    p.add_argument("--beam", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quantize", action="store_true")
    p.add_argument("--report")
    p.add_argument("--enc-layers", type=int, default=1)
    p.add_argument("--dec-layers", type=int, default=1)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--d-ff", type=int, default=256)
    p.add_argument("--dropout", type=float, default=0.1)
    p.set_defaults(func=_cmd_distill)

    p = sub.add_parser("translate", help="translate queries")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", default="-")
    p.add_argument("--output", default="-")
    p.add_argument("--beam", type=int, default=3)
    p.add_argument("--max-len", type=int, default=32)
    p.set_defaults(func=_cmd_translate)

    p = sub.add_parser("detect-lang", help="label query language")
    p.add_argument("--model", required=True, help="CRF model JSON")
    p.add_argument("--input", default="-")
    p.add_argument("--output", default="-")
    p.set_defaults(func=_cmd_detect_lang)

    p = sub.add_parser("translit", help="hybrid transliteration")
    p.add_argument("--dict", required=True)
    p.add_argument("--model", help="char-level checkpoint for OOV words")
    p.add_argument("--input", default="-")
    p.add_argument("--output", default="-")
    p.set_defaults(func=_cmd_translit)

    p = sub.add_parser("eval-bleu", help="corpus BLEU of candidates vs "
                       "references")
    p.add_argument("--candidates", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--report")
    p.set_defaults(func=_cmd_eval_bleu)

    p = sub.add_parser("bench-latency", help="beam-decode latency "
                       "percentiles")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--beam", type=int, default=3)
    p.add_argument("--max-len", type=int, default=32)
    p.add_argument("--report")
    p.set_defaults(func=_cmd_bench_latency)

    p = sub.add_parser("analyze-xattn", help="autoencoder cross-attention "
                       "identity-error curves")
    p.add_argument("--seeds", default="0")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--dec-layers", type=int, default=4)
    p.add_argument("--n-train", type=int, default=3000)
    p.add_argument("--report")
    p.set_defaults(func=_cmd_analyze_xattn)

    p = sub.add_parser("train-langid", help="train the CRF language "
                       "detector")
    p.add_argument("--conll", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-conll")
    p.set_defaults(func=_cmd_train_langid)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    if getattr(args, "func", None) is None:
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except CodemixError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
