"""Calibration: augmentation-direction experiment (criterion 7 shape)."""
import sys
import time

import numpy as np

sys.path.insert(0, "src")
from codemix.augment import AugKind
from codemix.bleu import bleu_corpus
from codemix.numerics import make_rng
from codemix.seq2seq import Seq2SeqConfig, init_model, translate_corpus
from codemix.text import SynthTaskSpec, gen_synthetic_corpus, synthetic_vocab
from codemix.train import StageConfig, TrainingConfig, train_stage1

K = 60
N_TRAIN = 6000
N_TEST = 800
EPOCHS = 5
LR = 1e-3

CONFIGS = {
    "none": (),
    "dropchar": (AugKind.DROPCHAR,),
    "autoencoder": (AugKind.AUTOENCODER,),
    "mask": (AugKind.MASK,),
}

results = {name: [] for name in CONFIGS}
for seed in (0, 1, 2):
    train_spec = SynthTaskSpec(lexicon_size=K, code_mix_ratio=0.3,
                               noise_char_drop_prob=0.05,
                               pseudo_label_error_rate=0.05, seed=100 + seed)
    test_spec = SynthTaskSpec(lexicon_size=K, code_mix_ratio=0.3,
                              noise_char_drop_prob=0.3,
                              pseudo_label_error_rate=0.0, seed=100 + seed)
    train, _ = gen_synthetic_corpus(train_spec, N_TRAIN)
    _, test = gen_synthetic_corpus(test_spec, 1, N_TEST)
    vocab = synthetic_vocab(train_spec)
    refs = [ex.target for ex in test]
    srcs = [ex.source for ex in test]
    for name, kinds in CONFIGS.items():
        t0 = time.time()
        cfg = Seq2SeqConfig(vocab=vocab, n_enc_layers=2, n_dec_layers=2,
                            d_model=48, n_heads=4, d_ff=192, max_len=16,
                            dropout_prob=0.0)
        model = init_model(cfg, make_rng(1000 + seed))
        tc = TrainingConfig(weight_decay=0.01)
        tc.stage1 = StageConfig(epochs=EPOCHS, lr=LR, batch_size=64,
                                kinds=kinds)
        if not kinds:
            tc.lam = 0.0
        train_stage1(model, train, tc, make_rng(2000 + seed))
        bleu = bleu_corpus(translate_corpus(model, srcs), refs).bleu
        results[name].append(bleu)
        print(f"seed={seed} {name:12s} BLEU={bleu:6.2f}  "
              f"({time.time()-t0:.0f}s)", flush=True)

print("\nmeans over seeds:")
for name, vals in results.items():
    print(f"  {name:12s} {np.mean(vals):6.2f}  {[round(v,2) for v in vals]}")
base = np.mean(results["none"])
print(f"\ndropchar - none: {np.mean(results['dropchar']) - base:+.2f}")
print(f"autoencoder - none: {np.mean(results['autoencoder']) - base:+.2f}")
print(f"mask - none: {np.mean(results['mask']) - base:+.2f}")
