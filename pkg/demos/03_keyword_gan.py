"""
Steering generated text toward a keyword
========================================

The generator emits 12 word slots in scaled embedding space.  Its loss is the
usual cross-entropy against the discriminator minus gamma times the dot
product between the slots and the keyword vector, so larger gamma pulls the
slots toward the keyword.  Decoding snaps each slot to its nearest word.
"""
import numpy as np

from dmkgan.autodiff import Tensor
from dmkgan.corpus import build_vocabulary, generate_synthetic_corpus, stratify, tokenize
from dmkgan.gan import GanConfig, decode_sequence, delta_attention, dmk_loss, generate, keyword_counts, train_gan
from dmkgan.glove import build_cooccurrence, fit_minmax, train_glove

records = generate_synthetic_corpus(n=300, seed=0)
seqs = [tokenize(r.description) for r in records]
vocab = build_vocabulary(seqs, 2)
table = train_glove(build_cooccurrence(seqs, vocab, 5), vocab, d=50, epochs=200, seed=0)
scaling = fit_minmax(table)
dataset = stratify(records)

# the loss on one hand-made input: pred 0.5, label 1, delta 100
g = Tensor(np.array([100.0]))
print("delta", delta_attention(g, [[1.0]]).item(), "loss", dmk_loss(Tensor(0.5), 1, g, [[1.0]], 0.00045).item())

# a short schedule keeps this demo quick; the CLI defaults run 2000 + 50 steps
for gamma in (0.0, 0.00045):
    cfg = GanConfig(gamma=gamma, disc_steps=300, gen_steps=50, cycles=2, seed=0)
    result = train_gan(cfg, dataset, table, scaling, keywords=["parking"])
    samples = [" ".join(decode_sequence(s, table, scaling)) for s in generate(result.generator, cfg, 5)]
    print(f"gamma={gamma}: mean 'parking' per sample {keyword_counts([s.split() for s in samples], ['parking'])}")
    for s in samples:
        print("  ", s)
