"""
Listings, popularity labels and word vectors
============================================

Build a small synthetic listing corpus, label it by occupancy terciles inside
price-per-bedroom bins, then fit GloVe vectors to the descriptions and decode
a few vectors back to words.
"""
import numpy as np

from dmkgan.corpus import (
    PopularityLabel,
    build_vocabulary,
    generate_synthetic_corpus,
    stratify,
    tokenize,
)
from dmkgan.glove import build_cooccurrence, fit_minmax, nearest_word, train_glove

records = generate_synthetic_corpus(n=300, seed=0)
print(records[0].description)

# Terciles are taken within each $30 price-per-bedroom bin, so a cheap listing
# competes only with other cheap listings.
dataset = stratify(records, bin_width=30.0)
for label in PopularityLabel:
    print(f"{label}: {len(dataset.with_label(label))} listings")
print("bins:", dataset.boundaries)

seqs = [tokenize(r.description) for r in records]
vocab = build_vocabulary(seqs, min_count=2)
cooc = build_cooccurrence(seqs, vocab, window=5)
print(f"{len(vocab)} words, {len(cooc)} co-occurring pairs")

table = train_glove(cooc, vocab, d=50, epochs=200, seed=0)
print(f"objective {table.history[0]:.1f} -> {table.history[-1]:.1f}")

# The generator works in [0, 1]; min-max scaling maps embeddings there and back.
scaling = fit_minmax(table)
v = scaling.scale(table.lookup("parking"))
print("scaled 'parking' decodes to", nearest_word(v, table, scaling))

# A point halfway between two words lands on one of them (or a neighbour).
mid = 0.5 * (table.lookup("parking") + table.lookup("garage"))
print("midpoint of parking/garage ->", nearest_word(mid, table))
print("all-ones corner decodes to", nearest_word(np.ones(table.dim), table, scaling))
