"""
Predicting popularity from a description
========================================

An LSTM reads the description one word vector at a time and emits class
logits at every step.  With ensembling the prediction averages the per-step
log-probabilities; without it only the last step counts.
"""
import math

from dmkgan.classifier import ClassifierConfig, train_classifier
from dmkgan.corpus import build_vocabulary, generate_synthetic_corpus, stratify, tokenize, train_test_split
from dmkgan.glove import build_cooccurrence, train_glove

records = generate_synthetic_corpus(n=300, seed=0)
seqs = [tokenize(r.description) for r in records]
vocab = build_vocabulary(seqs, 2)
table = train_glove(build_cooccurrence(seqs, vocab, 5), vocab, d=50, epochs=200, seed=0)

split = train_test_split(stratify(records), ratio=0.7, seed=0)
print(f"{len(split.train)} train / {len(split.test)} test")

for ensemble in (True, False):
    _, metrics = train_classifier(split, table, ClassifierConfig(ensemble=ensemble, epochs=10))
    print("ensemble" if ensemble else "final step")
    for m in metrics:
        print(f"  epoch {m.epoch:2d}  loss {m.train_loss:.4f}  train {m.train_acc:.3f}  test {m.test_acc:.3f}")

# With near-zero weights every class is equally likely, so the first epoch
# starts close to ln 3.
print(f"ln 3 = {math.log(3):.4f}")
