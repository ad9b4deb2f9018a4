"""GloVe embeddings trained on the listing corpus, plus lookup and decoding."""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._rng import stream
from .corpus import OOV

log = logging.getLogger(__name__)


@dataclass
class CooccurrenceMatrix:
    counts: dict  # (i, j) -> distance-weighted count
    window: int
    vocab_size: int

    def __len__(self):
        return len(self.counts)

    def arrays(self):
        """Entries as sorted ``(rows, cols, values)`` arrays."""
        keys = sorted(self.counts)
        if not keys:
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
        rows = np.array([k[0] for k in keys])
        cols = np.array([k[1] for k in keys])
        vals = np.array([self.counts[k] for k in keys], dtype=np.float64)
        return rows, cols, vals


def build_cooccurrence(token_sequences, vocab, window=5):
    if window < 1:
        raise ValueError("window must be at least 1")
    counts = {}
    for seq in token_sequences:
        ids = [vocab.lookup(t) for t in seq]
        for p, a in enumerate(ids):
            for q in range(p + 1, min(p + window, len(ids) - 1) + 1):
                inc = 1.0 / (q - p)
                b = ids[q]
                counts[(a, b)] = counts.get((a, b), 0.0) + inc
                counts[(b, a)] = counts.get((b, a), 0.0) + inc
    return CooccurrenceMatrix(counts, window, len(vocab))


def glove_weight(x, x_max=100.0, alpha=0.75):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x < x_max, (x / x_max) ** alpha, 1.0)


@dataclass
class GloveParams:
    W: np.ndarray
    C: np.ndarray
    b: np.ndarray
    bc: np.ndarray

    def arrays(self):
        return [self.W, self.C, self.b, self.bc]


def glove_objective(params, rows, cols, x, x_max=100.0, alpha=0.75):
    """Weighted least-squares objective and its gradients.

    Returns ``(J, [dW, dC, db, dbc])`` for
    ``J = sum f(x) (w_i . c_j + b_i + bc_j - log x)^2``.
    """
    W, C, b, bc = params.arrays()
    f = glove_weight(x, x_max, alpha)
    diff = np.einsum("kd,kd->k", W[rows], C[cols]) + b[rows] + bc[cols] - np.log(x)
    J = float(np.sum(f * diff * diff))
    fd = 2.0 * f * diff
    V = W.shape[0]
    # stored (i, j) pairs are unique, so a dense scatter is exact
    F = np.zeros((V, V))
    F[rows, cols] = fd
    dW = F @ C
    dC = F.T @ W
    db = F.sum(axis=1)
    dbc = F.sum(axis=0)
    return J, [dW, dC, db, dbc]


@dataclass
class EmbeddingTable:
    words: list  # last entry is the OOV token
    vectors: np.ndarray
    history: list = field(default_factory=list)
    params: GloveParams | None = None

    def __post_init__(self):
        self.index = {w: i for i, w in enumerate(self.words)}
        if self.vectors.shape[0] != len(self.words):
            raise ValueError("one vector per word required")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding table holds non-finite values")

    @property
    def dim(self):
        return self.vectors.shape[1]

    @property
    def oov_index(self):
        return self.index[OOV]

    def __contains__(self, word):
        return word in self.index and word != OOV

    def __len__(self):
        return len(self.words)

    def lookup(self, word):
        return self.vectors[self.index.get(word, self.oov_index)]

    def decodable(self):
        """Indices of every word except OOV."""
        return np.array([i for i, w in enumerate(self.words) if w != OOV], dtype=int)

    def save(self, fh):
        for w, v in zip(self.words, self.vectors):
            fh.write(w + " " + " ".join(format(x, ".9g") for x in v) + "\n")

    @classmethod
    def load(cls, fh):
        words, rows = [], []
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if not parts or parts == [""]:
                continue
            words.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
        if not rows:
            raise ValueError("embedding file is empty")
        if len({len(r) for r in rows}) != 1:
            raise ValueError("embedding rows have inconsistent dimensions")
        vectors = np.array(rows, dtype=np.float64)
        if OOV not in words:
            # externally supplied tables get the mean vector as OOV
            words.append(OOV)
            vectors = np.vstack([vectors, vectors.mean(axis=0)])
        return cls(words, vectors)


def train_glove(matrix, vocab, d=50, epochs=200, lr=0.05, seed=0, x_max=100.0, alpha=0.75):
    """Fit GloVe vectors by full-batch AdaGrad on every stored co-occurrence."""
    if len(matrix) == 0:
        raise ValueError("co-occurrence matrix is empty")
    if d < 1:
        raise ValueError("embedding dimension must be at least 1")
    V = matrix.vocab_size
    rng = stream(seed, "glove")
    lim = 0.5 / d
    params = GloveParams(rng.uniform(-lim, lim, (V, d)), rng.uniform(-lim, lim, (V, d)),
                         rng.uniform(-lim, lim, V), rng.uniform(-lim, lim, V))
    rows, cols, x = matrix.arrays()
    accum = [np.ones_like(a) for a in params.arrays()]
    history = []
    for epoch in range(epochs):
        J, grads = glove_objective(params, rows, cols, x, x_max, alpha)
        history.append(J)
        log.info("glove epoch %d objective %.6f", epoch, J)
        for a, g, acc in zip(params.arrays(), grads, accum):
            acc += g * g
            a -= lr * g / np.sqrt(acc)
    history.append(glove_objective(params, rows, cols, x, x_max, alpha)[0])
    if any(b > a for a, b in zip(history, history[1:])):
        warnings.warn("GloVe objective increased during training", RuntimeWarning, stacklevel=2)
    vectors = params.W + params.C
    words = vocab.words()
    oov = vocab.oov_index
    keep = np.arange(V) != oov
    vectors[oov] = vectors[keep].mean(axis=0) if keep.any() else 0.0
    return EmbeddingTable(words, vectors, history, params)


@dataclass
class ScalingParams:
    min: np.ndarray
    max: np.ndarray

    def scale(self, v):
        return (np.asarray(v) - self.min) / (self.max - self.min)

    def unscale(self, u):
        return np.asarray(u) * (self.max - self.min) + self.min

    def to_json(self):
        return json.dumps({"min": [float(v) for v in self.min], "max": [float(v) for v in self.max]}) + "\n"

    @classmethod
    def from_json(cls, text):
        blob = json.loads(text)
        return cls(np.array(blob["min"], dtype=np.float64), np.array(blob["max"], dtype=np.float64))


def fit_minmax(table):
    if len(table) < 2:
        raise ValueError("need at least two words to fit scaling")
    lo = table.vectors.min(axis=0)
    hi = table.vectors.max(axis=0)
    flat = np.flatnonzero(hi <= lo)
    if flat.size:
        raise ValueError(f"embedding dimension {int(flat[0])} is constant; cannot scale")
    return ScalingParams(lo, hi)


def nearest_indices(vs, table, scaling=None, metric="euclidean"):
    """Row index of the closest decodable word for each row of ``vs``."""
    vs = np.atleast_2d(np.asarray(vs, dtype=np.float64))
    cand = table.decodable()
    if cand.size == 0:
        raise ValueError("embedding table has no decodable words")
    if vs.shape[1] != table.dim:
        raise ValueError(f"vector dimension {vs.shape[1]} != table dimension {table.dim}")
    ref = table.vectors[cand]
    if scaling is not None:
        ref = scaling.scale(ref)
    if metric == "euclidean":
        score = np.concatenate([((blk[:, None, :] - ref[None, :, :]) ** 2).sum(axis=2)
                                for blk in np.array_split(vs, max(1, len(vs) // 64))])
    elif metric == "cosine":
        num = vs @ ref.T
        den = np.linalg.norm(vs, axis=1)[:, None] * np.linalg.norm(ref, axis=1)[None, :]
        score = -num / np.maximum(den, 1e-300)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    # argmin returns the first minimum, i.e. the lowest vocabulary index
    return cand[np.argmin(score, axis=1)]


def nearest_word(v, table, scaling=None, metric="euclidean"):
    return table.words[int(nearest_indices(v, table, scaling, metric)[0])]
