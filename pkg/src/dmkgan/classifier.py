"""LSTM popularity classifier with per-timestep predictions."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ._rng import stream
from .autodiff import Tensor, mean, stack
from .corpus import PopularityLabel, tokenize
from .nn import Adam, LstmWeights, Parameter, cross_entropy, linear, log_softmax, lstm_cell, relu

log = logging.getLogger(__name__)

# class index order used by the output layer
CLASSES = (PopularityLabel.HIGH, PopularityLabel.MEDIUM, PopularityLabel.LOW)
CLASS_INDEX = {lab: k for k, lab in enumerate(CLASSES)}


@dataclass
class ClassifierConfig:
    hidden: int = 16
    dim: int = 50
    max_len: int = 50
    classes: int = 3
    ensemble: bool = True
    epochs: int = 10
    lr: float = 5e-3
    seed: int = 0
    init_scale: float = 0.01
    relu_recurrent: bool = True  # False moves the ReLU onto the output projection
    vote: str = "mean"  # "mean" log-softmax or "majority"

    def __post_init__(self):
        if self.hidden < 1 or self.max_len < 1:
            raise ValueError("hidden and max_len must be at least 1")
        if self.classes != 3:
            raise ValueError("the popularity classifier has exactly three classes")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.vote not in ("mean", "majority"):
            raise ValueError(f"unknown vote {self.vote!r}")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float

    def csv_row(self):
        return f"{self.epoch},{self.train_loss!r},{self.train_acc!r},{self.test_acc!r}"


METRICS_HEADER = "epoch,train_loss,train_acc,test_acc"


@dataclass
class ClassifierModel:
    config: ClassifierConfig
    lstm: LstmWeights
    W_out: Parameter
    b_out: Parameter

    @classmethod
    def init(cls, config, rng=None):
        lstm = LstmWeights.init(config.dim, config.hidden, rng, config.init_scale, prefix="clf.lstm")
        if rng is None:
            W = np.zeros((config.classes, config.hidden))
        else:
            W = rng.uniform(-config.init_scale, config.init_scale, (config.classes, config.hidden))
        return cls(config, lstm, Parameter(W, "clf.out.W"), Parameter(np.zeros(config.classes), "clf.out.b"))

    def parameters(self):
        return self.lstm.parameters() + [self.W_out, self.b_out]


def encode_description(tokens, table, max_len):
    """Embed the first ``max_len`` tokens; pad with zero rows. Returns ``(seq, length)``."""
    toks = list(tokens)[:max_len]
    seq = np.zeros((max_len, table.dim))
    for t, tok in enumerate(toks):
        seq[t] = table.lookup(tok)
    return seq, len(toks)


def classifier_forward(seq, model, length=None):
    """Per-step logits over the true length of ``seq``."""
    length = len(seq) if length is None else length
    if length < 1:
        raise ValueError("cannot classify a zero-length sequence")
    H = model.config.hidden
    h = Tensor(np.zeros(H), _check=False)
    c = Tensor(np.zeros(H), _check=False)
    out = []
    for t in range(length):
        h_new, c = lstm_cell(seq[t], h, c, model.lstm)
        if model.config.relu_recurrent:
            out.append(linear(model.W_out, model.b_out, h_new))
            h = relu(h_new)
        else:
            out.append(linear(model.W_out, model.b_out, relu(h_new)))
            h = h_new
    return out


def _argmax(v):
    # np.argmax returns the first maximum, so ties go to the lowest index
    return int(np.argmax(v))


def ensemble_predict(per_step_logits, vote="mean"):
    if not per_step_logits:
        raise ValueError("no steps to ensemble")
    logp = np.stack([log_softmax(lg).data for lg in per_step_logits])
    if vote == "majority":
        votes = np.bincount([_argmax(r) for r in logp], minlength=logp.shape[1])
        return _argmax(votes)
    return _argmax(logp.mean(axis=0))


def final_state_predict(per_step_logits):
    if not per_step_logits:
        raise ValueError("no steps to predict from")
    last = per_step_logits[-1]
    return _argmax(last.data if isinstance(last, Tensor) else last)


def sequence_loss(per_step_logits, target, ensemble=True):
    if ensemble:
        return mean(stack([cross_entropy(lg, target) for lg in per_step_logits]))
    return cross_entropy(per_step_logits[-1], target)


def predict(model, seq, length):
    logits = classifier_forward(seq, model, length)
    if model.config.ensemble:
        return ensemble_predict(logits, model.config.vote)
    return final_state_predict(logits)


def _prepare(pairs, table, max_len):
    out = []
    for rec, lab in pairs:
        seq, n = encode_description(tokenize(rec.description), table, max_len)
        if n == 0:
            log.warning("skipping listing %s: empty description", rec.id)
            continue
        out.append((seq, n, CLASS_INDEX[lab]))
    return out


def evaluate(model, prepared):
    if not prepared:
        return math.nan
    hits = sum(predict(model, seq, n) == y for seq, n, y in prepared)
    return hits / len(prepared)


def train_classifier(split, table, config=None):
    """Train with Adam, one update per record. Returns ``(model, metrics)``."""
    config = config or ClassifierConfig(dim=table.dim)
    if config.dim != table.dim:
        raise ValueError(f"config dim {config.dim} != embedding dim {table.dim}")
    train = _prepare(split.train, table, config.max_len)
    if not train:
        raise ValueError("training set is empty")
    test = _prepare(split.test, table, config.max_len)
    model = ClassifierModel.init(config, stream(config.seed, "init"))
    opt = Adam(model.parameters(), lr=config.lr)
    order_rng = stream(config.seed, "shuffle")
    metrics = []
    for epoch in range(1, config.epochs + 1):
        losses, hits = [], 0
        for k in order_rng.permutation(len(train)):
            seq, n, y = train[k]
            logits = classifier_forward(seq, model, n)
            loss = sequence_loss(logits, y, config.ensemble)
            value = loss.item()
            if not math.isfinite(value):
                raise FloatingPointError(f"non-finite classifier loss in epoch {epoch}")
            losses.append(value)
            pred = ensemble_predict(logits, config.vote) if config.ensemble else final_state_predict(logits)
            hits += pred == y
            opt.zero_grad()
            loss.backward()
            opt.step()
        # fsum is exactly rounded, so the epoch loss does not depend on visit order
        row = EpochMetrics(epoch, math.fsum(losses) / len(train), hits / len(train), evaluate(model, test))
        log.info("epoch %d loss %.4f train_acc %.3f test_acc %.3f", *(row.epoch, row.train_loss,
                                                                          row.train_acc, row.test_acc))
        metrics.append(row)
    return model, metrics
