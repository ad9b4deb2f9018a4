"""Feed-forward GAN over embedded listing text, trained with the DMK loss.

The generator emits ``T`` word slots of dimension ``d`` in min-max scaled
embedding space.  Its loss is binary cross-entropy against the discriminator
minus ``gamma`` times the summed dot product of every slot with every
keyword embedding (min-max scaled by default, raw GloVe vectors on request).
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import stream
from .autodiff import Tensor, clip, dot, mul, reshape, sub, tensor_sum
from .corpus import PopularityLabel, tokenize
from .glove import nearest_indices
from .nn import Adam, Parameter, bce_loss, elu, linear, sigmoid

log = logging.getLogger(__name__)


@dataclass
class GanConfig:
    gamma: float = 0.00045
    seq_len: int = 12
    dim: int = 50
    noise_dim: int = 64
    gen_hidden: int = 128
    disc_hidden: int = 128
    disc_steps: int = 2000
    gen_steps: int = 50
    cycles: int = 1
    lr: float = 1e-3
    seed: int = 0
    paper_literal_generator: bool = False
    delta_space: str = "scaled"  # or "raw"
    high_only: bool = True

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        for name in ("seq_len", "dim", "noise_dim", "gen_hidden", "disc_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.delta_space not in ("raw", "scaled"):
            raise ValueError(f"delta_space must be 'raw' or 'scaled', got {self.delta_space!r}")
        for name in ("disc_steps", "gen_steps", "cycles"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def out_dim(self):
        return self.seq_len * self.dim


class Mlp:
    """Three linear layers named ``<prefix>.l{1,2,3}.{W,b}``."""

    def __init__(self, sizes, prefix, rng=None):
        self.prefix = prefix
        self.layers = []
        for k, (n_in, n_out) in enumerate(zip(sizes, sizes[1:]), start=1):
            if rng is None:
                W = np.zeros((n_out, n_in))
                b = np.zeros(n_out)
            else:
                lim = 1.0 / math.sqrt(n_in)
                W = rng.uniform(-lim, lim, (n_out, n_in))
                b = rng.uniform(-lim, lim, n_out)
            self.layers.append((Parameter(W, f"{prefix}.l{k}.W"), Parameter(b, f"{prefix}.l{k}.b")))

    def parameters(self):
        return [p for layer in self.layers for p in layer]

    def checksum(self):
        return tuple(p.data.tobytes() for p in self.parameters())


class Generator(Mlp):
    def __init__(self, config, rng=None):
        super().__init__([config.noise_dim, config.gen_hidden, config.gen_hidden, config.out_dim], "gen", rng)
        self.paper_literal = config.paper_literal_generator


class Discriminator(Mlp):
    def __init__(self, config, rng=None):
        super().__init__([config.out_dim, config.disc_hidden, config.disc_hidden, 1], "disc", rng)


def generator_forward(z, gen):
    """noise -> linear -> ELU -> linear -> sigmoid -> linear -> sigmoid.

    With ``paper_literal`` the last sigmoid is replaced by a clamp to [0, 1].
    """
    (W1, b1), (W2, b2), (W3, b3) = gen.layers
    if np.shape(z) != (W1.shape[1],):
        raise ValueError(f"noise shape {np.shape(z)} != ({W1.shape[1]},)")
    h = elu(linear(W1, b1, z))
    h = sigmoid(linear(W2, b2, h))
    out = linear(W3, b3, h)
    if gen.paper_literal:
        return clip(out, 0.0, 1.0)
    return sigmoid(out)


def discriminator_forward(x, disc):
    """linear -> ELU -> linear -> ELU -> linear -> sigmoid; returns shape (1,)."""
    (W1, b1), (W2, b2), (W3, b3) = disc.layers
    if np.shape(x.data if isinstance(x, Tensor) else x) != (W1.shape[1],):
        raise ValueError(f"discriminator input shape {np.shape(x)} != ({W1.shape[1]},)")
    h = elu(linear(W1, b1, x))
    h = elu(linear(W2, b2, h))
    return sigmoid(linear(W3, b3, h))


# -- DMK loss --------------------------------------------------------------

def keyword_vectors(keywords, table, scaling=None):
    """Embeddings of ``keywords`` (scaled if ``scaling`` is given), shape (m, d)."""
    rows = []
    for kw in keywords:
        if kw not in table:
            raise KeyError(f"keyword {kw!r} is not in the embedding vocabulary")
        v = table.lookup(kw)
        rows.append(scaling.scale(v) if scaling is not None else v)
    return np.array(rows, dtype=np.float64).reshape(len(rows), table.dim)


def delta_attention(g, kvecs):
    """Sum over keywords and slots of ``g_j . e(k_i)``.

    ``g`` is the flat (T*d,) generator output, ``kvecs`` is (m, d).
    """
    kvecs = np.asarray(kvecs, dtype=np.float64)
    d = kvecs.shape[1]
    slots = reshape(g, (-1, d))
    return dot(tensor_sum(slots, axis=0), Tensor(kvecs.sum(axis=0), _check=False))


def dmk_loss(pred, label, g, kvecs, gamma):
    bce = bce_loss(pred, label)
    if gamma == 0:
        return bce
    return sub(bce, mul(delta_attention(g, kvecs), gamma))


# -- data ------------------------------------------------------------------

def embed_slots(tokens, table, scaling, seq_len):
    """Scaled embeddings of the first ``seq_len`` tokens, padded with scaled OOV, flattened."""
    pad = scaling.scale(table.vectors[table.oov_index])
    slots = [scaling.scale(table.lookup(t)) for t in list(tokens)[:seq_len]]
    slots += [pad] * (seq_len - len(slots))
    return np.concatenate(slots)


def _pick_records(dataset, high_only=True):
    pairs = list(dataset)
    if high_only:
        recs = [r for r, lab in pairs if lab == PopularityLabel.HIGH]
        if not recs:
            raise ValueError("no High-popularity records to learn from")
    else:
        recs = [r for r, _ in pairs]
        if not recs:
            raise ValueError("no records to learn from")
    return recs


def real_batch(records, table, scaling, seq_len, rng):
    """One real sample: a random record's first ``seq_len`` scaled embeddings."""
    if not records:
        raise ValueError("no High-popularity records to sample from")
    rec = records[int(rng.integers(0, len(records)))]
    return embed_slots(tokenize(rec.description), table, scaling, seq_len)


class RealSampler:
    """``real_batch`` with every record's slots precomputed."""

    def __init__(self, records, table, scaling, seq_len):
        if not records:
            raise ValueError("no High-popularity records to sample from")
        self.rows = np.stack([embed_slots(tokenize(r.description), table, scaling, seq_len) for r in records])

    def __call__(self, rng):
        return self.rows[int(rng.integers(0, len(self.rows)))]


# -- training --------------------------------------------------------------

STEP_LOG_HEADER = ("cycle", "phase", "step", "loss_d", "loss_g", "delta", "gamma")


@dataclass
class StepRecord:
    cycle: int
    phase: str  # "D" or "G"
    step: int
    loss_d: float | None = None
    loss_g: float | None = None
    delta: float | None = None
    gamma: float = 0.0

    def row(self):
        def f(v):
            return "" if v is None else repr(float(v))
        return [self.cycle, self.phase, self.step, f(self.loss_d), f(self.loss_g), f(self.delta), repr(self.gamma)]


@dataclass
class GanResult:
    config: GanConfig
    generator: Generator
    discriminator: Discriminator
    steps: list = field(default_factory=list)

    def parameters(self):
        return self.generator.parameters() + self.discriminator.parameters()


def write_step_log(steps, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(STEP_LOG_HEADER)
    for s in steps:
        w.writerow(s.row())


def _noise(rng, config):
    return rng.uniform(0.0, 1.0, config.noise_dim)


def discriminator_step(gen, disc, d_opt, real, z):
    fake = generator_forward(z, gen).detach()
    loss = bce_loss(discriminator_forward(real, disc), 1) + bce_loss(discriminator_forward(fake, disc), 0)
    d_opt.zero_grad()
    loss.backward()
    d_opt.step()
    return loss.item()


def generator_step(gen, disc, g_opt, kvecs, gamma, z):
    g = generator_forward(z, gen)
    loss = dmk_loss(discriminator_forward(g, disc), 1, g, kvecs, gamma)
    delta = delta_attention(g, kvecs).item() if len(kvecs) else 0.0
    g_opt.zero_grad()
    loss.backward()
    g_opt.step()
    for p in disc.parameters():
        p.grad = None
    return loss.item(), delta


def train_gan(config, dataset, table, scaling, keywords=()):
    """Alternate ``disc_steps`` discriminator and ``gen_steps`` generator updates per cycle."""
    if config.dim != table.dim:
        raise ValueError(f"config dim {config.dim} != embedding dim {table.dim}")
    keywords = list(keywords)
    if config.gamma > 0 and not keywords:
        raise ValueError("DMK training (gamma > 0) needs at least one keyword")
    kvecs = keyword_vectors(keywords, table, scaling if config.delta_space == "scaled" else None)
    sampler = RealSampler(_pick_records(dataset, config.high_only), table, scaling, config.seq_len)

    init = stream(config.seed, "init")
    gen, disc = Generator(config, init), Discriminator(config, init)
    g_opt = Adam(gen.parameters(), lr=config.lr)
    d_opt = Adam(disc.parameters(), lr=config.lr)
    noise_rng = stream(config.seed, "noise")
    real_rng = stream(config.seed, "real")
    steps = []
    for cycle in range(config.cycles):
        for s in range(config.disc_steps):
            loss = discriminator_step(gen, disc, d_opt, sampler(real_rng), _noise(noise_rng, config))
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite discriminator loss at cycle {cycle} step {s}")
            steps.append(StepRecord(cycle, "D", s, loss_d=loss, gamma=config.gamma))
        for s in range(config.gen_steps):
            loss, delta = generator_step(gen, disc, g_opt, kvecs, config.gamma, _noise(noise_rng, config))
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite generator loss at cycle {cycle} step {s}")
            steps.append(StepRecord(cycle, "G", s, loss_g=loss, delta=delta, gamma=config.gamma))
        log.info("cycle %d: loss_d %.4f loss_g %.4f", cycle,
                 steps[-config.gen_steps - 1].loss_d if config.disc_steps and config.gen_steps else math.nan,
                 steps[-1].loss_g if config.gen_steps else math.nan)
    return GanResult(config, gen, disc, steps)


def discriminator_accuracy(result, records, table, scaling, n=200, seed=0):
    """Held-out real-vs-fake accuracy at threshold 0.5 on ``n`` of each."""
    cfg = result.config
    sampler = RealSampler(records, table, scaling, cfg.seq_len)
    rng = stream(seed, "eval")
    hits = 0
    for _ in range(n):
        hits += discriminator_forward(sampler(rng), result.discriminator).item() > 0.5
        fake = generator_forward(_noise(rng, cfg), result.generator).data
        hits += discriminator_forward(fake, result.discriminator).item() < 0.5
    return hits / (2 * n)


# -- decoding --------------------------------------------------------------

def decode_sequence(g, table, scaling):
    g = np.asarray(g.data if isinstance(g, Tensor) else g)
    idx = nearest_indices(g.reshape(-1, table.dim), table, scaling)
    return [table.words[i] for i in idx]


def generate(generator, config, n, seed=0):
    """``n`` generator outputs from the seeded "sample" noise stream."""
    rng = stream(seed, "sample")
    return [generator_forward(_noise(rng, config), generator).data for _ in range(n)]


# -- gamma sweep -----------------------------------------------------------

def keyword_counts(samples, keywords):
    return {kw: float(np.mean([s.count(kw) for s in samples])) if samples else 0.0 for kw in keywords}


def _sweep_one(args):
    config, dataset, table, scaling, keywords, n_samples = args
    result = train_gan(config, dataset, table, scaling, keywords)
    decoded = [decode_sequence(g, table, scaling) for g in generate(result.generator, config, n_samples, config.seed)]
    return {
        "gamma": config.gamma,
        "seed": config.seed,
        "mean_keyword_count": keyword_counts(decoded, keywords),
        "samples": [" ".join(words) for words in decoded],
    }


def gamma_sweep(gammas, seeds, config, dataset, table, scaling, keywords, n_samples=20, workers=1):
    """Train one GAN per (gamma, seed); report decoded samples and keyword counts."""
    gammas = list(gammas)
    if not gammas:
        raise ValueError("no gamma values given")
    if gammas != sorted(gammas):
        raise ValueError("gamma values must be sorted ascending")
    jobs = [(replace(config, gamma=g, seed=s), dataset, table, scaling, list(keywords), n_samples)
            for g in gammas for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_one, jobs))
    return [_sweep_one(job) for job in jobs]


def median_counts(report, keyword):
    """gamma -> median over seeds of the mean per-sample count of ``keyword``."""
    by_gamma = {}
    for entry in report:
        by_gamma.setdefault(entry["gamma"], []).append(entry["mean_keyword_count"][keyword])
    return {g: float(np.median(v)) for g, v in by_gamma.items()}


def format_sweep_table(report, keywords):
    """Plain-text table: one block per gamma with its first sample and counts."""
    lines = [f"{'gamma':<10} {'seed':<6} {'mean count':<12} sample", "-" * 72]
    for e in report:
        counts = ", ".join(f"{k}={e['mean_keyword_count'][k]:.3f}" for k in keywords)
        first = e["samples"][0] if e["samples"] else ""
        lines.append(f"{e['gamma']:<10g} {e['seed']:<6d} {counts:<12} {first}")
    for kw in keywords:
        med = median_counts(report, kw)
        lines.append("")
        lines.append(f"median mean count of {kw!r} over seeds: "
                     + ", ".join(f"gamma={g:g}: {v:.3f}" for g, v in med.items()))
    return "\n".join(lines) + "\n"
