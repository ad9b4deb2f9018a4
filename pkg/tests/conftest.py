import io
import sys

import numpy as np
import pytest

from dmkgan.corpus import build_vocabulary, generate_synthetic_corpus, stratify, tokenize
from dmkgan.glove import EmbeddingTable, build_cooccurrence, fit_minmax, train_glove


@pytest.fixture(scope="session")
def synthetic_records():
    return generate_synthetic_corpus(n=300, seed=0)


@pytest.fixture(scope="session")
def synthetic_dataset(synthetic_records):
    return stratify(synthetic_records)


@pytest.fixture(scope="session")
def synthetic_table(synthetic_records):
    """GloVe table trained on the synthetic corpus, round-tripped through the text format."""
    seqs = [tokenize(r.description) for r in synthetic_records]
    vocab = build_vocabulary(seqs, 2)
    table = train_glove(build_cooccurrence(seqs, vocab, 5), vocab, d=50, epochs=200, seed=0)
    buf = io.StringIO()
    table.save(buf)
    return EmbeddingTable.load(io.StringIO(buf.getvalue()))


@pytest.fixture(scope="session")
def synthetic_scaling(synthetic_table):
    return fit_minmax(synthetic_table)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
