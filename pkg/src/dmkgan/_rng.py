"""Named random sub-streams derived from one integer seed."""
import zlib

import numpy as np


def stream(seed, name):
    """Independent generator for component ``name`` under ``seed``.

    The same (seed, name) always yields the same stream, so one component can
    be replayed without running the others.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(key,)))
