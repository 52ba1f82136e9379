"""Deterministic random streams derived from a single root seed.

Each consumer asks for a stream by label; the (seed, label) pair maps to the
same generator on every platform and run, so concurrent use cannot perturb
reproducibility.
"""

import hashlib

import numpy as np


def derive_rng(seed, label):
    """Return an independent ``np.random.Generator`` for (seed, label)."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([int(seed), *words]))


def as_rng(seed_or_rng):
    """Coerce an int seed or an existing generator into a generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)
