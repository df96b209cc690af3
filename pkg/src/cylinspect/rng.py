"""Deterministic random-number streams.

Every stochastic component (splitting, weight init, dropout, augmentation,
LIME sampling, synthesis) draws from its own named substream derived from a
single root seed, so runs are reproducible and components stay independent:
reordering draws in one stream never perturbs another.
"""

from __future__ import annotations

import numpy as np

# Canonical stream names used across the toolkit.
STREAM_SPLIT = "split"
STREAM_INIT = "init"
STREAM_DROPOUT = "dropout"
STREAM_AUGMENT = "augment"
STREAM_LIME = "lime"


def _name_entropy(name: str) -> list[int]:
    # Stable across processes and platforms (unlike hash()).
    raw = name.encode("utf-8")
    return [int.from_bytes(raw[i : i + 8], "little") for i in range(0, len(raw), 8)]


def substream(root_seed: int, name: str) -> np.random.Generator:
    """Return a generator for the named substream of ``root_seed``."""
    if root_seed < 0:
        raise ValueError("root seed must be non-negative")
    seq = np.random.SeedSequence([root_seed, *_name_entropy(name)])
    return np.random.default_rng(seq)
