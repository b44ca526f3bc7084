"""Deterministic RNG stream derivation.

Every random draw in the project comes from one root seed. A consumer asks
for a stream by naming its purpose, e.g. derive_rng(seed, "scene", 7), and
the labels are hashed into SeedSequence entropy so streams are independent,
reproducible, and stable across runs and platforms.
"""

import hashlib

import numpy as np


def _label_entropy(label):
    digest = hashlib.sha256(repr(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(root_seed, *labels):
    """Generator for the stream identified by (root_seed, *labels)."""
    entropy = [int(root_seed)] + [_label_entropy(l) for l in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))
