"""Deterministic seed derivation.

All randomness flows from a single root seed. Child seeds are derived by
hashing the root together with a path of integer or string keys, e.g.
``derive_seed(root, "evaluate", rep, record)`` (command -> repetition ->
record). Derivation goes through :class:`numpy.random.SeedSequence`, so
children of distinct paths are statistically independent.
"""
import zlib

import numpy as np


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def derive_seed(root, *path):
    ss = np.random.SeedSequence(entropy=int(root), spawn_key=tuple(_key(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng(root, *path):
    return np.random.default_rng(derive_seed(root, *path))
