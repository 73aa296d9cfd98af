"""Reproducible random streams.

Every instance draws from its own Philox4x64 (counter-based, 64-bit words)
stream.  A stream is identified by an integer seed; bench campaigns derive
per-trial seeds from a master seed plus a key tuple, so trials are
independent of the order in which they are produced.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def derive_seed(master: int, *key: int) -> int:
    """Child seed for ``key`` under ``master``; the same inputs always give the same seed."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(v) for v in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def child_rng(master: int, index: int) -> np.random.Generator:
    return make_rng(derive_seed(master, index))
