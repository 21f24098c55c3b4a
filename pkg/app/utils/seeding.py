"""Deterministic seed derivation."""

import numpy as np


def derive_seed(seed: int, *keys: int) -> int:
    """Mix ``seed`` with integer ``keys`` into an independent 63-bit seed."""
    sequence = np.random.SeedSequence([int(seed), *(int(k) for k in keys)])
    return int(sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
