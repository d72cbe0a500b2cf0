"""Deterministic random-stream derivation.

Every stochastic piece of the package (codebooks, geometry, datasets,
network initialization, dropout, Monte Carlo trials) draws from a
`numpy.random.Generator` derived from ``(master_seed, *stream_ids)``.
Distinct id tuples give statistically independent streams, and the same
tuple always reproduces the same stream, so results are a pure function
of the master seed regardless of evaluation order or worker count.
"""

from __future__ import annotations

import numpy as np

# Fixed purpose tags so training, validation, and test data can never
# share a stream.
CODEBOOK_STREAM = 11
GEOMETRY_STREAM = 12
TRAIN_STREAM = 21
VALIDATION_STREAM = 22
TEST_STREAM = 23
INIT_STREAM = 31
BANK_STREAM = 41


def stream_rng(master_seed: int, *stream_ids: int) -> np.random.Generator:
    """Return the generator for one named substream of ``master_seed``."""
    if master_seed < 0:
        raise ValueError(f"master seed must be non-negative, got {master_seed}")
    seq = np.random.SeedSequence((int(master_seed),) + tuple(int(s) for s in stream_ids))
    return np.random.default_rng(seq)
