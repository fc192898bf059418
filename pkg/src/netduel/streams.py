"""Reproducible random-stream derivation.

One base seed fans out into independent streams addressed by
(replicate_index, node_index).  The derivation goes through numpy's
SeedSequence spawn keys, so distinct index tuples can never collide, and
the bit generator is the counter-based Philox, so a stream's draws are a
pure function of (base_seed, indices, draw position).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError

INDEX_LIMIT = 2**32


def derive_stream(
    base_seed: int, replicate_index: int, node_index: int | None = None
) -> np.random.Generator:
    """Stream for one replicate, or one node within a replicate.

    The same triple always yields the same stream; distinct triples yield
    independent streams (indices must stay below 2**32).  The plain
    replicate stream (no node index) is distinct from every per-node
    stream of that replicate.
    """
    if base_seed < 0:
        raise ConfigurationError("base_seed must be >= 0")
    for name, idx in (("replicate_index", replicate_index),
                      ("node_index", node_index)):
        if idx is not None and not 0 <= idx < INDEX_LIMIT:
            raise ConfigurationError(
                f"{name} must lie in [0, 2**32), got {idx}"
            )
    key = (replicate_index,) if node_index is None else (
        replicate_index, node_index
    )
    seq = np.random.SeedSequence(entropy=base_seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))
