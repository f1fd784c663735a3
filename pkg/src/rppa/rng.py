"""Seeded random streams.

Every stochastic routine in the package draws from ``numpy.random.Generator``
backed by the PCG64 bit generator (O'Neill's permuted congruential generator,
128-bit state, 64-bit output).  PCG64 and ``SeedSequence`` are frozen
algorithms in NumPy, so identical seeds produce identical streams on every
platform.

A run's master seed is expanded with ``SeedSequence.spawn`` into independent
substreams, one per purpose.  The order of :data:`STREAMS` is part of the
reproducibility contract and must not change.
"""

from __future__ import annotations

import numpy as np

#: Substream names, in spawn order.
STREAMS = ("types", "valuations", "policy")


def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator for an explicit integer seed."""
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.Generator(np.random.PCG64(int(seed)))


def substreams(seed: int) -> dict[str, np.random.Generator]:
    """Split a master seed into the named, independent substreams."""
    if seed is None:
        raise ValueError("an explicit seed is required")
    children = np.random.SeedSequence(int(seed)).spawn(len(STREAMS))
    return {
        name: np.random.Generator(np.random.PCG64(child))
        for name, child in zip(STREAMS, children)
    }


def derive_seed(base: int, index: int) -> int:
    """Deterministic 63-bit seed for replication ``index`` of a seed base."""
    state = np.random.SeedSequence([int(base), int(index)]).generate_state(2, np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])
