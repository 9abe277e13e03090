"""Seeded, stream-addressable randomness.

Every random draw in the package comes from a Philox counter-based
generator keyed by (seed, stream path) through numpy's SeedSequence
spawn keys. A stream is identified by a domain tag plus optional
indices (e.g. the simulation step), and cells within a stream are
identified by their position in one vectorized draw, so results can
never depend on scheduling or worker count.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError

# Stream domain tags (first spawn-key element). Never renumber.
GRAPH = 0
SIMULATE = 1
PROBE_COVER = 2
PROBE_FLIP = 3
EXACT_SAMPLE = 4
BP_INIT = 5
PHASE_SCAN = 6


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the (seed, *path) stream, independent of all other streams."""
    if seed < 0:
        raise ParameterError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path: int) -> int:
    """Collapse a stream address into a plain non-negative integer seed."""
    if seed < 0:
        raise ParameterError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
