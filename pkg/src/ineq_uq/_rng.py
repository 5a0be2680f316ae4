"""Seeded random streams.

Every stochastic routine takes an integer seed and builds its generator here.
PCG64 seeded through ``SeedSequence`` is platform independent, and keyed
sub-streams (``stream(seed, l)``) let replicate ``l`` be generated without
touching replicates ``0..l-1``, so serial and parallel runs agree.
"""
import numpy as np


def stream(seed, *keys):
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    entropy = [int(seed)] + [int(k) for k in keys]
    if any(e < 0 for e in entropy):
        raise ValueError("seed and stream keys must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
