"""Reproducible random streams.

Every stochastic routine takes a seed (or a ``SeedSequence``) and derives child
streams by spawning, so work split across replicates or paths draws the same
numbers regardless of how it is scheduled. Generators use the counter-based
Philox bit generator.
"""

import numpy as np


def as_seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        raise TypeError("pass an integer seed or SeedSequence, not a Generator")
    return np.random.SeedSequence(seed)


def make_generator(seed):
    return np.random.Generator(np.random.Philox(as_seed_sequence(seed)))


def spawn(seed, n, offset=0):
    """Return ``n`` independent child seed sequences of ``seed``.

    Unlike ``SeedSequence.spawn`` this does not advance any counter on the parent,
    so child ``i`` is always the same stream no matter how often it is requested.
    """
    ss = as_seed_sequence(seed)
    return [
        np.random.SeedSequence(
            entropy=ss.entropy,
            spawn_key=tuple(ss.spawn_key) + (offset + i,),
            pool_size=ss.pool_size,
        )
        for i in range(n)
    ]


def spawn_generators(seed, n):
    return [make_generator(s) for s in spawn(seed, n)]
