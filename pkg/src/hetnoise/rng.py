"""Keyed, counter-based random streams.

Every stochastic quantity in the toolkit is drawn from a Philox
(counter-based) generator keyed by a tuple of integers such as
``(seed, purpose, sample_index)``.  Streams with distinct keys are
statistically independent, and the value at a given position within a
stream depends only on the key and the position, never on what other
streams were consumed before it.  This keeps results identical no
matter how work is chunked or scheduled.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

# Purpose tags keep streams for different roles disjoint even when the
# remaining key components collide.
TAG_HEAD = 1        # MC draws inside the probabilistic head
TAG_INIT = 2        # weight initialization
TAG_SHUFFLE = 3     # epoch shuffling
TAG_STEP = 4        # per-optimizer-step MC draws
TAG_PREDICT = 5     # per-sample MC draws during dataset prediction
TAG_TASK = 6        # clean-task synthesis
TAG_CORRUPT = 7     # label-corruption draws
TAG_SPLIT = 8       # dataset split shuffling

_U64 = np.uint64
_TINY = 2.0 ** -54  # floor for uniforms so ndtri never sees 0


def generator(*key: int) -> np.random.Generator:
    """A Philox generator keyed by the given integers."""
    ss = np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in key])
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, _U64)))


def normal_field(shape: tuple[int, ...], *key: int) -> np.ndarray:
    """Standard-normal draws addressed by (key, flat position).

    Uniform words are taken from the keyed Philox counter stream in
    order and mapped through the inverse normal CDF, so entry ``i`` of
    the flattened field is a pure function of ``(key, i)``.
    """
    n = int(np.prod(shape))
    u = generator(*key).random(n)
    return ndtri(np.maximum(u, _TINY)).reshape(shape)
