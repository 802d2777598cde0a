"""Deterministic random-stream layout.

Every stochastic ingredient of a run (state sampling, observation noise,
core initialization, evaluation points, planted-law coefficients) draws
from its own counter-based substream derived from the single user-facing
seed.  Streams are independent by construction, so enlarging one draw
never perturbs another — e.g. the training set for ``M = 500`` is a
prefix of the one for ``M = 2000``.

Layout: ``SeedSequence(seed, spawn_key=(purpose, *indices))`` feeding a
Philox generator.  Purpose codes are fixed constants; ``indices`` carry
per-cell coordinates such as the restart number.
"""

import numpy as np

#: purpose codes (stable across versions; serialized runs depend on them)
SAMPLING = 0
NOISE = 1
INIT = 2
EVAL = 3
PLANT = 4

_PURPOSES = {SAMPLING, NOISE, INIT, EVAL, PLANT}


def substream(seed, purpose, *indices):
    """Return a ``numpy.random.Generator`` for one purpose-tagged substream.

    Parameters
    ----------
    seed : int
        The run-level seed.
    purpose : int
        One of ``SAMPLING``, ``NOISE``, ``INIT``, ``EVAL``, ``PLANT``.
    *indices : int
        Optional extra coordinates (e.g. restart index, sweep-cell index).
    """
    if purpose not in _PURPOSES:
        raise ValueError(f"unknown RNG purpose code {purpose!r}")
    ss = np.random.SeedSequence(seed, spawn_key=(purpose, *indices))
    return np.random.Generator(np.random.Philox(ss))
