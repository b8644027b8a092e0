"""Seed-stream derivation.

Every source of randomness in a run is a PCG64 generator derived from the
master seed plus a structural path (stream id, then node/round indices as
needed). Streams are independent, so adding a consumer never perturbs the
draws of another, and results do not depend on scheduling order.
"""

import numpy as np

# Stream ids. Keep values stable: changing them changes every seeded result.
GRAPH = 0
DATASET = 1
PARTITION = 2
FOCUS_TIES = 3
INIT = 4
TRAIN = 5


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return an independent generator for (seed, path).

    Identical arguments always yield an identical draw sequence; PCG64 output
    is platform-stable.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(path)))
