"""One root seed per run, fanned out into independent streams by purpose."""

import numpy as np

PURPOSES = {
    "init": 1,
    "shuffle": 2,
    "dropout": 3,
    "sampling": 4,
    "tiebreak": 5,
    "dev": 6,
}


def purpose_rng(seed: int, purpose: str, *extra: int) -> np.random.Generator:
    """Generator for ``purpose``; ``extra`` (e.g. an epoch number) derives sub-streams."""
    return np.random.default_rng([int(seed), PURPOSES[purpose], *map(int, extra)])
