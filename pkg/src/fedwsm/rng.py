"""Seed-stream derivation.

All randomness flows from numpy SeedSequence with explicit integer key paths,
so the result never depends on call order or parallel scheduling:

  partition pools      (seed, DOMAIN_PARTITION, num_clients)
  partition client k   (seed, DOMAIN_PARTITION, num_clients, k)
  model init           (seed, DOMAIN_INIT)
  selection, round t   (seed, DOMAIN_SELECT, t)
  client k, round t    (seed, DOMAIN_TRAIN, t, k)
"""

import numpy as np

DOMAIN_PARTITION = 1
DOMAIN_INIT = 2
DOMAIN_SELECT = 3
DOMAIN_TRAIN = 4


def stream(seed, *path):
    """Independent Generator for an integer key path under `seed`."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))
