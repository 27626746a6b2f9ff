"""Seed splitting.

Every random stream is derived from one root seed plus a tuple of integer
keys via ``numpy.random.SeedSequence([root, *keys])``; the first 64-bit word
of its state becomes the child seed.  Keys used by the package:

    (1,)            shot-noise/phase stream of a simulated record
    (2, i)          i-th record of a dataset or simulate batch
    (3, i, j)       sweep cell (i, j)
    (4, i)          i-th histogram repetition
    (5,)            network initialisation
    (6,)            minibatch shuffling
"""

import numpy as np

SHOT_NOISE = 1
RECORD = 2
SWEEP_CELL = 3
HISTOGRAM = 4
INIT = 5
SHUFFLE = 6


def derive_seed(root, *keys):
    seq = np.random.SeedSequence([int(root) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
    return int(seq.generate_state(1, dtype=np.uint64)[0])
