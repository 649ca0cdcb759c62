"""Named, reproducible random streams derived from one integer seed."""

import random
import zlib

import numpy as np


def stream_seed(seed: int, *names) -> int:
    key = tuple(zlib.crc32(str(n).encode()) for n in names)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return int(ss.generate_state(2, dtype=np.uint64)[0])


def rng_for(seed: int, *names) -> random.Random:
    return random.Random(stream_seed(seed, *names))
