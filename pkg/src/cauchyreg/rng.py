"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, *keys)``, so a study
cell draws the same numbers no matter which worker runs it or in what order.
"""
import numpy as np


def stream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
