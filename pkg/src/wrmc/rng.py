"""Seeded, splittable random streams.

A stream is identified by a master seed and a key tuple; streams with
different keys are statistically independent (numpy ``SeedSequence``
spawning), so replications can be generated in any order or on any worker.
"""

import numpy as np

# Steps drawn per generator call. Part of the stream layout: changing it
# changes every simulated trajectory.
CHUNK = 4096


def stream(seed: int, *key: int) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


def uniform_chunks(rng: np.random.Generator, rows: int, n: int):
    """Yield ``(offset, U)`` with ``U`` of shape ``(rows, T, 2)`` covering ``n`` steps."""
    done = 0
    while done < n:
        t = min(CHUNK, n - done)
        yield done, rng.random((rows, t, 2))
        done += t
