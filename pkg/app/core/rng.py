# app/core/rng.py
"""Seeded, counter-addressable random streams.

Every random draw in a run comes from ``stream(seed, name, *keys)``. The stream is
built from ``numpy.random.SeedSequence(entropy=seed, spawn_key=(id, *keys))`` so a
sample's draws depend only on the master seed, the substream name and the sample
index, never on execution order or worker count.

Substream ids are part of the artifact contract; append new names, never renumber.
"""
from typing import Dict

import numpy as np

SUBSTREAMS: Dict[str, int] = {
    "phase1": 0,
    "train-draw": 1,
    "eval-draw": 2,
    "net-init": 3,
    "baseline-draw": 4,
    "oracle": 5,
    "cv-split": 6,
    "experiment": 7,
}

def seed_sequence(seed: int, name: str, *keys: int) -> np.random.SeedSequence:
    """SeedSequence addressed by (seed, substream, keys)"""
    if name not in SUBSTREAMS:
        raise KeyError(f"Unknown substream '{name}'")
    spawn_key = (SUBSTREAMS[name],) + tuple(int(k) for k in keys)
    return np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key)

def stream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Independent PCG64 generator for (seed, substream, keys)"""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, name, *keys)))

def derived_seed(seed: int, name: str, *keys: int) -> int:
    """A 31-bit integer seed for libraries that take plain ints (torch, sklearn)"""
    return int(seed_sequence(seed, name, *keys).generate_state(1, dtype=np.uint32)[0] & 0x7FFFFFFF)
