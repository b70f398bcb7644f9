"""Seeded, splittable random streams.

Every stochastic function takes a ``numpy.random.Generator`` explicitly.
A session owns one root seed and derives one child stream per role so that
changing, say, the eavesdropper does not shift Alice's draws.
"""

from __future__ import annotations

import numpy as np

SESSION_STREAMS = ("alice", "source", "channel", "eve", "bob", "sample", "amplify")


def make_rng(seed: int | None) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def split(seed: int, names=SESSION_STREAMS) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.Generator(np.random.PCG64(ss)) for name, ss in zip(names, children)}
