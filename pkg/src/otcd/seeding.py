"""Deterministic randomness derivation.

Every random draw in the toolkit flows from a single 64-bit seed through
counter-based Philox streams.  A stream is addressed by up to three integer
path components (e.g. subcommand tag, benchmark cell, agent index), so the
draws consumed by one consumer never depend on how often another consumer
draws, and identical seeds reproduce identical runs bit for bit.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Path tags for the stream address space (first counter word).
TAG_COORDINATE = 1  # per-iteration coordinate draws of the OT solver
TAG_SYNTHETIC = 2  # synthetic image generation
TAG_BARYCENTER = 3  # per-agent coordinate draws of the barycenter solver
TAG_IDX_PAIRS = 4  # pair selection from IDX image containers

# Coordinate draws are served in fixed blocks so that the draw for iteration
# k is a pure function of (seed, k) while Philox construction is amortized.
_BLOCK = 1024


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator for the Philox stream addressed by ``path``.

    ``path`` may hold at most three components; each is reduced mod 2**64.
    """
    if len(path) > 3:
        raise ValueError("stream path supports at most three components")
    counter = np.zeros(4, dtype=np.uint64)
    for i, part in enumerate(path):
        counter[i] = np.uint64(int(part) & _MASK64)
    return np.random.Generator(np.random.Philox(key=np.uint64(int(seed) & _MASK64), counter=counter))


class CoordinateSampler:
    """Uniform coordinate draws keyed by (seed, iteration).

    The draw for iteration ``k`` comes from the Philox stream addressed by
    (TAG_COORDINATE, k // _BLOCK) at offset k % _BLOCK, so it depends only on
    the seed and the iteration counter, never on trace frequency or stopping
    behavior.
    """

    def __init__(self, seed: int, dim: int):
        self.seed = int(seed)
        self.dim = int(dim)
        self._block_id = -1
        self._block = None

    def draw(self, iteration: int) -> int:
        block_id = iteration // _BLOCK
        if block_id != self._block_id:
            rng = substream(self.seed, TAG_COORDINATE, block_id)
            self._block = rng.integers(0, self.dim, size=_BLOCK)
            self._block_id = block_id
        return int(self._block[iteration % _BLOCK])
