"""Counter-based random streams for reproducible ensembles.

Each (seed, trajectory, step) triple owns an independent Philox block: the
pair (seed, trajectory) forms the 128-bit key, the step index sits in the
second counter word and an optional lane index in the third, so a step can
consume up to 2^64 draws without touching any other block.  Values drawn
inside a block are assigned to lattice modes positionally, making every
increment a pure function of (seed, trajectory, step, mode).
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(
    seed: int, trajectory: int = 0, step: int = 0, lane: int = 0
) -> np.random.Generator:
    """Fresh generator for one (seed, trajectory, step, lane) block."""
    key = np.array([seed & _MASK64, trajectory & _MASK64], dtype=np.uint64)
    counter = np.array([0, step & _MASK64, lane & _MASK64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))
