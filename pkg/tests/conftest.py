import numpy as np
import pytest

from sdns import streams
from sdns.spectral import Grid, random_field


@pytest.fixture(scope="session")
def grid2():
    return Grid(2, 16)


@pytest.fixture(scope="session")
def grid3():
    return Grid(3, 16)


@pytest.fixture(scope="session")
def field_pairs_16():
    """Small random dealiased pair ensembles per dimension."""
    out = {}
    for d in (2, 3):
        grid = Grid(d, 16)
        pairs = []
        for i in range(20):
            rng = streams.stream(1234, d, i)
            u = random_field(grid, rng, norm_H=float(rng.uniform(0.2, 2.0)))
            v = random_field(grid, rng, norm_H=float(rng.uniform(0.2, 2.0)))
            pairs.append((u, v))
        out[d] = pairs
    return out
