"""
Shared fixtures for the test suite
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to Python path
sys.path.insert(0, str(Path(__file__).parent))

from src.tdist import INFINITE, DistanceMatrix

# Seven sequences whose coverings match the worked example (1-based labels)
WORKED_EDGES = {
    (1, 3): 0.5, (1, 5): 1.5, (1, 6): 1.0, (1, 7): 1.0,
    (2, 5): 0.5,
    (3, 4): 0.5, (3, 5): 1.0, (3, 6): 0.5, (3, 7): 0.5,
    (4, 5): 1.5, (4, 6): 1.0,
    (5, 7): 1.5,
}


def worked_values() -> np.ndarray:
    values = np.full((7, 7), INFINITE, dtype=object)
    for i in range(7):
        values[i, i] = 0
    for (a, b), d in WORKED_EDGES.items():
        values[a - 1, b - 1] = values[b - 1, a - 1] = d
    return values


@pytest.fixture
def worked_matrix() -> DistanceMatrix:
    """Distances with unit 1-bit counts, so every value times 2 is an integer"""
    return DistanceMatrix.from_values(worked_values(), np.ones(7, dtype=np.int64), w_units=2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_bits(rng, n: int, length: int, density: float = 0.3) -> np.ndarray:
    return (rng.random((n, length)) < density).astype(np.uint8)


def random_graph_distances(rng, n: int, edge_p: float) -> np.ndarray:
    """Symmetric random distances in half-units, inf where no edge"""
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < edge_p:
                d[i, j] = d[j, i] = rng.integers(0, 8) / 2
    return d
