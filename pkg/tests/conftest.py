from pathlib import Path

import numpy as np
import pytest

from core.distributions import FiniteDistribution, normalize

INPUTS_DIR = Path(__file__).resolve().parent.parent / "scenarios" / "inputs"


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def random_distribution(rng):
    """Factory of random distributions with every atom above 1e-3."""

    def make(size: int) -> FiniteDistribution:
        weights = rng.dirichlet(np.ones(size)) + 1e-3
        return normalize(weights)

    return make


@pytest.fixture
def inputs_dir() -> Path:
    return INPUTS_DIR
