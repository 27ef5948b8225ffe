"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from tmclust.mda import Mda, matricize_mode1
from tmclust.mlnd import MlndParams


def random_spd(n: int, rng: np.random.Generator, jitter: float = 0.5) -> np.ndarray:
    """A well-conditioned random symmetric positive-definite matrix."""
    a = rng.standard_normal((n, n))
    s = a @ a.T / n + jitter * np.eye(n)
    return (s + s.T) / 2.0


def random_params(dims, rng: np.random.Generator) -> MlndParams:
    """Random component parameters with moderate condition numbers."""
    mean = rng.standard_normal(dims)
    scales = [random_spd(n, rng) for n in dims]
    return MlndParams(mean=matricize_mode1(mean), scales=tuple(scales))


def random_mda(dims, rng: np.random.Generator) -> Mda:
    return Mda(rng.standard_normal(dims))


@pytest.fixture
def rng():
    return np.random.default_rng(20260819)
