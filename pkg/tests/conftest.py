# tests/conftest.py
from __future__ import annotations

import math

import pytest

from funclib import FunctionSpec, TanhAtom
from grid import build_grid
from kernel import assemble_momentum_kernel, assemble_position_kernel
from spectral import eigendecompose

HALF_PI = 0.5 * math.pi


@pytest.fixture(scope="session")
def grid():
    return build_grid(20.0, 801)


@pytest.fixture(scope="session")
def coarse_grid():
    return build_grid(10.0, 51)


@pytest.fixture(scope="session")
def kato_pair():
    return (FunctionSpec.mixture([TanhAtom(scale=1.0)]),
            FunctionSpec.mixture([TanhAtom(scale=HALF_PI)]))


@pytest.fixture(scope="session")
def rank_three_pair():
    g = FunctionSpec.mixture([TanhAtom(scale=1.0)])
    f = FunctionSpec.mixture([TanhAtom(scale=HALF_PI), TanhAtom(scale=math.pi, weight=0.1)])
    return g, f


@pytest.fixture(scope="session")
def kato_position(kato_pair, grid):
    A = assemble_position_kernel(*kato_pair, grid)
    return A, eigendecompose(A)


@pytest.fixture(scope="session")
def kato_momentum(kato_pair, grid):
    A = assemble_momentum_kernel(*kato_pair, grid)
    return A, eigendecompose(A)


@pytest.fixture(scope="session")
def rank_three_position(rank_three_pair, grid):
    A = assemble_position_kernel(*rank_three_pair, grid)
    return A, eigendecompose(A)


@pytest.fixture(scope="session")
def rank_three_momentum(rank_three_pair, grid):
    A = assemble_momentum_kernel(*rank_three_pair, grid)
    return A, eigendecompose(A)
