import numpy as np
import pytest

from dklab import classical_triple, make_boundary, make_grid, porous_triple
from dklab.noise import NoiseMode, NoiseSpec, build_noise


@pytest.fixture
def classical():
    return classical_triple()


@pytest.fixture
def porous_m2():
    return porous_triple(2.0)


@pytest.fixture
def unit_grid64():
    return make_grid(0.0, 1.0, 64)


@pytest.fixture
def constant_field(unit_grid64):
    return build_noise(NoiseSpec((NoiseMode("constant", 1.0),)), unit_grid64)


@pytest.fixture
def two_mode_field(unit_grid64):
    spec = NoiseSpec((NoiseMode("constant", 1.0), NoiseMode("sine", 0.5, freq=1)))
    return build_noise(spec, unit_grid64)


@pytest.fixture
def zero_boundary(classical):
    return make_boundary(classical, 0.0, 0.0)


def l1_norm(vec, grid):
    return float(np.sum(np.abs(vec)) * grid.dx)
