import pytest

from minlag.core.hyperbolic import build_octagon_group
from minlag.core.mesh import build_mesh
from minlag.core.qdiff import build_series_basis
from minlag.settings import config_from_mapping

COARSE_H = 0.2
SMALL_L = 7.0


@pytest.fixture(scope="session")
def group():
    return build_octagon_group()


@pytest.fixture(scope="session")
def mesh(group):
    return build_mesh(group, COARSE_H)


@pytest.fixture(scope="session")
def basis(group):
    return build_series_basis(group, SMALL_L, tolerance=5e-2)


@pytest.fixture(scope="session")
def small_config():
    return config_from_mapping({
        "target_h": COARSE_H,
        "word_length": SMALL_L,
        "series_tolerance": 5e-2,
        "t_grid": [1.0, 4.0],
        "curves": ["a", "ab"],
        "segments": 64,
    })
