import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import vectorhost as vh


@pytest.fixture
def unit_mesh():
    return vh.build_mesh(0.0, 1.0, 101)


@pytest.fixture
def pi_mesh():
    import numpy as np

    return vh.build_mesh(0.0, np.pi, 201)


@pytest.fixture
def neumann():
    return vh.BoundarySpec.neumann()


@pytest.fixture
def dirichlet():
    return vh.BoundarySpec.dirichlet()
