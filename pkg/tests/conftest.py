"""Shared fixtures: the procedural mesh corpus and prebuilt indexes.

Everything heavy is session scoped and built lazily, so unit-test runs that
never touch the big models stay fast.
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import meshgen  # noqa: E402
from p2m.index import build_index  # noqa: E402


@pytest.fixture(scope="session")
def cube():
    return meshgen.cube_mesh()


@pytest.fixture(scope="session")
def tet_regular():
    return meshgen.tet_mesh(regular=True)


@pytest.fixture(scope="session")
def tet_unit():
    return meshgen.tet_mesh(regular=False)


@pytest.fixture(scope="session")
def sphere80():
    """Exact sphere: the one shape where every vertex can intercept every
    face (all cells meet at the center), kept tiny on purpose."""
    return meshgen.icosphere(1)


@pytest.fixture(scope="session")
def ico320():
    return meshgen.icosphere(2)


@pytest.fixture(scope="session")
def ellipsoid5k():
    return meshgen.icosphere(4, axes=(1.0, 0.85, 0.7))


@pytest.fixture(scope="session")
def bracket():
    return meshgen.voxel_bracket(3)


@pytest.fixture(scope="session")
def blob1k():
    return meshgen.bumpy_blob(24)


@pytest.fixture(scope="session")
def small_tube():
    """Open mesh (boundary edges) for wire/boundary behavior."""
    return meshgen.tube(21, 12)


@pytest.fixture(scope="session")
def idx_cube(cube):
    return build_index(cube)


@pytest.fixture(scope="session")
def idx_tet(tet_regular):
    return build_index(tet_regular)


@pytest.fixture(scope="session")
def idx_blob1k(blob1k):
    return build_index(blob1k)


@pytest.fixture(scope="session")
def idx_bracket(bracket):
    return build_index(bracket)


@pytest.fixture(scope="session")
def rng():
    return np.random.Generator(np.random.Philox(987654321))
