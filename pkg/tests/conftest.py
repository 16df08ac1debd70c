import numpy as np
import pytest

from vistaflow.voxel_model import VoxelGrid


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def random_grid(rng, dims=(8, 8, 8), bbox=((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)),
                density_range=(0.0, 12.0), sh_std=0.6, occupancy_p=1.0):
    """Random grid with reproducible contents for oracle comparisons."""
    g = VoxelGrid(dims, bbox[0], bbox[1])
    g.density[:] = rng.uniform(*density_range, size=dims)
    g.sh[:] = rng.normal(0.0, sh_std, size=dims + (27,))
    if occupancy_p < 1.0:
        g.occupancy[:] = rng.random(dims) < occupancy_p
        g.density[~g.occupancy] = 0.0
        g.sh[~g.occupancy] = 0.0
    return g


def random_unit_vectors(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
