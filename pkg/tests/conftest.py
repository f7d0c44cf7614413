"""
Pytest configuration and fixtures for schur-varpro tests.

Key fixtures provide:
- Small deterministic datasets (noiseless chain, noisy grid, mixed residuals)
- Their assembled models and Schur operators
- A helper that writes datasets to g2o files under tmp_path
"""
import numpy as np
import pytest

from schur_varpro.dataset import DatasetBuilder
from schur_varpro.generators import NoiseModel, generate_bipartite_sfm, generate_grid_pgo
from schur_varpro.schur import build_operator
from schur_varpro.verification import draw_params, random_instance
from schur_varpro.writer import write_g2o


def pytest_configure(config):
    """Register custom markers."""
    config.addinivalue_line("markers", "slow: marks tests as slow (run with --slow)")


def pytest_collection_modifyitems(config, items):
    """Skip slow tests unless --slow is passed."""
    if config.getoption("--slow", default=False):
        return
    skip_slow = pytest.mark.skip(reason="need --slow option to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def pytest_addoption(parser):
    """Add --slow option to pytest."""
    parser.addoption("--slow", action="store_true", default=False, help="run slow tests")


# =============================================================================
# Dataset Fixtures
# =============================================================================


def rot2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@pytest.fixture
def chain_dataset():
    """Three 2D poses with exact relative-pose measurements and one exact range."""
    builder = DatasetBuilder(2, "chain")
    R = [rot2(0.0), rot2(0.5), rot2(-0.3)]
    t = [np.array([0.0, 0.0]), np.array([1.0, 0.2]), np.array([2.0, -0.4])]
    for k in range(3):
        builder.add_pose(k, R[k], t[k])
    for i, j in [(0, 1), (1, 2)]:
        builder.add_rel_pose(i, j, R[i].T @ R[j], R[i].T @ (t[j] - t[i]), 10.0, 5.0)
    builder.add_range(0, 2, float(np.linalg.norm(t[2] - t[0])), 2.0)
    return builder.build()


@pytest.fixture
def grid_dataset():
    """Noisy 4x4 2D grid pose graph."""
    return generate_grid_pgo(4, 4, 2, NoiseModel(0.05, 0.05), loop_prob=0.5, seed=1)


@pytest.fixture
def noiseless_grid():
    return generate_grid_pgo(3, 3, 2, NoiseModel(), loop_prob=0.5, seed=2)


@pytest.fixture
def sfm_dataset():
    """Small noisy 3D frames/landmarks graph."""
    return generate_bipartite_sfm(5, 8, 2, NoiseModel(0.02, 0.05), seed=3)


@pytest.fixture(params=[(11, 2, 1), (12, 3, 1), (13, 2, 2), (14, 3, 2)], ids=["2d-1c", "3d-1c", "2d-2c", "3d-2c"])
def mixed_dataset(request):
    """Random instance with relative rotations, translations and ranges."""
    seed, d, components = request.param
    return random_instance(draw_params(seed, d=d, components=components))


@pytest.fixture
def grid_model(grid_dataset):
    return grid_dataset.model()


@pytest.fixture
def grid_operator(grid_model):
    return build_operator(grid_model)


@pytest.fixture
def write_dataset(tmp_path):
    """Write a dataset to a g2o file and return its path."""

    def _write(dataset, name: str = "data.g2o"):
        path = tmp_path / name
        write_g2o(dataset, path)
        return path

    return _write
