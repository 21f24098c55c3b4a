"""Shared test fixtures and configuration."""

from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pytest

from app.core.tensor import Parameter, Tape, Tensor
from app.models.model_config import ModelConfig
from app.repositories.dataset_repository import DatasetRepository
from app.services.synthetic import SyntheticDataset, synth_generate
from app.services.windows import TimeSeriesDataset

FD_EPS = 1e-6
FD_RTOL = 1e-4


def finite_difference(fn: Callable[[], float], array: np.ndarray, eps: float = FD_EPS) -> np.ndarray:
    """Central differences of ``fn`` with respect to every entry of ``array`` (mutated in place)."""
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + eps
        upper = fn()
        array[index] = original - eps
        lower = fn()
        array[index] = original
        grad[index] = (upper - lower) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-6)
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(
    build: Callable[[], Tensor],
    params: Sequence[Parameter],
    eps: float = FD_EPS,
    rtol: float = FD_RTOL,
) -> None:
    """Assert tape gradients of ``build()`` match central finite differences."""
    for param in params:
        param.zero_grad()
    with Tape() as tape:
        loss = build()
        tape.backward(loss)
    for param in params:
        analytic = param.grad.copy()
        numeric = finite_difference(lambda: build().item(), param.data, eps)
        error = relative_error(analytic, numeric)
        assert error <= rtol, f"{param.id}: relative error {error:.3e}"


@pytest.fixture
def gradient_check():
    """Finite-difference gradient checker."""
    return check_gradients


@pytest.fixture
def rng():
    """Seeded generator for test inputs."""
    return np.random.default_rng(1234)


@pytest.fixture
def small_dataset():
    """60 steps of 4 nodes at 5-minute spacing from midnight, one missing cell."""
    steps, nodes = 60, 4
    generator = np.random.default_rng(7)
    values = 5.0 + generator.standard_normal((steps, nodes))
    mask = np.ones((steps, nodes), dtype=bool)
    mask[10, 2] = False
    return TimeSeriesDataset(
        values=values,
        timestamps=300 * np.arange(steps),
        mask=mask,
    )


@pytest.fixture
def small_config():
    """A tiny sparse-attention forecaster configuration."""
    return ModelConfig(
        num_nodes=6,
        num_neighbors=4,
        top_k=2,
        embed_dim=3,
        hidden_dim=4,
        num_heads=2,
        diffusion_depth=2,
        history=3,
        horizon=2,
        batch_size=4,
        max_epochs=2,
        seed=3,
    )


@pytest.fixture
def synthetic() -> SyntheticDataset:
    """Small planted-hub dataset."""
    return synth_generate(num_nodes=8, num_steps=200, num_hubs=3, seed=11)


@pytest.fixture
def dataset_repository():
    return DatasetRepository()


@pytest.fixture
def synthetic_csv(tmp_path: Path, synthetic: SyntheticDataset, dataset_repository) -> Path:
    """The small synthetic dataset written as CSV with its sidecar."""
    path = tmp_path / "synth.csv"
    dataset_repository.write_csv(synthetic.dataset, path)
    dataset_repository.write_sidecar(path.with_suffix(".json"), synthetic.adjacency, synthetic.hubs)
    return path
