"""Tests for model and run configuration."""

import pytest
from pydantic import ValidationError

from app.core.variants import AdjacencyVariant
from app.models.metrics import HorizonMetrics, metrics_document
from app.models.model_config import ModelConfig, RunConfig
from app.utils.seeding import derive_seed


def test_full_scale_defaults():
    """Test the full-scale model defaults."""
    config = ModelConfig(num_nodes=500)
    assert (config.num_neighbors, config.top_k, config.embed_dim) == (100, 80, 100)
    assert (config.diffusion_depth, config.hidden_dim, config.num_heads) == (3, 64, 8)
    assert config.alpha == 2.0
    assert config.variant == AdjacencyVariant.SPARSE_ATTENTION


@pytest.mark.parametrize(
    "overrides, message",
    [
        ({"num_nodes": 5, "num_neighbors": 6, "top_k": 2}, "must not exceed"),
        ({"num_nodes": 10, "num_neighbors": 4, "top_k": 4}, "smaller than"),
        ({"num_nodes": 10, "num_neighbors": 4, "top_k": 2, "dense_mode": True}, "dense_mode"),
        ({"num_nodes": 10, "num_neighbors": 4, "top_k": 2, "alpha": 3.0}, "alpha"),
    ],
)
def test_rejects_inconsistent_sizes(overrides, message):
    """Test that inconsistent sizes are refused."""
    with pytest.raises(ValidationError, match=message):
        ModelConfig(**overrides)


def test_desk_scale():
    """Test the scaled-down defaults for a 20 node graph."""
    config = ModelConfig.desk_scale(20)
    assert config.num_neighbors == 6
    assert config.top_k == 5
    assert config.embed_dim == 8


def test_desk_scale_caps_at_full_scale():
    """Test that large graphs cap at the full-scale sizes."""
    config = ModelConfig.desk_scale(2000)
    assert (config.num_neighbors, config.top_k, config.embed_dim) == (100, 80, 100)


def test_desk_scale_overrides():
    """Test that explicit sizes win and None keeps the default."""
    config = ModelConfig.desk_scale(20, num_neighbors=10, top_k=None, hidden_dim=None, seed=4)
    assert config.num_neighbors == 10
    assert config.top_k == 8
    assert config.hidden_dim == 64
    assert config.seed == 4


def test_covariate_dim():
    """Test the covariate channel count."""
    assert ModelConfig(num_nodes=200, input_dim=3).covariate_dim == 2


def test_flags_override_file():
    """Test that flags win over the config file and None is ignored."""
    config = RunConfig.merge({"epochs": 5, "alpha": 1.5}, {"epochs": 2, "alpha": None})
    assert config.epochs == 2
    assert config.alpha == 1.5


def test_to_model_config():
    """Test mapping run flags onto the model configuration."""
    run = RunConfig(M=4, K=2, J=1, heads=1, hidden=3, history=4, horizon=2, seed=9, epochs=3)
    config = run.to_model_config(10)
    assert (config.num_neighbors, config.top_k, config.diffusion_depth) == (4, 2, 1)
    assert (config.num_heads, config.hidden_dim, config.seed) == (1, 3, 9)
    assert config.max_epochs == 3
    assert config.input_dim == 2


def test_day_of_week_adds_a_channel():
    """Test that the day-of-week flag adds an input channel."""
    config = RunConfig(day_of_week=True).to_model_config(10)
    assert config.input_dim == 3
    assert config.day_of_week


def test_dense_mode_uses_every_node():
    """Test that dense mode sets M = N and K = N - 1."""
    config = RunConfig(dense_mode=True, M=3).to_model_config(12)
    assert config.dense_mode
    assert (config.num_neighbors, config.top_k) == (12, 11)


def test_rejects_bad_values():
    """Test that an out of range flag value is refused."""
    with pytest.raises(ValidationError):
        RunConfig(alpha=0.5)


def test_metrics_document_sorts_horizons():
    """Test that metrics documents are keyed by sorted horizon."""
    document = metrics_document(
        {12: HorizonMetrics(mae=3, rmse=4, mape=0.2), 3: HorizonMetrics(mae=1, rmse=2, mape=0.1)}
    )
    assert list(document) == ["3", "12"]
    assert document["3"] == {"mae": 1.0, "rmse": 2.0, "mape": 0.1}


def test_derive_seed_is_stable_and_distinct():
    """Test that derived seeds repeat per key and differ across keys."""
    assert derive_seed(7, 1) == derive_seed(7, 1)
    assert derive_seed(7, 1) != derive_seed(7, 2)
    assert derive_seed(7, 3, 0) != derive_seed(7, 3, 1)
    assert 0 <= derive_seed(123, 4) < 2**63


def test_run_config_rejects_unknown_keys():
    """Test that a misspelled key is refused instead of ignored."""
    with pytest.raises(ValidationError, match="epoch"):
        RunConfig.merge({"epoch": 5}, {})


def test_run_config_sweep_and_topology_fields():
    """Test the sweep axes and the topology sidecar path."""
    run = RunConfig(sweep_alpha=[1.0, 2.0], sweep_heads=[1], sweep_M=[3, 4], topology="synth.json")
    assert run.sweep_alpha == [1.0, 2.0]
    assert run.sweep_M == [3, 4]
    assert run.topology == "synth.json"


def test_topology_variant_is_accepted():
    """Test that the topology variant parses from its flag value."""
    config = RunConfig(variant="topology").to_model_config(10)
    assert config.variant == AdjacencyVariant.TOPOLOGY
