"""Tests for the encoder-decoder forecaster and the masked MAE loss."""

import numpy as np
import pytest

from app.core.tensor import Parameter, Tape, Tensor
from app.core.variants import AdjacencyVariant
from app.services.diffusion import one_step_fast_gconv, zero_state
from app.services.forecaster import Forecaster, mae_loss
from app.services.windows import Scaler, TimeSeriesDataset, WindowSpec, make_windows


def _topology(num_nodes):
    matrix = np.zeros((num_nodes, num_nodes))
    matrix[:, 2] = 0.4
    matrix[:, 5] = 0.3
    matrix[:, 0] = 0.1
    np.fill_diagonal(matrix, 0.0)
    return matrix


@pytest.fixture
def windows(small_config):
    generator = np.random.default_rng(21)
    steps = 20
    dataset = TimeSeriesDataset(
        values=3.0 + generator.standard_normal((steps, small_config.num_nodes)),
        timestamps=300 * np.arange(steps),
        mask=np.ones((steps, small_config.num_nodes), dtype=bool),
    )
    scaler = Scaler.fit(dataset.values)
    spec = WindowSpec(small_config.history, small_config.horizon)
    return make_windows(dataset, spec, scaler), scaler


def test_create_is_deterministic(small_config):
    """Test that the same seed gives the same parameters and neighbor set."""
    first = Forecaster.create(small_config)
    second = Forecaster.create(small_config)
    assert first.index_set.ids.tolist() == second.index_set.ids.tolist()
    for pid, param in first.named_parameters().items():
        np.testing.assert_array_equal(param.data, second.named_parameters()[pid].data)


def test_encode_runs_history_minus_one_steps(small_config, windows):
    """Test that encoding runs h - 1 cell steps over the history."""
    batch, scaler = windows
    model = Forecaster.create(small_config, scaler)
    adjacency = model.build_adjacency()
    encoded = model.encode(batch, adjacency).numpy()

    state = zero_state(len(batch), small_config.num_nodes, small_config.hidden_dim)
    for step in range(small_config.history - 1):
        state, _ = one_step_fast_gconv(adjacency, Tensor(batch.inputs[:, step]), state, model.cell)
    np.testing.assert_allclose(encoded, state.numpy(), atol=1e-12)


def test_prediction_shape(small_config, windows):
    """Test the prediction shape B x f x N x 1."""
    batch, scaler = windows
    pred = Forecaster.create(small_config, scaler).predict(batch)
    assert pred.shape == (len(batch), small_config.horizon, small_config.num_nodes, 1)
    assert np.all(np.isfinite(pred))


def test_zero_weights_predict_the_scaler_mean(small_config, windows):
    """Test that zeroed cell weights forecast the scaler mean."""
    batch, _ = windows
    model = Forecaster.create(small_config, Scaler(mean=2.5, std=4.0))
    for param in model.cell.parameters():
        param.data[...] = 0.0
    np.testing.assert_allclose(model.predict(batch), 2.5)


def test_zero_weights_predict_zero_in_scaled_units(small_config, windows):
    """Test that zeroed cell weights forecast zero without a scaler."""
    batch, _ = windows
    model = Forecaster.create(small_config)
    for param in model.cell.parameters():
        param.data[...] = 0.0
    np.testing.assert_array_equal(model.predict(batch), 0.0)


def test_batch_permutation_equivariance(small_config, windows):
    """Test that permuting the batch permutes the forecasts."""
    batch, scaler = windows
    model = Forecaster.create(small_config, scaler)
    order = np.random.default_rng(0).permutation(len(batch))
    np.testing.assert_allclose(
        model.predict(batch.subset(order)), model.predict(batch)[order], atol=1e-12
    )


def test_chunking_does_not_change_predictions(small_config, windows):
    """Test that the prediction chunk size does not change results."""
    batch, scaler = windows
    model = Forecaster.create(small_config, scaler)
    np.testing.assert_allclose(model.predict(batch, 1), model.predict(batch, 64), atol=1e-12)


def test_rejects_wrong_history(small_config, windows):
    """Test that a batch with the wrong history length is refused."""
    batch, scaler = windows
    model = Forecaster.create(small_config.model_copy(update={"history": 4}), scaler)
    with pytest.raises(ValueError, match="history"):
        model.predict(batch)


def test_dense_mode_matches_slim_at_full_neighbor_set(small_config, windows):
    """Test that dense mode and the slim path agree when M = N."""
    batch, scaler = windows
    full = small_config.model_copy(update={"num_neighbors": 6, "top_k": 4})
    slim = Forecaster.create(full, scaler)
    dense = Forecaster.create(full.model_copy(update={"dense_mode": True}), scaler)
    np.testing.assert_allclose(slim.predict(batch), dense.predict(batch), atol=1e-10)


def test_full_neighbor_set_does_not_sample(small_config):
    """Test that M = N skips neighbor sampling."""
    model = Forecaster.create(small_config.model_copy(update={"num_neighbors": 6, "top_k": 4}))
    assert not model.samples_neighbors
    assert model.index_set.ids.tolist() == list(range(6))


@pytest.mark.parametrize(
    "variant, present, absent",
    [
        (AdjacencyVariant.SPARSE_ATTENTION, {"embedding", "attention.projection"}, set()),
        (AdjacencyVariant.RANDOM_NEIGHBORS, {"embedding", "attention.projection"}, set()),
        (AdjacencyVariant.INNER_PRODUCT, {"embedding"}, {"attention.projection"}),
        (AdjacencyVariant.NO_GRAPH, set(), {"embedding", "attention.projection"}),
        (AdjacencyVariant.TOPOLOGY, set(), {"embedding", "attention.projection"}),
    ],
)
def test_trainable_parameters_follow_variant(small_config, variant, present, absent):
    """Test which parameters each variant trains."""
    model = Forecaster.create(
        small_config.model_copy(update={"variant": variant}), topology=_topology(small_config.num_nodes)
    )
    ids = {param.id for param in model.parameters()}
    assert present | {"cell.projection"} <= ids
    assert not absent & ids


def test_random_variant_keeps_its_neighbor_set(small_config):
    """Test that the random variant never refreshes its neighbors."""
    model = Forecaster.create(
        small_config.model_copy(update={"variant": AdjacencyVariant.RANDOM_NEIGHBORS})
    )
    before = model.index_set.ids.tolist()
    assert not model.samples_neighbors
    assert model.refresh_neighbors(5).ids.tolist() == before


def test_no_graph_adjacency_is_zero(small_config):
    """Test that the no-graph adjacency is all zeros."""
    model = Forecaster.create(small_config.model_copy(update={"variant": AdjacencyVariant.NO_GRAPH}))
    np.testing.assert_array_equal(model.build_adjacency().values.numpy(), 0.0)


def test_refresh_is_deterministic_per_iteration(small_config):
    """Test that a refresh at one iteration is reproducible."""
    first = Forecaster.create(small_config)
    second = Forecaster.create(small_config)
    assert first.refresh_neighbors(7).ids.tolist() == second.refresh_neighbors(7).ids.tolist()


def test_snapshot_and_restore(small_config):
    """Test that restore brings back weights and the neighbor set."""
    model = Forecaster.create(small_config)
    saved = model.snapshot()
    original = model.embedding.weight.data.copy()
    model.embedding.weight.data += 1.0
    model.refresh_neighbors(3)
    model.restore(saved)
    np.testing.assert_array_equal(model.embedding.weight.data, original)
    assert model.index_set is saved["index_set"]


def test_gradients_reach_every_trainable_parameter(small_config, windows):
    """Test that one backward pass reaches every trainable weight."""
    batch, scaler = windows
    model = Forecaster.create(small_config.model_copy(update={"alpha": 1.0}), scaler)
    with Tape() as tape:
        loss = mae_loss(model.forward(batch), batch.targets, batch.mask)
        tape.backward(loss)
    for param in model.parameters():
        if param.id.endswith(("b1", "b2")):
            continue
        assert np.any(param.grad != 0.0), param.id


def test_mae_hand_example():
    """Test masked MAE on a hand-computed example."""
    loss = mae_loss(Tensor([1.0, 2.0]), np.array([2.0, 4.0]), np.ones(2))
    assert loss.item() == pytest.approx(1.5)


def test_masked_position_is_ignored():
    """Test that masked positions do not count."""
    loss = mae_loss(Tensor([1.0, 2.0]), np.array([2.0, 40.0]), np.array([1.0, 0.0]))
    assert loss.item() == pytest.approx(1.0)


def test_mae_constant_offset(rng):
    """Test that a constant offset gives that offset as MAE."""
    target = rng.standard_normal((2, 3, 4, 1))
    loss = mae_loss(Tensor(target + 0.25), target, np.ones((2, 3, 4)))
    assert loss.item() == pytest.approx(0.25)


def test_nan_target_under_mask_is_ignored():
    """Test that a NaN target under the mask is ignored."""
    loss = mae_loss(Tensor([1.0, 2.0]), np.array([1.5, np.nan]), np.array([1.0, 0.0]))
    assert loss.item() == pytest.approx(0.5)


def test_mae_empty_mask_rejected():
    """Test that an all-false mask is refused."""
    with pytest.raises(ValueError, match="no positions"):
        mae_loss(Tensor([1.0]), np.array([2.0]), np.zeros(1))


def test_mae_shape_mismatch_rejected():
    """Test that prediction and target shapes must agree."""
    with pytest.raises(ValueError, match="differ"):
        mae_loss(Tensor([1.0, 2.0]), np.array([2.0]), np.ones(1))


def test_mae_bad_mask_shape_rejected():
    """Test that a mask that does not fit is refused."""
    with pytest.raises(ValueError, match="does not fit"):
        mae_loss(Tensor(np.ones((2, 2))), np.ones((2, 2)), np.ones(3))


def test_mae_gradient_is_sign_over_count():
    """Test that the MAE gradient is the sign over the observed count."""
    pred = Parameter([1.0, 5.0, 2.0, 0.0], id="pred")
    with Tape() as tape:
        tape.backward(mae_loss(pred, np.array([2.0, 4.0, 3.0, 9.0]), np.array([1, 1, 1, 0])))
    np.testing.assert_allclose(pred.grad, [-1 / 3, 1 / 3, -1 / 3, 0.0])


def test_mae_is_scalar(rng):
    """Test that the loss is a scalar tensor."""
    loss = mae_loss(Tensor(rng.standard_normal((2, 2, 1))), np.zeros((2, 2, 1)), np.ones((2, 2)))
    assert loss.shape == ()


def test_mae_matches_scalar_loop(rng):
    """Test masked MAE against an explicit loop."""
    pred = rng.standard_normal((3, 2, 4, 1))
    target = rng.standard_normal((3, 2, 4, 1))
    mask = rng.random((3, 2, 4)) > 0.3
    total, count = 0.0, 0
    for index in np.ndindex(mask.shape):
        if mask[index]:
            total += abs(target[index][0] - pred[index][0])
            count += 1
    loss = mae_loss(Tensor(pred), target, mask)
    assert abs(loss.item() - total / count) <= 1e-12


def test_topology_variant_uses_the_fixed_matrix(small_config, windows):
    """Test that the topology variant diffuses over columns of the given matrix."""
    batch, scaler = windows
    matrix = _topology(small_config.num_nodes)
    config = small_config.model_copy(update={"variant": AdjacencyVariant.TOPOLOGY})
    model = Forecaster.create(config, scaler, matrix)
    assert model.index_set.ids.tolist() == [2, 5, 0, 1]
    assert not model.samples_neighbors
    np.testing.assert_array_equal(model.build_adjacency().values.numpy(), matrix[:, [2, 5, 0, 1]])
    assert model.refresh_neighbors(4).ids.tolist() == [2, 5, 0, 1]
    assert np.all(np.isfinite(model.predict(batch)))


def test_topology_variant_needs_a_matrix(small_config):
    """Test that the topology variant refuses to start without a matrix."""
    config = small_config.model_copy(update={"variant": AdjacencyVariant.TOPOLOGY})
    with pytest.raises(ValueError, match="fixed N x N"):
        Forecaster.create(config)
    with pytest.raises(ValueError, match="must be"):
        Forecaster.create(config, topology=np.zeros((3, 3)))


def test_other_variants_ignore_a_matrix(small_config):
    """Test that a matrix passed to a learned variant is dropped."""
    model = Forecaster.create(small_config, topology=_topology(small_config.num_nodes))
    assert model.topology is None
