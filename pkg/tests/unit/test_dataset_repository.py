"""Tests for the dataset CSV repository."""

import numpy as np
import pytest

from app.core.errors import DataError
from app.repositories.dataset_repository import sidecar_path
from app.services.windows import TimeSeriesDataset


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_empty_cell_is_masked(tmp_path, dataset_repository):
    """Test that an empty cell becomes a masked zero."""
    path = _write(tmp_path, "timestamp,a,b\n0,1.5,2\n300,,4\n600,5,6\n")
    dataset = dataset_repository.load_csv(path)
    assert dataset.values.shape == (3, 2)
    assert int((~dataset.mask).sum()) == 1
    assert not dataset.mask[1, 0]
    assert dataset.values[1, 0] == 0.0
    assert dataset.node_names == ["a", "b"]
    assert dataset.interval == 300


def test_iso_timestamps(tmp_path, dataset_repository):
    """Test that ISO-8601 timestamps parse to epoch seconds."""
    path = _write(
        tmp_path,
        "timestamp,a\n1970-01-01T00:05:00Z,1\n1970-01-01T00:10:00Z,2\n1970-01-01T00:15:00Z,3\n",
    )
    assert dataset_repository.load_csv(path).timestamps.tolist() == [300, 600, 900]


def test_shuffled_rows_rejected(tmp_path, dataset_repository):
    """Test that out of order rows are reported with their line."""
    path = _write(tmp_path, "timestamp,a\n0,1\n600,2\n300,3\n")
    with pytest.raises(DataError, match="line 4: timestamps are not strictly increasing"):
        dataset_repository.load_csv(path)


def test_irregular_spacing_rejected(tmp_path, dataset_repository):
    """Test that irregular spacing is reported with its line."""
    path = _write(tmp_path, "timestamp,a\n0,1\n300,2\n900,3\n")
    with pytest.raises(DataError, match="line 4: irregular spacing"):
        dataset_repository.load_csv(path)


def test_ragged_row_rejected(tmp_path, dataset_repository):
    """Test that a short row is reported with its field count."""
    path = _write(tmp_path, "timestamp,a,b\n0,1,2\n300,3\n")
    with pytest.raises(DataError, match="line 3: expected 3 fields, got 2"):
        dataset_repository.load_csv(path)


def test_zero_nodes_rejected(tmp_path, dataset_repository):
    """Test that a file without node columns is refused."""
    path = _write(tmp_path, "timestamp\n0\n300\n")
    with pytest.raises(DataError, match="zero node columns"):
        dataset_repository.load_csv(path)


def test_unparsable_value_rejected(tmp_path, dataset_repository):
    """Test that a non-numeric cell is reported."""
    path = _write(tmp_path, "timestamp,a\n0,1\n300,abc\n")
    with pytest.raises(DataError, match="line 3: cannot parse 'abc'"):
        dataset_repository.load_csv(path)


def test_unparsable_timestamp_rejected(tmp_path, dataset_repository):
    """Test that an unreadable timestamp is reported."""
    path = _write(tmp_path, "timestamp,a\n1970-01-01T00:00:00Z,1\nyesterday,2\n")
    with pytest.raises(DataError, match="line 3: cannot parse timestamp"):
        dataset_repository.load_csv(path)


def test_missing_file(tmp_path, dataset_repository):
    """Test that a missing CSV raises DataError."""
    with pytest.raises(DataError, match="cannot open"):
        dataset_repository.load_csv(tmp_path / "absent.csv")


def test_header_only(tmp_path, dataset_repository):
    """Test that a header without rows is refused."""
    with pytest.raises(DataError, match="no data rows"):
        dataset_repository.load_csv(_write(tmp_path, "timestamp,a\n"))


def test_csv_write_then_load(tmp_path, dataset_repository, rng):
    """Test that a written CSV loads back with values, mask and names."""
    mask = rng.random((15, 4)) > 0.1
    original = TimeSeriesDataset(
        values=rng.standard_normal((15, 4)) * 1e3,
        timestamps=1_600_000_000 + 60 * np.arange(15),
        mask=mask,
        node_names=["n0", "n1", "n2", "n3"],
    )
    path = dataset_repository.write_csv(original, tmp_path / "out" / "round.csv")
    restored = dataset_repository.load_csv(path)
    np.testing.assert_allclose(restored.values, original.values, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(restored.mask, original.mask)
    np.testing.assert_array_equal(restored.timestamps, original.timestamps)
    assert restored.node_names == original.node_names


def test_forecast_layout(tmp_path, dataset_repository):
    """Test the forecast CSV layout."""
    path = dataset_repository.write_forecast(
        np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([600, 900]), ["a", "b"], tmp_path / "f.csv"
    )
    lines = path.read_text().splitlines()
    assert lines[0] == "timestamp,a,b"
    assert lines[1:] == ["600,1,2", "900,3,4"]


def test_sidecar_write_then_read(tmp_path, dataset_repository):
    """Test that the sidecar keeps adjacency, hubs and extras."""
    path = sidecar_path(tmp_path / "synth.csv")
    assert path.name == "synth.json"
    dataset_repository.write_sidecar(path, np.eye(3), [2, 0], {"seed": 4})
    document = dataset_repository.read_sidecar(path)
    np.testing.assert_array_equal(document["adjacency"], np.eye(3))
    assert document["hubs"].tolist() == [2, 0]
    assert document["seed"] == 4


def test_invalid_sidecar(tmp_path, dataset_repository):
    """Test that a sidecar without an adjacency is refused."""
    with pytest.raises(DataError, match="invalid sidecar"):
        dataset_repository.read_sidecar(_write(tmp_path, "{}", "bad.json"))
