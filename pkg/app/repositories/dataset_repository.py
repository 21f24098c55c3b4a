"""Repository for dataset CSV files and their JSON sidecars."""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.core.errors import DataError
from app.services.windows import TimeSeriesDataset

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
TIMESTAMP_COLUMN = "timestamp"
FLOAT_FORMAT = "%.17g"


class DatasetRepository:
    """Reads and writes datasets in the one-row-per-time-step CSV layout.

    The first column holds timestamps (ISO-8601 or epoch seconds); every other
    column is one node. Empty cells are missing observations.
    """

    def load_csv(self, path: PathLike) -> TimeSeriesDataset:
        """Load a dataset.

        Args:
            path: CSV file path

        Returns:
            Parsed dataset with its validity mask

        Raises:
            DataError: On ragged rows, unparsable cells, zero nodes, or
                non-monotone or irregular timestamps (with the line number)
        """
        path = Path(path)
        header = self._check_shape(path)
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        if frame.empty:
            raise DataError(f"{path}: no data rows")

        timestamps = self._parse_timestamps(frame.iloc[:, 0], path)
        raw = frame.iloc[:, 1:].apply(lambda column: column.str.strip())
        missing = raw == ""
        values = raw.apply(pd.to_numeric, errors="coerce")
        bad = values.isna() & ~missing
        if bad.to_numpy().any():
            row, col = np.argwhere(bad.to_numpy())[0]
            raise DataError(
                f"{path}: line {row + 2}: cannot parse {raw.iat[row, col]!r} in column "
                f"{header[col + 1]!r}"
            )

        mask = ~values.isna().to_numpy()
        dataset = TimeSeriesDataset(
            values=values.fillna(0.0).to_numpy(dtype=np.float64),
            timestamps=timestamps,
            mask=mask,
            node_names=[str(name) for name in header[1:]],
        )
        logger.info(
            "Loaded %s: T=%d N=%d missing=%d",
            path,
            dataset.num_steps,
            dataset.num_nodes,
            int((~mask).sum()),
        )
        return dataset

    def _check_shape(self, path: Path) -> Sequence[str]:
        """Return the header after checking every row has the same field count."""
        try:
            handle = path.open(newline="")
        except OSError as exc:
            raise DataError(f"{path}: cannot open dataset ({exc})") from exc
        with handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None:
                raise DataError(f"{path}: empty file")
            if len(header) < 2:
                raise DataError(f"{path}: line 1: zero node columns after the timestamp column")
            for line_number, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise DataError(
                        f"{path}: line {line_number}: expected {len(header)} fields, "
                        f"got {len(row)}"
                    )
        return header

    def _parse_timestamps(self, column: pd.Series, path: Path) -> np.ndarray:
        text = column.str.strip()
        numeric = pd.to_numeric(text, errors="coerce")
        if not numeric.isna().any():
            seconds = numeric.to_numpy(dtype=np.float64)
            if not np.all(seconds == np.round(seconds)):
                raise DataError(f"{path}: epoch timestamps must be whole seconds")
            seconds = seconds.astype(np.int64)
        else:
            parsed = pd.to_datetime(text, utc=True, errors="coerce")
            if parsed.isna().any():
                row = int(np.flatnonzero(parsed.isna().to_numpy())[0])
                raise DataError(f"{path}: line {row + 2}: cannot parse timestamp {text.iat[row]!r}")
            epoch = pd.Timestamp("1970-01-01", tz="UTC")
            seconds = ((parsed - epoch) // pd.Timedelta(seconds=1)).to_numpy(dtype=np.int64)

        gaps = np.diff(seconds)
        if gaps.size:
            backwards = np.flatnonzero(gaps <= 0)
            if backwards.size:
                raise DataError(
                    f"{path}: line {backwards[0] + 3}: timestamps are not strictly increasing"
                )
            irregular = np.flatnonzero(gaps != gaps[0])
            if irregular.size:
                raise DataError(
                    f"{path}: line {irregular[0] + 3}: irregular spacing "
                    f"({gaps[irregular[0]]}s, expected {gaps[0]}s)"
                )
        return seconds

    def write_csv(self, dataset: TimeSeriesDataset, path: PathLike) -> Path:
        """Write ``dataset`` with epoch-second timestamps and empty missing cells.

        Args:
            dataset: Dataset to write
            path: Destination file

        Returns:
            The written path
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(
            np.where(dataset.mask, dataset.values, np.nan), columns=dataset.node_names
        )
        frame.insert(0, TIMESTAMP_COLUMN, dataset.timestamps)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="")
        logger.info("Wrote %s (T=%d N=%d)", path, dataset.num_steps, dataset.num_nodes)
        return path

    def write_forecast(
        self,
        predictions: np.ndarray,
        timestamps: np.ndarray,
        node_names: Sequence[str],
        path: PathLike,
    ) -> Path:
        """Write an f x N forecast in the dataset layout."""
        predictions = np.asarray(predictions, dtype=np.float64)
        dataset = TimeSeriesDataset(
            values=predictions,
            timestamps=timestamps,
            mask=np.ones(predictions.shape, dtype=bool),
            node_names=list(node_names),
        )
        return self.write_csv(dataset, path)

    def write_sidecar(
        self,
        path: PathLike,
        adjacency: np.ndarray,
        hubs: Sequence[int],
        extras: Optional[Dict[str, Any]] = None,
    ) -> Path:
        """Write the true adjacency and hub ids as JSON next to a dataset.

        Args:
            path: Sidecar path (``<dataset>.json`` by convention)
            adjacency: N x N ground-truth adjacency
            hubs: 0-based hub node ids
            extras: Additional generator parameters to record
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        document = {
            "adjacency": np.asarray(adjacency, dtype=np.float64).tolist(),
            "hubs": [int(h) for h in hubs],
            **(extras or {}),
        }
        path.write_text(json.dumps(document, indent=2))
        return path

    def read_sidecar(self, path: PathLike) -> Dict[str, Any]:
        """Read a sidecar; ``adjacency`` and ``hubs`` come back as arrays.

        Raises:
            DataError: If the file is missing or not a sidecar document
        """
        path = Path(path)
        try:
            document = json.loads(path.read_text())
            document["adjacency"] = np.asarray(document["adjacency"], dtype=np.float64)
            document["hubs"] = np.asarray(document["hubs"], dtype=np.int64)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise DataError(f"{path}: invalid sidecar ({exc})") from exc
        return document


def sidecar_path(dataset_path: PathLike) -> Path:
    return Path(dataset_path).with_suffix(".json")


__all__ = ["DatasetRepository", "sidecar_path"]
