"""Datasets, chronological splits, normalisation and sliding forecast windows."""

import logging
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import DataError

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400
# 1970-01-01 was a Thursday; shift so Monday maps to 0.
_EPOCH_WEEKDAY = 3

TRAIN_FRACTION = 0.7
VAL_FRACTION = 0.1
MIN_STEPS = 10


@dataclass
class TimeSeriesDataset:
    """T x N observations at a fixed sampling interval.

    Missing observations have ``mask == False`` and are stored as 0.
    """

    values: np.ndarray
    timestamps: np.ndarray
    mask: np.ndarray
    node_names: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.ndim != 2:
            raise DataError(f"values must be T x N, got shape {self.values.shape}")
        if self.values.shape[1] == 0:
            raise DataError("dataset has zero nodes")
        if self.mask.shape != self.values.shape:
            raise DataError(f"mask shape {self.mask.shape} != values shape {self.values.shape}")
        if self.timestamps.shape != (self.values.shape[0],):
            raise DataError(
                f"expected {self.values.shape[0]} timestamps, got {self.timestamps.shape[0]}"
            )
        if self.timestamps.size >= 2:
            gaps = np.diff(self.timestamps)
            if np.any(gaps <= 0):
                raise DataError("timestamps are not strictly increasing")
            if np.any(gaps != gaps[0]):
                raise DataError("timestamps are not evenly spaced")
        self.values = np.where(self.mask, self.values, 0.0)
        if not np.all(np.isfinite(self.values)):
            raise DataError("dataset contains non-finite values")
        if not self.node_names:
            self.node_names = [f"node_{i}" for i in range(self.num_nodes)]

    @property
    def num_steps(self) -> int:
        return self.values.shape[0]

    @property
    def num_nodes(self) -> int:
        return self.values.shape[1]

    @property
    def interval(self) -> Optional[int]:
        if self.num_steps < 2:
            return None
        return int(self.timestamps[1] - self.timestamps[0])

    def slice(self, start: int, stop: int) -> "TimeSeriesDataset":
        return TimeSeriesDataset(
            values=self.values[start:stop],
            timestamps=self.timestamps[start:stop],
            mask=self.mask[start:stop],
            node_names=list(self.node_names),
        )


@dataclass(frozen=True)
class WindowSpec:
    history: int
    horizon: int
    stride: int = 1

    def __post_init__(self) -> None:
        if self.history < 2 or self.horizon < 1 or self.stride < 1:
            raise ValueError(
                f"Window needs history >= 2, horizon >= 1, stride >= 1; got "
                f"{self.history}, {self.horizon}, {self.stride}"
            )

    @property
    def length(self) -> int:
        return self.history + self.horizon

    def count(self, num_steps: int) -> int:
        if num_steps < self.length:
            return 0
        return (num_steps - self.length) // self.stride + 1


@dataclass
class Scaler:
    """Z-score normalisation of the value channel."""

    mean: float = 0.0
    std: float = 1.0

    @classmethod
    def fit(cls, values: np.ndarray, mask: Optional[np.ndarray] = None) -> "Scaler":
        values = np.asarray(values, dtype=np.float64)
        observed = values[mask.astype(bool)] if mask is not None else values.ravel()
        if observed.size == 0:
            raise DataError("cannot fit a scaler without observed values")
        std = float(observed.std())
        if std == 0.0:
            logger.warning("Training values are constant; using std = 1.0")
            std = 1.0
        return cls(mean=float(observed.mean()), std=std)

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse_transform(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


@dataclass
class ForecastBatch:
    """Stacked windows.

    Shapes: inputs B x h x N x C_in (scaled value then covariates), targets
    B x f x N x 1 in original units, mask B x f x N, future_covariates
    B x f x N x (C_in - 1) for the target steps, last_value B x N x 1,
    target_times B x f.
    """

    inputs: np.ndarray
    targets: np.ndarray
    mask: np.ndarray
    future_covariates: np.ndarray
    last_value: np.ndarray
    target_times: np.ndarray

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def history(self) -> int:
        return self.inputs.shape[1]

    @property
    def horizon(self) -> int:
        return self.targets.shape[1]

    @property
    def num_nodes(self) -> int:
        return self.inputs.shape[2]

    def subset(self, indices: Sequence[int]) -> "ForecastBatch":
        indices = np.asarray(indices, dtype=np.int64)
        return ForecastBatch(
            inputs=self.inputs[indices],
            targets=self.targets[indices],
            mask=self.mask[indices],
            future_covariates=self.future_covariates[indices],
            last_value=self.last_value[indices],
            target_times=self.target_times[indices],
        )

    def batches(
        self, batch_size: int, rng: Optional[np.random.Generator] = None
    ) -> Iterator["ForecastBatch"]:
        """Yield mini-batches, shuffled when ``rng`` is given."""
        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for start in range(0, len(self), batch_size):
            yield self.subset(order[start : start + batch_size])


@dataclass
class PreparedData:
    scaler: Scaler
    train: ForecastBatch
    val: ForecastBatch
    test: ForecastBatch


def split(
    dataset: TimeSeriesDataset,
) -> Tuple[TimeSeriesDataset, TimeSeriesDataset, TimeSeriesDataset]:
    """Chronological 70/10/20 split by time steps (floor for train and val).

    Raises:
        DataError: If the dataset has fewer than 10 steps
    """
    steps = dataset.num_steps
    if steps < MIN_STEPS:
        raise DataError(f"need at least {MIN_STEPS} time steps to split, got {steps}")
    n_train = int(np.floor(TRAIN_FRACTION * steps))
    n_val = int(np.floor(VAL_FRACTION * steps))
    return (
        dataset.slice(0, n_train),
        dataset.slice(n_train, n_train + n_val),
        dataset.slice(n_train + n_val, steps),
    )


def time_covariates(timestamps: np.ndarray, day_of_week: bool = False) -> np.ndarray:
    """Time-of-day in [0, 1) and optionally day-of-week in [0, 1); shape T x k."""
    timestamps = np.asarray(timestamps, dtype=np.int64)
    columns = [(timestamps % SECONDS_PER_DAY) / SECONDS_PER_DAY]
    if day_of_week:
        columns.append(((timestamps // SECONDS_PER_DAY + _EPOCH_WEEKDAY) % 7) / 7.0)
    return np.stack(columns, axis=-1).astype(np.float64)


def _node_features(covariates: np.ndarray, num_nodes: int) -> np.ndarray:
    """Repeat T x k covariates over nodes: T x N x k."""
    return np.repeat(covariates[:, None, :], num_nodes, axis=1)


def make_windows(
    dataset: TimeSeriesDataset,
    spec: WindowSpec,
    scaler: Scaler,
    day_of_week: bool = False,
) -> ForecastBatch:
    """Cut sliding windows from one split.

    Raises:
        DataError: If the split is shorter than ``history + horizon``
    """
    if dataset.num_steps < spec.length:
        raise DataError(
            f"split has {dataset.num_steps} steps but a window needs {spec.length} "
            f"(history {spec.history} + horizon {spec.horizon})"
        )
    starts = np.arange(0, dataset.num_steps - spec.length + 1, spec.stride)
    history_idx = starts[:, None] + np.arange(spec.history)[None, :]
    target_idx = starts[:, None] + spec.history + np.arange(spec.horizon)[None, :]

    scaled = np.where(dataset.mask, scaler.transform(dataset.values), 0.0)
    covariates = _node_features(
        time_covariates(dataset.timestamps, day_of_week), dataset.num_nodes
    )
    features = np.concatenate([scaled[:, :, None], covariates], axis=2)

    return ForecastBatch(
        inputs=features[history_idx],
        targets=dataset.values[target_idx][..., None],
        mask=dataset.mask[target_idx],
        future_covariates=covariates[target_idx],
        last_value=dataset.values[starts + spec.history - 1][..., None],
        target_times=dataset.timestamps[target_idx],
    )


def make_forecast_window(
    dataset: TimeSeriesDataset,
    spec: WindowSpec,
    scaler: Scaler,
    day_of_week: bool = False,
) -> ForecastBatch:
    """One window over the last ``history`` steps, targets beyond the data.

    Raises:
        DataError: If the dataset is shorter than ``history`` or has no interval
    """
    if dataset.num_steps < spec.history or dataset.interval is None:
        raise DataError(
            f"need at least {max(spec.history, 2)} history steps, got {dataset.num_steps}"
        )
    recent = dataset.slice(dataset.num_steps - spec.history, dataset.num_steps)
    future_times = recent.timestamps[-1] + dataset.interval * np.arange(1, spec.horizon + 1)

    scaled = np.where(recent.mask, scaler.transform(recent.values), 0.0)
    covariates = _node_features(time_covariates(recent.timestamps, day_of_week), recent.num_nodes)
    future_covariates = _node_features(
        time_covariates(future_times, day_of_week), recent.num_nodes
    )
    inputs = np.concatenate([scaled[:, :, None], covariates], axis=2)
    shape = (1, spec.horizon, recent.num_nodes)

    return ForecastBatch(
        inputs=inputs[None],
        targets=np.zeros(shape + (1,)),
        mask=np.zeros(shape, dtype=bool),
        future_covariates=future_covariates[None],
        last_value=recent.values[-1][None, :, None],
        target_times=future_times[None],
    )


def prepare(
    dataset: TimeSeriesDataset, spec: WindowSpec, day_of_week: bool = False
) -> PreparedData:
    """Split, fit the scaler on the training split and window every split."""
    train, val, test = split(dataset)
    scaler = Scaler.fit(train.values, train.mask)
    logger.info(
        "Prepared splits of %d/%d/%d steps (scaler mean=%.4f std=%.4f)",
        train.num_steps,
        val.num_steps,
        test.num_steps,
        scaler.mean,
        scaler.std,
    )
    return PreparedData(
        scaler=scaler,
        train=make_windows(train, spec, scaler, day_of_week),
        val=make_windows(val, spec, scaler, day_of_week),
        test=make_windows(test, spec, scaler, day_of_week),
    )


__all__ = [
    "TimeSeriesDataset",
    "WindowSpec",
    "Scaler",
    "ForecastBatch",
    "PreparedData",
    "split",
    "time_covariates",
    "make_windows",
    "make_forecast_window",
    "prepare",
]
