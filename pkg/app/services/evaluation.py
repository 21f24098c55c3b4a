"""Masked forecast metrics per horizon and the persistence baseline."""

import logging
from typing import Dict, Optional, Sequence

import numpy as np

from app.models.metrics import HorizonMetrics
from app.services.forecaster import Forecaster
from app.services.windows import ForecastBatch
from app.utils.opik_wrapper import tracked

logger = logging.getLogger(__name__)

MAPE_FLOOR = 1e-3


def check_horizons(horizons: Sequence[int], horizon: int) -> None:
    for value in horizons:
        if not 1 <= value <= horizon:
            raise ValueError(f"horizon {value} is outside the forecast range 1..{horizon}")


def masked_metrics(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> HorizonMetrics:
    """MAE, RMSE and MAPE (as a fraction) over positions where ``mask`` is set.

    MAPE ignores targets with magnitude below ``MAPE_FLOOR``. Metrics with no
    eligible positions are NaN.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), target.shape)
    errors = (pred - target)[mask]
    if errors.size == 0:
        return HorizonMetrics(mae=float("nan"), rmse=float("nan"), mape=float("nan"))

    observed = target[mask]
    eligible = np.abs(observed) > MAPE_FLOOR
    mape = (
        float(np.mean(np.abs(errors[eligible]) / np.abs(observed[eligible])))
        if eligible.any()
        else float("nan")
    )
    return HorizonMetrics(
        mae=float(np.mean(np.abs(errors))),
        rmse=float(np.sqrt(np.mean(errors * errors))),
        mape=mape,
    )


def horizon_metrics(
    pred: np.ndarray, target: np.ndarray, mask: np.ndarray, horizons: Sequence[int]
) -> Dict[int, HorizonMetrics]:
    """Metrics at each 1-based horizon step.

    Args:
        pred: B x f x N x C predictions
        target: B x f x N x C targets
        mask: B x f x N validity

    Raises:
        ValueError: If a horizon is outside 1..f
    """
    if pred.shape != target.shape:
        raise ValueError(f"prediction {pred.shape} and target {target.shape} differ")
    check_horizons(horizons, target.shape[1])
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == target.ndim - 1:
        mask = mask[..., None]
    return {
        h: masked_metrics(pred[:, h - 1], target[:, h - 1], mask[:, h - 1]) for h in horizons
    }


def masked_mae(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> float:
    """MAE over every horizon step."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == target.ndim - 1:
        mask = mask[..., None]
    return masked_metrics(pred, target, mask).mae


def persistence_forecast(windows: ForecastBatch) -> np.ndarray:
    """Repeat the last observed value over the horizon: B x f x N x 1."""
    return np.repeat(windows.last_value[:, None], windows.horizon, axis=1)


@tracked("evaluate")
def evaluate(
    model: Forecaster,
    windows: ForecastBatch,
    horizons: Sequence[int],
    batch_size: Optional[int] = None,
) -> Dict[int, HorizonMetrics]:
    """Forecast ``windows`` with ``model`` and score each requested horizon."""
    check_horizons(horizons, model.config.horizon)
    pred = model.predict(windows, batch_size)
    metrics = horizon_metrics(pred, windows.targets, windows.mask, horizons)
    for h, values in metrics.items():
        logger.info("horizon %d: MAE=%.4f RMSE=%.4f MAPE=%.4f", h, values.mae, values.rmse, values.mape)
    return metrics


def evaluate_persistence(
    windows: ForecastBatch, horizons: Sequence[int]
) -> Dict[int, HorizonMetrics]:
    return horizon_metrics(persistence_forecast(windows), windows.targets, windows.mask, horizons)


__all__ = [
    "MAPE_FLOOR",
    "check_horizons",
    "masked_metrics",
    "horizon_metrics",
    "masked_mae",
    "persistence_forecast",
    "evaluate",
    "evaluate_persistence",
]
