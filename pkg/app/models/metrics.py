"""Evaluation and training-log models."""

from typing import Dict

from pydantic import BaseModel, Field


class HorizonMetrics(BaseModel):
    """Masked error metrics at one forecast horizon."""

    mae: float = Field(..., description="Mean absolute error (NaN when nothing is observed)")
    rmse: float = Field(..., description="Root mean squared error")
    mape: float = Field(
        ..., description="Mean absolute percentage error as a fraction (0.1 = 10%)"
    )


class EpochLog(BaseModel):
    """One row of the per-epoch training log."""

    epoch: int = Field(..., ge=1, description="1-based epoch number")
    iter: int = Field(..., ge=0, description="Iterations completed so far")
    train_loss: float = Field(..., description="Mean training loss over the epoch")
    val_mae: float = Field(..., description="Validation MAE over all horizons")


def metrics_document(metrics: Dict[int, HorizonMetrics]) -> Dict[str, Dict[str, float]]:
    """Render metrics as ``{horizon: {mae, rmse, mape}}``."""
    return {str(horizon): value.model_dump() for horizon, value in sorted(metrics.items())}


__all__ = ["HorizonMetrics", "EpochLog", "metrics_document"]
