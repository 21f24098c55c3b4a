"""Sensitivity sweep report models."""

from typing import Dict, List

from pydantic import BaseModel, Field

from app.models.metrics import HorizonMetrics


class SweepPoint(BaseModel):
    """One trained configuration of the grid."""

    alpha: float = Field(..., description="Entmax alpha")
    num_heads: int = Field(..., description="Attention heads P")
    num_neighbors: int = Field(..., description="Significant neighbor set size M")
    top_k: int = Field(..., description="Frequency-ranked slots K")
    best_val_mae: float = Field(..., description="Best validation MAE during training")
    best_epoch: int = Field(..., description="Epoch of the restored snapshot")
    metrics: Dict[str, HorizonMetrics] = Field(
        default_factory=dict, description="Test metrics keyed by horizon"
    )


class SweepReport(BaseModel):
    """Test metrics over a grid of alpha, heads and M."""

    horizons: List[int] = Field(..., description="Reported horizons")
    points: List[SweepPoint] = Field(default_factory=list)

    def best(self, horizon: int) -> SweepPoint:
        """The point with the lowest test MAE at ``horizon``."""
        key = str(horizon)
        if not self.points or key not in self.points[0].metrics:
            raise ValueError(f"Horizon {horizon} is not in the report")
        return min(self.points, key=lambda point: point.metrics[key].mae)


__all__ = ["SweepPoint", "SweepReport"]
