"""Scaling benchmark report models."""

from typing import List, Optional

from pydantic import BaseModel, Field


class Spread(BaseModel):
    """Summary of repeated measurements."""

    min: float
    median: float
    max: float


class BenchPoint(BaseModel):
    """Measurements for one graph size."""

    num_nodes: int = Field(..., description="N")
    num_neighbors: int = Field(..., description="M (equals N in dense mode)")
    peak_bytes: Spread = Field(..., description="Peak live tensor bytes during one step")
    wall_seconds: Spread = Field(..., description="Wall time of one forward/backward step")


class BenchReport(BaseModel):
    """Memory and time scaling of the adjacency pipeline plus one training step."""

    dense_mode: bool = Field(..., description="Whether the N x N reference path was measured")
    repetitions: int = Field(..., ge=1)
    points: List[BenchPoint] = Field(default_factory=list)
    memory_slope: Optional[float] = Field(
        default=None, description="Fitted log-log slope of peak memory against N"
    )
    time_slope: Optional[float] = Field(
        default=None, description="Fitted log-log slope of wall time against N"
    )


__all__ = ["Spread", "BenchPoint", "BenchReport"]
