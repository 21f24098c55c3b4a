"""Configuration, metric and report models."""

from app.models.bench_report import BenchPoint, BenchReport, Spread
from app.models.metrics import EpochLog, HorizonMetrics, metrics_document
from app.models.model_config import ModelConfig, RunConfig
from app.models.sweep_report import SweepPoint, SweepReport

__all__ = [
    "BenchPoint",
    "BenchReport",
    "Spread",
    "EpochLog",
    "HorizonMetrics",
    "metrics_document",
    "ModelConfig",
    "RunConfig",
    "SweepPoint",
    "SweepReport",
]
