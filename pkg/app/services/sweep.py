"""Sensitivity sweeps: retrain over a grid of alpha, attention heads and M."""

import itertools
import logging
from typing import List, Optional, Sequence

import numpy as np

from app.models.model_config import ModelConfig
from app.models.sweep_report import SweepPoint, SweepReport
from app.services.evaluation import check_horizons, evaluate
from app.services.trainer import train
from app.services.windows import PreparedData

logger = logging.getLogger(__name__)


def _scaled_top_k(base: ModelConfig, num_neighbors: int) -> int:
    """K for a new M, keeping the base K / M ratio."""
    ratio = base.top_k / base.num_neighbors
    return max(1, min(num_neighbors - 1, round(ratio * num_neighbors)))


def grid_configs(
    base: ModelConfig,
    alphas: Optional[Sequence[float]] = None,
    heads: Optional[Sequence[int]] = None,
    neighbors: Optional[Sequence[int]] = None,
) -> List[ModelConfig]:
    """Every combination of the given values; an omitted axis keeps the base value.

    Raises:
        ValueError: If a combination is not a valid configuration
    """
    configs = []
    for alpha, num_heads, num_neighbors in itertools.product(
        alphas or [base.alpha], heads or [base.num_heads], neighbors or [base.num_neighbors]
    ):
        top_k = base.top_k if num_neighbors == base.num_neighbors else _scaled_top_k(base, num_neighbors)
        values = base.model_dump()
        values.update(alpha=alpha, num_heads=num_heads, num_neighbors=num_neighbors, top_k=top_k)
        configs.append(ModelConfig.model_validate(values))
    return configs


def run_sweep(
    data: PreparedData,
    base: ModelConfig,
    alphas: Optional[Sequence[float]] = None,
    heads: Optional[Sequence[int]] = None,
    neighbors: Optional[Sequence[int]] = None,
    horizons: Sequence[int] = (3,),
    topology: Optional[np.ndarray] = None,
) -> SweepReport:
    """Train one forecaster per grid point and score it on ``data.test``.

    Raises:
        ValueError: If a combination is invalid or a horizon exceeds ``base.horizon``
    """
    horizons = sorted(set(horizons))
    check_horizons(horizons, base.horizon)
    configs = grid_configs(base, alphas, heads, neighbors)
    points = []
    for position, config in enumerate(configs, start=1):
        logger.info(
            "sweep %d/%d alpha=%.2f heads=%d M=%d K=%d",
            position,
            len(configs),
            config.alpha,
            config.num_heads,
            config.num_neighbors,
            config.top_k,
        )
        state = train(data, config, topology=topology)
        metrics = evaluate(state.model, data.test, horizons)
        points.append(
            SweepPoint(
                alpha=config.alpha,
                num_heads=config.num_heads,
                num_neighbors=config.num_neighbors,
                top_k=config.top_k,
                best_val_mae=state.best_val_mae,
                best_epoch=state.best_epoch,
                metrics={str(h): metrics[h] for h in horizons},
            )
        )
    return SweepReport(horizons=horizons, points=points)


__all__ = ["grid_configs", "run_sweep"]
