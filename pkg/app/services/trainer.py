"""Training loop: neighbor refresh gate, Adam updates, plateau schedule, early stopping."""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from app.core.errors import TrainingDivergedError
from app.core.tensor import Tape
from app.models.metrics import EpochLog
from app.models.model_config import ModelConfig
from app.services.evaluation import masked_mae
from app.services.forecaster import Forecaster, mae_loss
from app.services.optimizer import Adam
from app.services.windows import ForecastBatch, PreparedData
from app.utils.opik_wrapper import log_run_metrics, tracked
from app.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

_SHUFFLE_KEY = 5
CONVERGENCE_FRACTION = 0.8


@dataclass
class TrainState:
    """Model, optimizer and bookkeeping after (or during) training."""

    model: Forecaster
    optimizer: Adam
    iteration: int = 0
    convergence_iteration: int = 0
    best_val_mae: float = math.inf
    best_epoch: int = 0
    stopped_early: bool = False
    history: List[EpochLog] = field(default_factory=list)


def planned_iterations(num_windows: int, config: ModelConfig) -> int:
    return config.max_epochs * math.ceil(num_windows / config.batch_size)


def resolve_convergence_iteration(num_windows: int, config: ModelConfig) -> int:
    """``r``: explicit value, else 80% of the planned iterations."""
    if config.convergence_iteration is not None:
        return config.convergence_iteration
    return int(CONVERGENCE_FRACTION * planned_iterations(num_windows, config))


def train_step(state: TrainState, batch: ForecastBatch) -> Optional[float]:
    """One iteration: optional neighbor refresh, forward, backward, Adam.

    Batches without any observed target are skipped and return None.
    """
    if not np.any(batch.mask):
        return None
    model = state.model
    if model.samples_neighbors and state.iteration < state.convergence_iteration:
        model.refresh_neighbors(state.iteration)

    with Tape() as tape:
        pred = model.forward(batch)
        loss = mae_loss(pred, batch.targets, batch.mask)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingDivergedError(
                f"loss became {value} at iteration {state.iteration}; "
                f"last gradient norm {state.optimizer.grad_norm():.4g}"
            )
        tape.backward(loss)

    state.optimizer.step()
    state.iteration += 1
    return value


def validation_mae(model: Forecaster, windows: ForecastBatch) -> float:
    return masked_mae(model.predict(windows), windows.targets, windows.mask)


@tracked("train")
def train(
    data: PreparedData,
    config: ModelConfig,
    model: Optional[Forecaster] = None,
    on_epoch: Optional[Callable[[EpochLog], None]] = None,
    topology: Optional[np.ndarray] = None,
) -> TrainState:
    """Fit a forecaster on ``data.train``, selecting on ``data.val``.

    Neighbors are re-sampled before every iteration below ``r`` and frozen
    afterwards. The learning rate halves after ``lr_patience`` epochs without
    a validation improvement; training stops after ``patience`` such epochs
    and the best-validation snapshot is restored. ``topology`` feeds the
    topology variant when no ``model`` is given.

    Raises:
        TrainingDivergedError: If the training loss becomes non-finite
    """
    model = model or Forecaster.create(config, data.scaler, topology)
    optimizer = Adam(model.parameters(), lr=config.learning_rate, clip_norm=config.clip_norm)
    state = TrainState(
        model=model,
        optimizer=optimizer,
        convergence_iteration=resolve_convergence_iteration(len(data.train), config),
    )
    logger.info(
        "Training %d windows for up to %d epochs (r=%d, variant=%s)",
        len(data.train),
        config.max_epochs,
        state.convergence_iteration,
        config.variant.value,
    )

    snapshot = model.snapshot()
    stale_epochs = 0
    plateau_epochs = 0
    frozen_logged = False
    for epoch in range(1, config.max_epochs + 1):
        rng = np.random.default_rng(derive_seed(config.seed, _SHUFFLE_KEY, epoch))
        losses = [
            loss
            for loss in (
                train_step(state, batch) for batch in data.train.batches(config.batch_size, rng)
            )
            if loss is not None
        ]
        val_mae = validation_mae(model, data.val)
        entry = EpochLog(
            epoch=epoch,
            iter=state.iteration,
            train_loss=float(np.mean(losses)) if losses else float("nan"),
            val_mae=val_mae,
        )
        state.history.append(entry)
        logger.info(
            "epoch %d iter %d train_loss=%.6f val_mae=%.6f lr=%.2e",
            epoch,
            state.iteration,
            entry.train_loss,
            val_mae,
            optimizer.lr,
        )
        if on_epoch is not None:
            on_epoch(entry)
        if (
            model.samples_neighbors
            and not frozen_logged
            and state.iteration >= state.convergence_iteration
        ):
            logger.info("Neighbor set frozen at iteration %d", state.convergence_iteration)
            frozen_logged = True

        if val_mae < state.best_val_mae:
            state.best_val_mae = val_mae
            state.best_epoch = epoch
            snapshot = model.snapshot()
            stale_epochs = 0
            plateau_epochs = 0
            continue

        stale_epochs += 1
        plateau_epochs += 1
        if plateau_epochs >= config.lr_patience:
            optimizer.lr /= 2.0
            plateau_epochs = 0
            logger.info("Validation plateau: learning rate halved to %.2e", optimizer.lr)
        if stale_epochs >= config.patience:
            state.stopped_early = True
            logger.info("Early stopping after epoch %d (best epoch %d)", epoch, state.best_epoch)
            break

    model.restore(snapshot)
    log_run_metrics(
        name="train",
        metrics={"best_val_mae": state.best_val_mae, "iterations": float(state.iteration)},
        metadata={"best_epoch": state.best_epoch},
    )
    return state


__all__ = [
    "TrainState",
    "planned_iterations",
    "resolve_convergence_iteration",
    "train_step",
    "validation_mae",
    "train",
]
