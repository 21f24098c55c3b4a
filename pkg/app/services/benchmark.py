"""Memory and time scaling of the adjacency pipeline and one training step."""

import logging
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.memory import meter
from app.core.tensor import Tape
from app.models.bench_report import BenchPoint, BenchReport, Spread
from app.models.model_config import ModelConfig
from app.services.forecaster import Forecaster, mae_loss
from app.services.windows import ForecastBatch
from app.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

_DATA_KEY = 6

# Small widths keep the benchmark about the N and M dependence.
BENCH_EMBED_DIM = 8
BENCH_HIDDEN_DIM = 8
BENCH_HEADS = 2
BENCH_DEPTH = 2
BENCH_BATCH = 2


def bench_config(num_nodes: int, num_neighbors: int, dense_mode: bool, seed: int) -> ModelConfig:
    size = num_nodes if dense_mode else min(num_neighbors, num_nodes - 1)
    return ModelConfig(
        num_nodes=num_nodes,
        num_neighbors=size,
        top_k=max(1, min(size - 1, int(0.8 * size))),
        embed_dim=BENCH_EMBED_DIM,
        hidden_dim=BENCH_HIDDEN_DIM,
        num_heads=BENCH_HEADS,
        diffusion_depth=BENCH_DEPTH,
        history=2,
        horizon=1,
        batch_size=BENCH_BATCH,
        dense_mode=dense_mode,
        seed=seed,
    )


def random_batch(config: ModelConfig, seed: int) -> ForecastBatch:
    rng = np.random.default_rng(seed)
    shape = (config.batch_size, config.history, config.num_nodes, config.input_dim)
    target_shape = (config.batch_size, config.horizon, config.num_nodes)
    return ForecastBatch(
        inputs=rng.standard_normal(shape),
        targets=rng.standard_normal(target_shape + (config.output_dim,)),
        mask=np.ones(target_shape, dtype=bool),
        future_covariates=rng.uniform(
            0.0, 1.0, size=target_shape + (config.covariate_dim,)
        ),
        last_value=rng.standard_normal((config.batch_size, config.num_nodes, 1)),
        target_times=np.zeros((config.batch_size, config.horizon), dtype=np.int64),
    )


def measure_step(model: Forecaster, batch: ForecastBatch) -> Tuple[int, float]:
    """Peak tracked bytes and wall seconds of adjacency + forward + backward."""
    started = time.perf_counter()
    with meter.track():
        with Tape() as tape:
            adjacency = model.build_adjacency()
            pred = model.forward(batch, adjacency)
            loss = mae_loss(pred, batch.targets, batch.mask)
            tape.backward(loss)
        peak = meter.peak_bytes
    elapsed = time.perf_counter() - started
    for param in model.parameters():
        param.zero_grad()
    return peak, elapsed


def _spread(values: Sequence[float]) -> Spread:
    return Spread(
        min=float(np.min(values)), median=float(np.median(values)), max=float(np.max(values))
    )


def _slope(sizes: Sequence[int], values: Sequence[float]) -> Optional[float]:
    if len(sizes) < 2 or min(values) <= 0:
        return None
    return float(np.polyfit(np.log(sizes), np.log(values), 1)[0])


def run_benchmark(
    node_counts: Sequence[int],
    num_neighbors: int = 100,
    repetitions: int = 3,
    dense_mode: bool = False,
    seed: int = 0,
) -> BenchReport:
    """Measure each N ``repetitions`` times and fit log-log slopes on the medians."""
    if repetitions < 1:
        raise ValueError(f"repetitions must be positive, got {repetitions}")
    points: List[BenchPoint] = []
    for num_nodes in node_counts:
        config = bench_config(num_nodes, num_neighbors, dense_mode, seed)
        model = Forecaster.create(config)
        batch = random_batch(config, derive_seed(seed, _DATA_KEY, num_nodes))
        peaks, times = [], []
        for _ in range(repetitions):
            peak, elapsed = measure_step(model, batch)
            peaks.append(float(peak))
            times.append(elapsed)
        point = BenchPoint(
            num_nodes=num_nodes,
            num_neighbors=config.num_neighbors,
            peak_bytes=_spread(peaks),
            wall_seconds=_spread(times),
        )
        logger.info(
            "bench N=%d M=%d peak=%.0f bytes time=%.4fs",
            num_nodes,
            config.num_neighbors,
            point.peak_bytes.median,
            point.wall_seconds.median,
        )
        points.append(point)

    sizes = [p.num_nodes for p in points]
    return BenchReport(
        dense_mode=dense_mode,
        repetitions=repetitions,
        points=points,
        memory_slope=_slope(sizes, [p.peak_bytes.median for p in points]),
        time_slope=_slope(sizes, [p.wall_seconds.median for p in points]),
    )


__all__ = ["bench_config", "random_batch", "measure_step", "run_benchmark"]
