"""Synthetic series driven by a planted hub-restricted diffusion."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.services.windows import TimeSeriesDataset

logger = logging.getLogger(__name__)

DEFAULT_INTERVAL = 300
DEFAULT_PERIOD = 288


@dataclass
class SyntheticDataset:
    dataset: TimeSeriesDataset
    adjacency: np.ndarray
    hubs: np.ndarray
    coupling: float
    seasonal_amplitude: float
    period: int
    phases: np.ndarray
    level: float

    def seasonal(self, step: np.ndarray) -> np.ndarray:
        """Seasonal drive at integer steps: len(step) x N."""
        step = np.asarray(step, dtype=np.float64)[:, None]
        return self.seasonal_amplitude * np.sin(2.0 * np.pi * step / self.period + self.phases)

    def one_step_forecast(self) -> np.ndarray:
        """Noise-free prediction of steps 1..T-1 from the true dynamics: (T-1) x N."""
        deviation = self.dataset.values - self.level
        steps = np.arange(self.dataset.num_steps - 1)
        drift = self.coupling * deviation[:-1] @ self.adjacency.T + self.seasonal(steps)
        return self.level + drift


def hub_adjacency(
    num_nodes: int, hubs: np.ndarray, rng: np.random.Generator, fan_in: int = 3
) -> np.ndarray:
    """Row-stochastic N x N matrix whose nonzero columns are ``hubs``.

    Every row draws ``fan_in`` hubs with weights in [0.5, 1.5], then
    normalises. Each hub is guaranteed at least one incoming row.
    """
    fan_in = min(fan_in, len(hubs))
    adjacency = np.zeros((num_nodes, num_nodes))
    for row in range(num_nodes):
        chosen = rng.choice(hubs, size=fan_in, replace=False)
        adjacency[row, chosen] = rng.uniform(0.5, 1.5, size=fan_in)
    unused = np.flatnonzero(adjacency[:, hubs].sum(axis=0) == 0)
    for position, hub in enumerate(hubs[unused]):
        adjacency[position % num_nodes, hub] = rng.uniform(0.5, 1.5)
    return adjacency / adjacency.sum(axis=1, keepdims=True)


def synth_generate(
    num_nodes: int,
    num_steps: int,
    num_hubs: int,
    seed: int,
    coupling: float = 0.6,
    seasonal_amplitude: float = 0.3,
    noise_std: float = 0.05,
    level: float = 10.0,
    adjacency: Optional[np.ndarray] = None,
    period: int = DEFAULT_PERIOD,
    interval: int = DEFAULT_INTERVAL,
    start: int = 0,
) -> SyntheticDataset:
    """Generate ``x_t = level + y_t`` with
    ``y_{t+1} = coupling * A y_t + amplitude * sin(2 pi t / period + phase) + noise``.

    Args:
        num_nodes: N
        num_steps: T
        num_hubs: Number of hub nodes that every row draws its inflow from (< N)
        seed: Seed for hubs, weights, phases, the initial state and noise
        adjacency: Fixed N x N matrix to use instead of a random hub matrix;
            its hubs are the columns with nonzero entries

    Raises:
        ValueError: If ``num_hubs`` is not in [1, N) or shapes disagree
    """
    if not 1 <= num_hubs < num_nodes:
        raise ValueError(f"num_hubs must satisfy 1 <= M_true < N={num_nodes}, got {num_hubs}")
    if num_steps < 1:
        raise ValueError(f"num_steps must be positive, got {num_steps}")
    rng = np.random.default_rng(seed)

    if adjacency is None:
        hubs = np.sort(rng.choice(num_nodes, size=num_hubs, replace=False))
        adjacency = hub_adjacency(num_nodes, hubs, rng)
    else:
        adjacency = np.asarray(adjacency, dtype=np.float64)
        if adjacency.shape != (num_nodes, num_nodes):
            raise ValueError(f"adjacency must be {(num_nodes, num_nodes)}, got {adjacency.shape}")
        hubs = np.flatnonzero(np.any(adjacency != 0, axis=0))

    phases = rng.uniform(0.0, 2.0 * np.pi, size=num_nodes)
    deviation = np.empty((num_steps, num_nodes))
    deviation[0] = rng.standard_normal(num_nodes)
    for t in range(num_steps - 1):
        seasonal = seasonal_amplitude * np.sin(2.0 * np.pi * t / period + phases)
        noise = noise_std * rng.standard_normal(num_nodes) if noise_std > 0 else 0.0
        deviation[t + 1] = coupling * adjacency @ deviation[t] + seasonal + noise

    timestamps = start + interval * np.arange(num_steps, dtype=np.int64)
    dataset = TimeSeriesDataset(
        values=level + deviation,
        timestamps=timestamps,
        mask=np.ones((num_steps, num_nodes), dtype=bool),
    )
    logger.info(
        "Generated synthetic dataset N=%d T=%d hubs=%d", num_nodes, num_steps, len(hubs)
    )
    return SyntheticDataset(
        dataset=dataset,
        adjacency=adjacency,
        hubs=hubs,
        coupling=coupling,
        seasonal_amplitude=seasonal_amplitude,
        period=period,
        phases=phases,
        level=level,
    )


__all__ = ["SyntheticDataset", "hub_adjacency", "synth_generate"]
