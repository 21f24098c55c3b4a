"""Encoder-decoder forecaster over a learned slim graph."""

import logging
from typing import Dict, List, Optional

import numpy as np

from app.core import tensor as T
from app.core.tensor import Parameter, Tensor
from app.core.variants import AdjacencyVariant
from app.models.model_config import ModelConfig
from app.services.diffusion import (
    GruWeights,
    HiddenState,
    dense_graph_conv,
    fast_graph_conv,
    one_step_fast_gconv,
    zero_state,
)
from app.services.graph_learning import (
    AttentionWeights,
    CandidateMatrix,
    NodeEmbedding,
    SignificantIndexSet,
    SlimAdjacency,
    check_topology,
    compute_slim_adjacency,
    dense_index_set,
    init_candidates,
    inner_product_adjacency,
    random_index_set,
    sample_significant_neighbors,
    topology_adjacency,
    topology_index_set,
    zero_adjacency,
)
from app.services.windows import ForecastBatch, Scaler
from app.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

# Seed stream keys
_INIT_KEY = 1
_CANDIDATE_KEY = 2
_SAMPLE_KEY = 3
_RANDOM_NEIGHBOR_KEY = 4


class Forecaster:
    """Learned graph, diffusion GRU cell and the current neighbor set."""

    def __init__(
        self,
        config: ModelConfig,
        embedding: NodeEmbedding,
        attention: AttentionWeights,
        cell: GruWeights,
        index_set: SignificantIndexSet,
        scaler: Scaler,
        candidates: Optional[CandidateMatrix] = None,
        topology: Optional[np.ndarray] = None,
    ):
        if embedding.num_nodes != config.num_nodes:
            raise ValueError(
                f"Embedding has {embedding.num_nodes} rows, config has N={config.num_nodes}"
            )
        if len(index_set) != config.num_neighbors:
            raise ValueError(
                f"Index set has {len(index_set)} ids, config has M={config.num_neighbors}"
            )
        index_set.validate_for(config.num_nodes)
        self.config = config
        self.embedding = embedding
        self.attention = attention
        self.cell = cell
        self.index_set = index_set
        self.scaler = scaler
        self.candidates = candidates
        self.topology = topology
        self.conv = dense_graph_conv if config.dense_mode else fast_graph_conv

    @classmethod
    def create(
        cls,
        config: ModelConfig,
        scaler: Optional[Scaler] = None,
        topology: Optional[np.ndarray] = None,
    ) -> "Forecaster":
        """Initialise every parameter and the first neighbor set from ``config.seed``.

        ``topology`` is the fixed N x N matrix read by the topology variant and
        ignored by the others.
        """
        rng = np.random.default_rng(derive_seed(config.seed, _INIT_KEY))
        embedding = NodeEmbedding.create(config.num_nodes, config.embed_dim, rng)
        attention = AttentionWeights.create(config.num_heads, config.embed_dim, rng)
        cell = GruWeights.create(
            input_dim=config.input_dim,
            hidden_dim=config.hidden_dim,
            output_dim=config.output_dim,
            depth=config.diffusion_depth,
            rng=rng,
        )

        candidates = None
        if config.variant == AdjacencyVariant.TOPOLOGY:
            if topology is None:
                raise ValueError("The topology variant needs a fixed N x N adjacency")
            topology = check_topology(topology, config.num_nodes)
        else:
            topology = None

        if config.uses_full_index:
            index_set = dense_index_set(config.num_nodes)
        elif topology is not None:
            index_set = topology_index_set(topology, config.num_neighbors)
        elif config.variant in (AdjacencyVariant.SPARSE_ATTENTION, AdjacencyVariant.INNER_PRODUCT):
            candidates = init_candidates(
                config.num_nodes, config.num_neighbors, derive_seed(config.seed, _CANDIDATE_KEY)
            )
            index_set = sample_significant_neighbors(
                embedding, candidates, config.top_k, derive_seed(config.seed, _SAMPLE_KEY, 0)
            )
        else:
            index_set = random_index_set(
                config.num_nodes,
                config.num_neighbors,
                derive_seed(config.seed, _RANDOM_NEIGHBOR_KEY),
            )
        logger.debug(
            "Created forecaster N=%d M=%d variant=%s dense=%s",
            config.num_nodes,
            config.num_neighbors,
            config.variant.value,
            config.dense_mode,
        )
        return cls(
            config, embedding, attention, cell, index_set, scaler or Scaler(), candidates, topology
        )

    @property
    def samples_neighbors(self) -> bool:
        """Whether the neighbor set is refreshed from the embedding during training."""
        return self.candidates is not None

    def parameters(self) -> List[Parameter]:
        params: List[Parameter] = []
        if self.config.variant in (AdjacencyVariant.SPARSE_ATTENTION, AdjacencyVariant.RANDOM_NEIGHBORS):
            params.extend(self.embedding.parameters())
            params.extend(self.attention.parameters())
        elif self.config.variant == AdjacencyVariant.INNER_PRODUCT:
            params.extend(self.embedding.parameters())
        params.extend(self.cell.parameters())
        return params

    def named_parameters(self) -> Dict[str, Parameter]:
        """Every parameter by id, used or not by the current variant."""
        everything = [
            *self.embedding.parameters(),
            *self.attention.parameters(),
            *self.cell.parameters(),
        ]
        return {param.id: param for param in everything}

    def refresh_neighbors(self, iteration: int) -> SignificantIndexSet:
        """Re-run neighbor sampling against the current embedding."""
        if not self.samples_neighbors:
            return self.index_set
        self.index_set = sample_significant_neighbors(
            self.embedding,
            self.candidates,
            self.config.top_k,
            derive_seed(self.config.seed, _SAMPLE_KEY, iteration),
        )
        return self.index_set

    def build_adjacency(self) -> SlimAdjacency:
        variant = self.config.variant
        if variant == AdjacencyVariant.NO_GRAPH:
            return zero_adjacency(self.config.num_nodes, self.index_set)
        if variant == AdjacencyVariant.TOPOLOGY:
            return topology_adjacency(self.topology, self.index_set)
        if variant == AdjacencyVariant.INNER_PRODUCT:
            return inner_product_adjacency(self.embedding, self.index_set)
        return compute_slim_adjacency(
            self.embedding, self.index_set, self.attention, self.config.alpha
        )

    def _check_batch(self, batch: ForecastBatch) -> None:
        if batch.inputs.ndim != 4:
            raise ValueError(f"Batch inputs must be B x h x N x C, got {batch.inputs.shape}")
        _, history, num_nodes, channels = batch.inputs.shape
        if num_nodes != self.config.num_nodes or channels != self.config.input_dim:
            raise ValueError(
                f"Batch has N={num_nodes}, C={channels}; model expects "
                f"N={self.config.num_nodes}, C={self.config.input_dim}"
            )
        if history != self.config.history:
            raise ValueError(f"Batch history {history} != model history {self.config.history}")

    def encode(self, batch: ForecastBatch, adjacency: SlimAdjacency) -> HiddenState:
        """Run the cell over the first h - 1 history steps from a zero state."""
        self._check_batch(batch)
        state = zero_state(len(batch), self.config.num_nodes, self.config.hidden_dim)
        for step in range(self.config.history - 1):
            state, _ = one_step_fast_gconv(
                adjacency, Tensor(batch.inputs[:, step]), state, self.cell, conv=self.conv
            )
        return state

    def decode(
        self,
        state: HiddenState,
        x_t0: Tensor,
        future_covariates: np.ndarray,
        adjacency: SlimAdjacency,
        horizon: Optional[int] = None,
    ) -> Tensor:
        """Roll the cell forward, feeding each prediction back as the next input.

        Returns:
            Scaled predictions, B x f x N x C_out
        """
        horizon = horizon or self.config.horizon
        batch_size, num_nodes, _ = state.shape
        x = x_t0
        predictions = []
        for step in range(horizon):
            state, prediction = one_step_fast_gconv(adjacency, x, state, self.cell, conv=self.conv)
            predictions.append(
                T.reshape(prediction, (batch_size, 1, num_nodes, self.config.output_dim))
            )
            if step + 1 < horizon:
                parts = [prediction]
                if self.config.covariate_dim:
                    parts.append(Tensor(future_covariates[:, step]))
                x = T.concat(parts, axis=2)
        return T.concat(predictions, axis=1)

    def forward(self, batch: ForecastBatch, adjacency: Optional[SlimAdjacency] = None) -> Tensor:
        """Predictions in original units, recorded on the active tape."""
        adjacency = adjacency or self.build_adjacency()
        state = self.encode(batch, adjacency)
        x_t0 = Tensor(batch.inputs[:, -1])
        scaled = self.decode(state, x_t0, batch.future_covariates, adjacency)
        return T.shift(T.scale(scaled, self.scaler.std), self.scaler.mean)

    def predict(self, batch: ForecastBatch, batch_size: Optional[int] = None) -> np.ndarray:
        """Forecasts without recording: B x f x N x C_out in original units."""
        batch_size = batch_size or self.config.batch_size
        adjacency = self.build_adjacency()
        parts = [self.forward(chunk, adjacency).numpy() for chunk in batch.batches(batch_size)]
        return np.concatenate(parts, axis=0)

    def snapshot(self) -> Dict[str, object]:
        """Copies of the learned state, for restoring the best epoch."""
        return {
            "params": {pid: p.data.copy() for pid, p in self.named_parameters().items()},
            "index_set": self.index_set,
            "candidates": None if self.candidates is None else self.candidates.ids.copy(),
        }

    def restore(self, snapshot: Dict[str, object]) -> None:
        params = self.named_parameters()
        for pid, values in snapshot["params"].items():
            params[pid].data[...] = values
        self.index_set = snapshot["index_set"]
        if snapshot["candidates"] is not None:
            self.candidates.ids = snapshot["candidates"].copy()


def mae_loss(pred: Tensor, target: np.ndarray, mask: np.ndarray) -> Tensor:
    """Masked mean absolute error: ``sum(mask * |target - pred|) / sum(mask)``.

    ``mask`` may match ``target`` or drop its trailing channel axis.

    Raises:
        ValueError: On shape mismatch or when the mask selects nothing
    """
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"mae_loss: pred {pred.shape} and target {target.shape} differ")
    if mask.shape != target.shape:
        if mask.shape != target.shape[:-1]:
            raise ValueError(f"mae_loss: mask {mask.shape} does not fit target {target.shape}")
        mask = np.broadcast_to(mask[..., None], target.shape)
    total = mask.sum()
    if total == 0:
        raise ValueError("mae_loss: mask selects no positions")
    safe_target = Tensor(np.where(mask > 0, target, 0.0))
    errors = T.hadamard(T.absolute(T.sub(safe_target, pred)), Tensor(mask))
    return T.scale(T.reduce_sum(errors), 1.0 / total)


__all__ = ["Forecaster", "mae_loss"]
