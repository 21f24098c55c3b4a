"""Model and run configuration models."""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.variants import AdjacencyVariant

# Hyperparameters at full scale (hundreds to thousands of nodes).
FULL_SCALE_EMBED_DIM = 100
FULL_SCALE_NUM_NEIGHBORS = 100
FULL_SCALE_TOP_K = 80


class ModelConfig(BaseModel):
    """Hyperparameters of one forecaster."""

    num_nodes: int = Field(..., ge=2, description="Number of series N")
    num_neighbors: int = Field(
        default=FULL_SCALE_NUM_NEIGHBORS, ge=1, description="Significant neighbor set size M"
    )
    top_k: int = Field(default=FULL_SCALE_TOP_K, ge=1, description="Frequency-ranked slots K (< M)")
    embed_dim: int = Field(default=FULL_SCALE_EMBED_DIM, ge=1, description="Node embedding width d")
    hidden_dim: int = Field(default=64, ge=1, description="GRU hidden width D")
    num_heads: int = Field(default=8, ge=1, description="Attention heads P")
    diffusion_depth: int = Field(default=3, ge=1, description="Diffusion terms J")
    history: int = Field(default=12, ge=2, description="History steps h")
    horizon: int = Field(default=12, ge=1, description="Forecast steps f")
    input_dim: int = Field(default=2, ge=1, description="Input channels (value + covariates)")
    output_dim: int = Field(default=1, ge=1, description="Predicted channels")
    alpha: float = Field(default=2.0, ge=1.0, le=2.5, description="Entmax alpha")
    convergence_iteration: Optional[int] = Field(
        default=None,
        ge=0,
        description="Iteration r after which the neighbor set is frozen (default: 80% of planned)",
    )
    batch_size: int = Field(default=64, ge=1, description="Mini-batch size")
    learning_rate: float = Field(default=0.003, gt=0, description="Adam learning rate")
    max_epochs: int = Field(default=100, ge=1, description="Epoch budget")
    patience: int = Field(default=15, ge=1, description="Early-stopping patience in epochs")
    lr_patience: int = Field(default=5, ge=1, description="Plateau epochs before halving lr")
    clip_norm: Optional[float] = Field(default=5.0, gt=0, description="Global gradient norm cap")
    stride: int = Field(default=1, ge=1, description="Window stride")
    day_of_week: bool = Field(default=False, description="Add a day-of-week covariate")
    variant: AdjacencyVariant = Field(
        default=AdjacencyVariant.SPARSE_ATTENTION, description="Adjacency variant"
    )
    dense_mode: bool = Field(
        default=False, description="Diffuse with a full N x N matrix (requires M == N)"
    )
    seed: int = Field(default=0, ge=0, description="Seed for every random draw")

    @model_validator(mode="after")
    def _check_sizes(self) -> "ModelConfig":
        if self.num_neighbors > self.num_nodes:
            raise ValueError(
                f"num_neighbors (M={self.num_neighbors}) must not exceed num_nodes (N={self.num_nodes})"
            )
        if self.top_k >= self.num_neighbors:
            raise ValueError(f"top_k (K={self.top_k}) must be smaller than M={self.num_neighbors}")
        if self.dense_mode and self.num_neighbors != self.num_nodes:
            raise ValueError("dense_mode requires num_neighbors == num_nodes")
        if self.output_dim > self.input_dim:
            raise ValueError("output_dim cannot exceed input_dim")
        return self

    @property
    def covariate_dim(self) -> int:
        return self.input_dim - self.output_dim

    @property
    def uses_full_index(self) -> bool:
        """Whether every node is a neighbor (no sampling)."""
        return self.num_neighbors == self.num_nodes

    @classmethod
    def desk_scale(cls, num_nodes: int, **overrides: Any) -> "ModelConfig":
        """Shrink the neighbor sizes and embedding width for small graphs.

        M keeps roughly 30% of the nodes (capped at the full-scale 100), K
        keeps the full-scale 80% of M and d follows M.
        """
        num_neighbors = overrides.pop("num_neighbors", None) or min(
            FULL_SCALE_NUM_NEIGHBORS, max(2, round(0.3 * num_nodes))
        )
        top_k = overrides.pop("top_k", None) or max(
            1, min(num_neighbors - 1, round(0.8 * num_neighbors))
        )
        embed_dim = overrides.pop("embed_dim", None) or min(
            FULL_SCALE_EMBED_DIM, max(8, num_neighbors)
        )
        return cls(
            num_nodes=num_nodes,
            num_neighbors=num_neighbors,
            top_k=top_k,
            embed_dim=embed_dim,
            **{key: value for key, value in overrides.items() if value is not None},
        )


class RunConfig(BaseModel):
    """Flat command-line configuration; keys mirror the CLI flags.

    Unknown keys are rejected so a misspelled config-file entry is an error.
    """

    model_config = ConfigDict(extra="forbid")

    data: Optional[str] = Field(default=None, description="Dataset CSV path")
    checkpoint: Optional[str] = Field(default=None, description="Checkpoint path")
    out: Optional[str] = Field(default=None, description="Output path or directory")
    epochs: Optional[int] = Field(default=None, ge=1, description="Epoch budget")
    seed: int = Field(default=0, ge=0, description="Seed for every random draw")
    alpha: Optional[float] = Field(default=None, ge=1.0, le=2.5)
    M: Optional[int] = Field(default=None, ge=1)
    K: Optional[int] = Field(default=None, ge=1)
    J: Optional[int] = Field(default=None, ge=1)
    heads: Optional[int] = Field(default=None, ge=1)
    hidden: Optional[int] = Field(default=None, ge=1)
    embed_dim: Optional[int] = Field(default=None, ge=1)
    history: Optional[int] = Field(default=None, ge=2)
    horizon: Optional[int] = Field(default=None, ge=1)
    batch_size: Optional[int] = Field(default=None, ge=1)
    lr: Optional[float] = Field(default=None, gt=0)
    r: Optional[int] = Field(default=None, ge=0)
    stride: Optional[int] = Field(default=None, ge=1)
    day_of_week: bool = False
    variant: Optional[AdjacencyVariant] = None
    horizons: List[int] = Field(default_factory=lambda: [3, 6, 12])
    baseline: Optional[str] = Field(default=None, description="Extra baseline to report")
    bench_N: List[int] = Field(default_factory=lambda: [500, 1000, 2000])
    dense_mode: bool = False
    repetitions: int = Field(default=3, ge=1)
    topology: Optional[str] = Field(
        default=None, description="Sidecar JSON whose adjacency feeds the topology variant"
    )
    sweep_alpha: Optional[List[float]] = Field(default=None, description="Alpha values to sweep")
    sweep_heads: Optional[List[int]] = Field(default=None, description="Head counts to sweep")
    sweep_M: Optional[List[int]] = Field(default=None, description="Neighbor set sizes to sweep")

    def to_model_config(self, num_nodes: int) -> ModelConfig:
        """Build the model configuration for a dataset with ``num_nodes`` series."""
        input_dim = 3 if self.day_of_week else 2
        num_neighbors, top_k = self.M, self.K
        if self.dense_mode:
            num_neighbors = num_nodes
            top_k = self.K or num_nodes - 1
        return ModelConfig.desk_scale(
            num_nodes,
            num_neighbors=num_neighbors,
            top_k=top_k,
            dense_mode=self.dense_mode,
            embed_dim=self.embed_dim,
            diffusion_depth=self.J,
            num_heads=self.heads,
            hidden_dim=self.hidden,
            history=self.history,
            horizon=self.horizon,
            alpha=self.alpha,
            convergence_iteration=self.r,
            batch_size=self.batch_size,
            learning_rate=self.lr,
            max_epochs=self.epochs,
            stride=self.stride,
            variant=self.variant,
            input_dim=input_dim,
            day_of_week=self.day_of_week,
            seed=self.seed,
        )

    @classmethod
    def merge(cls, file_values: Dict[str, Any], flag_values: Dict[str, Any]) -> "RunConfig":
        """Defaults < config file < flags (flags set to None are ignored)."""
        merged = dict(file_values)
        merged.update({key: value for key, value in flag_values.items() if value is not None})
        return cls(**merged)


__all__ = ["ModelConfig", "RunConfig"]
