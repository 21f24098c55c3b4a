"""Fast graph convolution over the slim adjacency and the diffusion GRU cell."""

import logging
from typing import Callable, List, Sequence, Tuple

import numpy as np

from app.core import tensor as T
from app.core.tensor import Parameter, Tensor
from app.services.graph_learning import SlimAdjacency

logger = logging.getLogger(__name__)

# batch x N x D
HiddenState = Tensor
GraphConv = Callable[[SlimAdjacency, Tensor, "DiffusionWeights"], Tensor]


class DiffusionWeights:
    """J matrices ``W_0 .. W_{J-1}``, one per diffusion step."""

    def __init__(self, weights: Sequence[Parameter]):
        if not weights:
            raise ValueError("Diffusion depth J must be at least 1")
        shape = weights[0].shape
        for weight in weights:
            if weight.ndim != 2 or weight.shape != shape:
                raise ValueError(
                    f"Diffusion weights must share one 2-D shape, got {weight.shape} and {shape}"
                )
        self.weights = list(weights)

    @classmethod
    def create(
        cls, depth: int, in_dim: int, out_dim: int, rng: np.random.Generator, prefix: str
    ) -> "DiffusionWeights":
        bound = 1.0 / np.sqrt(in_dim)
        return cls(
            [
                Parameter(rng.uniform(-bound, bound, size=(in_dim, out_dim)), id=f"{prefix}.w{j}")
                for j in range(depth)
            ]
        )

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[0].shape[1]

    def parameters(self) -> List[Parameter]:
        return list(self.weights)


class GruWeights:
    """Gate diffusions, gate biases and the output projection of the cell."""

    def __init__(
        self,
        reset: DiffusionWeights,
        update: DiffusionWeights,
        candidate: DiffusionWeights,
        b_reset: Parameter,
        b_update: Parameter,
        b_candidate: Parameter,
        projection: Parameter,
    ):
        hidden = projection.shape[0]
        for name, block in (("reset", reset), ("update", update), ("candidate", candidate)):
            if block.out_dim != hidden:
                raise ValueError(
                    f"{name} gate width {block.out_dim} does not match hidden width {hidden}"
                )
            if block.in_dim != reset.in_dim:
                raise ValueError(f"{name} gate input width {block.in_dim} != {reset.in_dim}")
        for bias in (b_reset, b_update, b_candidate):
            if bias.shape != (hidden,):
                raise ValueError(f"Gate bias must have shape {(hidden,)}, got {bias.shape}")
        self.reset = reset
        self.update = update
        self.candidate = candidate
        self.b_reset = b_reset
        self.b_update = b_update
        self.b_candidate = b_candidate
        self.projection = projection

    @classmethod
    def create(
        cls,
        input_dim: int,
        hidden_dim: int,
        output_dim: int,
        depth: int,
        rng: np.random.Generator,
        prefix: str = "cell",
    ) -> "GruWeights":
        width = input_dim + hidden_dim
        bound = 1.0 / np.sqrt(hidden_dim)
        return cls(
            reset=DiffusionWeights.create(depth, width, hidden_dim, rng, f"{prefix}.reset"),
            update=DiffusionWeights.create(depth, width, hidden_dim, rng, f"{prefix}.update"),
            candidate=DiffusionWeights.create(depth, width, hidden_dim, rng, f"{prefix}.candidate"),
            b_reset=Parameter(np.zeros(hidden_dim), id=f"{prefix}.b_reset"),
            b_update=Parameter(np.zeros(hidden_dim), id=f"{prefix}.b_update"),
            b_candidate=Parameter(np.zeros(hidden_dim), id=f"{prefix}.b_candidate"),
            projection=Parameter(
                rng.uniform(-bound, bound, size=(hidden_dim, output_dim)), id=f"{prefix}.projection"
            ),
        )

    @property
    def hidden_dim(self) -> int:
        return self.projection.shape[0]

    @property
    def input_dim(self) -> int:
        return self.reset.in_dim - self.hidden_dim

    @property
    def output_dim(self) -> int:
        return self.projection.shape[1]

    def parameters(self) -> List[Parameter]:
        return [
            *self.reset.parameters(),
            *self.update.parameters(),
            *self.candidate.parameters(),
            self.b_reset,
            self.b_update,
            self.b_candidate,
            self.projection,
        ]


def zero_state(batch_size: int, num_nodes: int, hidden_dim: int) -> HiddenState:
    return Tensor(np.zeros((batch_size, num_nodes, hidden_dim)))


def _check_inputs(adjacency: SlimAdjacency, x: Tensor, weights: DiffusionWeights) -> None:
    if x.ndim != 3:
        raise ValueError(f"Graph convolution input must be batch x N x c, got shape {x.shape}")
    if x.shape[1] != adjacency.num_nodes:
        raise ValueError(
            f"Input has {x.shape[1]} nodes but the adjacency has {adjacency.num_nodes}"
        )
    if x.shape[2] != weights.in_dim:
        raise ValueError(f"Input width {x.shape[2]} does not match weight rows {weights.in_dim}")
    if not np.all(np.isfinite(adjacency.values.data)):
        raise ValueError("Adjacency contains non-finite values")
    if not np.all(np.isfinite(x.data)):
        raise ValueError("Graph convolution input contains non-finite values")
    adjacency.index_set.validate_for(adjacency.num_nodes)


def _diffuse(
    x: Tensor,
    weights: DiffusionWeights,
    adjacency: SlimAdjacency,
    step: Callable[[Tensor], Tensor],
) -> Tensor:
    """``sum_j H_j W_j`` with ``H_0 = x`` and ``H_j = scale * step(H_{j-1})``."""
    shape = x.shape
    scale = T.broadcast_to(adjacency.degree_scale(), shape)
    state = x
    out = T.matmul(state, weights.weights[0])
    for weight in weights.weights[1:]:
        state = T.hadamard(T.add(step(state), state), scale)
        out = T.add(out, T.matmul(state, weight))
    return out


def fast_graph_conv(adjacency: SlimAdjacency, x: Tensor, weights: DiffusionWeights) -> Tensor:
    """Diffuse ``x`` over the slim adjacency in O(N M) per step.

    Each step gathers the M neighbor rows of the current state and mixes
    them with ``A_s``; no N x N object is formed.

    Args:
        adjacency: N x M slim adjacency with its index set
        x: batch x N x c_in
        weights: J matrices of shape c_in x c_out

    Returns:
        batch x N x c_out

    Raises:
        ValueError: On out-of-range ids, non-finite values or shape mismatches
    """
    _check_inputs(adjacency, x, weights)
    ids = adjacency.index_set.ids

    def step(state: Tensor) -> Tensor:
        return T.matmul(adjacency.values, T.gather(state, ids, axis=1))

    return _diffuse(x, weights, adjacency, step)


def scatter_dense(adjacency: SlimAdjacency) -> Tensor:
    """Place the M columns of ``A_s`` at their node ids in a full N x N matrix."""
    num_nodes = adjacency.num_nodes
    ids = adjacency.index_set.ids
    selector = np.zeros((len(ids), num_nodes))
    selector[np.arange(len(ids)), ids] = 1.0
    return T.matmul(adjacency.values, Tensor(selector))


def dense_graph_conv(adjacency: SlimAdjacency, x: Tensor, weights: DiffusionWeights) -> Tensor:
    """Same diffusion as :func:`fast_graph_conv` through a materialised N x N matrix."""
    _check_inputs(adjacency, x, weights)
    dense = scatter_dense(adjacency)

    def step(state: Tensor) -> Tensor:
        return T.matmul(dense, state)

    return _diffuse(x, weights, adjacency, step)


def _gate_bias(bias: Parameter, shape: Tuple[int, ...]) -> Tensor:
    return T.broadcast_to(bias, shape)


def one_step_fast_gconv(
    adjacency: SlimAdjacency,
    x_t: Tensor,
    h_prev: HiddenState,
    weights: GruWeights,
    conv: GraphConv = fast_graph_conv,
) -> Tuple[HiddenState, Tensor]:
    """One GRU step whose gate transforms are graph diffusions.

    Returns:
        (H_t, X_hat) with shapes batch x N x D and batch x N x C_out

    Raises:
        ValueError: If input or state widths disagree with ``weights``
    """
    if x_t.ndim != 3 or h_prev.ndim != 3:
        raise ValueError(f"Cell inputs must be 3-D, got {x_t.shape} and {h_prev.shape}")
    if x_t.shape[:2] != h_prev.shape[:2]:
        raise ValueError(f"Input {x_t.shape} and state {h_prev.shape} disagree on batch x N")
    if x_t.shape[2] != weights.input_dim or h_prev.shape[2] != weights.hidden_dim:
        raise ValueError(
            f"Cell expects input width {weights.input_dim} and hidden width "
            f"{weights.hidden_dim}, got {x_t.shape[2]} and {h_prev.shape[2]}"
        )

    state_shape = h_prev.shape
    joint = T.concat([x_t, h_prev], axis=2)
    reset = T.sigmoid(
        T.add(conv(adjacency, joint, weights.reset), _gate_bias(weights.b_reset, state_shape))
    )
    update = T.sigmoid(
        T.add(conv(adjacency, joint, weights.update), _gate_bias(weights.b_update, state_shape))
    )
    gated = T.concat([x_t, T.hadamard(reset, h_prev)], axis=2)
    candidate = T.tanh(
        T.add(
            conv(adjacency, gated, weights.candidate),
            _gate_bias(weights.b_candidate, state_shape),
        )
    )
    keep = T.shift(T.scale(update, -1.0), 1.0)
    h_t = T.add(T.hadamard(update, h_prev), T.hadamard(keep, candidate))
    return h_t, T.matmul(h_t, weights.projection)


__all__ = [
    "HiddenState",
    "DiffusionWeights",
    "GruWeights",
    "zero_state",
    "fast_graph_conv",
    "dense_graph_conv",
    "scatter_dense",
    "one_step_fast_gconv",
]
