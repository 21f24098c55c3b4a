"""Node embeddings, significant neighbor sampling and the slim adjacency.

Node ids are 0-based. The slim adjacency ``A_s`` has one row per node and one
column per significant neighbor; column ``j`` describes inflow from node
``index_set.ids[j]``.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from app.core import tensor as T
from app.core.entmax import check_alpha
from app.core.tensor import Parameter, Tensor

logger = logging.getLogger(__name__)


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class NodeEmbedding:
    """Learnable N x d node embedding matrix."""

    def __init__(self, weight: Parameter):
        if weight.ndim != 2:
            raise ValueError(f"Node embedding must be N x d, got shape {weight.shape}")
        self.weight = weight

    @classmethod
    def create(cls, num_nodes: int, dim: int, rng: np.random.Generator) -> "NodeEmbedding":
        return cls(Parameter(rng.standard_normal((num_nodes, dim)), id="embedding"))

    @property
    def num_nodes(self) -> int:
        return self.weight.shape[0]

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    def parameters(self) -> List[Parameter]:
        return [self.weight]


@dataclass
class CandidateMatrix:
    """N x M candidate neighbor ids; row ``i`` never contains ``i``.

    Membership is fixed at construction; sampling re-orders rows in place.
    """

    ids: np.ndarray

    def __post_init__(self) -> None:
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.ids.ndim != 2:
            raise ValueError(f"Candidate matrix must be 2-D, got shape {self.ids.shape}")

    @property
    def num_nodes(self) -> int:
        return self.ids.shape[0]

    @property
    def size(self) -> int:
        return self.ids.shape[1]


@dataclass(frozen=True)
class SignificantIndexSet:
    """Ordered list of M distinct node ids shared by every node."""

    ids: np.ndarray

    def __post_init__(self) -> None:
        ids = np.asarray(self.ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size == 0:
            raise ValueError(f"Index set must be a non-empty vector, got shape {ids.shape}")
        if np.unique(ids).size != ids.size:
            raise ValueError("Index set ids must be distinct")
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return int(self.ids.size)

    def validate_for(self, num_nodes: int) -> None:
        """Raises ValueError when an id falls outside ``[0, num_nodes)``."""
        if self.ids.min() < 0 or self.ids.max() >= num_nodes:
            raise ValueError(
                f"Index set ids must lie in [0, {num_nodes}); got range "
                f"[{self.ids.min()}, {self.ids.max()}]"
            )


@dataclass
class SlimAdjacency:
    """N x M nonnegative correlations against ``index_set``."""

    values: Tensor
    index_set: SignificantIndexSet
    _degree_scale: Optional[Tensor] = None

    @property
    def num_nodes(self) -> int:
        return self.values.shape[0]

    def degree_scale(self) -> Tensor:
        """``1 / (row_sum + 1)`` as an (1, N, 1) tensor, computed once."""
        if self._degree_scale is None:
            degree = T.relu(T.reduce_sum(self.values, axis=1))
            inverse = T.reciprocal(T.shift(degree, 1.0))
            self._degree_scale = T.reshape(inverse, (1, self.num_nodes, 1))
        return self._degree_scale


class AttentionHead:
    """Two-layer scorer: tanh hidden layer of width 2d, then 2 outputs."""

    def __init__(self, w1: Parameter, b1: Parameter, w2: Parameter, b2: Parameter):
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2

    @classmethod
    def create(cls, embed_dim: int, rng: np.random.Generator, prefix: str) -> "AttentionHead":
        width = 2 * embed_dim
        return cls(
            w1=Parameter(_uniform(rng, width, (width, width)), id=f"{prefix}.w1"),
            b1=Parameter(np.zeros(width), id=f"{prefix}.b1"),
            w2=Parameter(_uniform(rng, width, (width, 2)), id=f"{prefix}.w2"),
            b2=Parameter(np.zeros(2), id=f"{prefix}.b2"),
        )

    def parameters(self) -> List[Parameter]:
        return [self.w1, self.b1, self.w2, self.b2]

    def __call__(self, pairs: Tensor) -> Tensor:
        rows, cols, width = pairs.shape
        hidden = T.tanh(
            T.add(T.matmul(pairs, self.w1), T.broadcast_to(self.b1, (rows, cols, width)))
        )
        return T.add(T.matmul(hidden, self.w2), T.broadcast_to(self.b2, (rows, cols, 2)))


class AttentionWeights:
    """P attention heads plus the 2P x 1 output projection."""

    def __init__(self, heads: Sequence[AttentionHead], projection: Parameter):
        if not heads:
            raise ValueError("At least one attention head is required")
        if projection.shape != (2 * len(heads), 1):
            raise ValueError(
                f"Projection must be {(2 * len(heads), 1)}, got {projection.shape}"
            )
        self.heads = list(heads)
        self.projection = projection

    @classmethod
    def create(cls, num_heads: int, embed_dim: int, rng: np.random.Generator) -> "AttentionWeights":
        heads = [AttentionHead.create(embed_dim, rng, f"attention.head{p}") for p in range(num_heads)]
        # Nonnegative half of the usual range so the rectifier starts alive.
        bound = 1.0 / np.sqrt(2 * num_heads)
        projection = Parameter(
            rng.uniform(0.0, bound, size=(2 * num_heads, 1)), id="attention.projection"
        )
        return cls(heads, projection)

    @property
    def num_heads(self) -> int:
        return len(self.heads)

    def parameters(self) -> List[Parameter]:
        params = [p for head in self.heads for p in head.parameters()]
        params.append(self.projection)
        return params


def _embedding_values(embedding: Union[NodeEmbedding, np.ndarray]) -> np.ndarray:
    if isinstance(embedding, NodeEmbedding):
        return embedding.weight.data
    return np.asarray(embedding, dtype=np.float64)


def init_candidates(num_nodes: int, size: int, seed: int) -> CandidateMatrix:
    """Build the N x M candidate matrix.

    Every row starts as an independent uniformly random M-subset of the other
    node ids. Counts are then repaired so that every id appears exactly M
    times: while some id ``a`` is over-represented and ``b`` under-represented,
    ``a`` is swapped for ``b`` in a random row that holds ``a``, lacks ``b``
    and is not row ``b``.

    Raises:
        ValueError: If ``size`` is not in [1, num_nodes)
    """
    if not 1 <= size < num_nodes:
        raise ValueError(f"Candidate size M={size} must satisfy 1 <= M < N={num_nodes}")
    rng = np.random.default_rng(seed)
    ids = np.empty((num_nodes, size), dtype=np.int64)
    for node in range(num_nodes):
        draw = rng.choice(num_nodes - 1, size=size, replace=False)
        draw[draw >= node] += 1
        ids[node] = draw

    member = np.zeros((num_nodes, num_nodes), dtype=bool)
    member[np.arange(num_nodes)[:, None], ids] = True
    counts = member.sum(axis=0)
    swaps = 0
    while True:
        over = np.flatnonzero(counts > size)
        if over.size == 0:
            break
        a, b = over[0], np.flatnonzero(counts < size)[0]
        rows = np.flatnonzero(member[:, a] & ~member[:, b])
        row = rng.choice(rows[rows != b])
        ids[row, ids[row] == a] = b
        member[row, a], member[row, b] = False, True
        counts[a] -= 1
        counts[b] += 1
        swaps += 1
    logger.debug("Candidate matrix N=%d M=%d balanced with %d swaps", num_nodes, size, swaps)
    return CandidateMatrix(ids)


def rank_candidates(embedding: Union[NodeEmbedding, np.ndarray], candidates: CandidateMatrix) -> None:
    """Sort every candidate row by Euclidean distance, lower id first on ties."""
    values = _embedding_values(embedding)
    if candidates.num_nodes != values.shape[0]:
        raise ValueError(
            f"Candidate rows ({candidates.num_nodes}) do not match embedding rows ({values.shape[0]})"
        )
    distances = np.linalg.norm(values[:, None, :] - values[candidates.ids], axis=2)
    order = np.lexsort((candidates.ids, distances), axis=1)
    candidates.ids = np.take_along_axis(candidates.ids, order, axis=1)


def sample_significant_neighbors(
    embedding: Union[NodeEmbedding, np.ndarray],
    candidates: CandidateMatrix,
    top_k: int,
    seed: int,
) -> SignificantIndexSet:
    """Select M globally influential neighbors.

    Rows of ``candidates`` are re-sorted by embedding distance, ids are
    counted over the first K sorted positions, the K most frequent ids are
    kept and the remaining M - K slots are drawn uniformly from the rest.

    Raises:
        ValueError: If ``top_k`` is not smaller than the candidate row size
    """
    size = candidates.size
    if top_k >= size:
        raise ValueError(f"top_k (K={top_k}) must be smaller than M={size}")
    if not np.all(np.isfinite(_embedding_values(embedding))):
        raise ValueError("Node embedding contains non-finite values")

    rank_candidates(embedding, candidates)
    num_nodes = candidates.num_nodes
    counts = np.bincount(candidates.ids[:, :top_k].ravel(), minlength=num_nodes)
    node_ids = np.arange(num_nodes)
    frequent = np.lexsort((node_ids, -counts))[:top_k]

    rng = np.random.default_rng(seed)
    remaining = np.setdiff1d(node_ids, frequent)
    explored = rng.choice(remaining, size=size - top_k, replace=False)
    return SignificantIndexSet(np.concatenate([frequent, explored]))


def random_index_set(num_nodes: int, size: int, seed: int) -> SignificantIndexSet:
    """Uniformly random neighbor set (the sampling-free ablation)."""
    rng = np.random.default_rng(seed)
    return SignificantIndexSet(rng.choice(num_nodes, size=size, replace=False))


def dense_index_set(num_nodes: int) -> SignificantIndexSet:
    """Every node, in id order (M = N)."""
    return SignificantIndexSet(np.arange(num_nodes))


def hub_recall(index_set: SignificantIndexSet, hubs: Sequence[int]) -> float:
    """Fraction of ``hubs`` present in the index set."""
    hubs = np.asarray(hubs, dtype=np.int64)
    if hubs.size == 0:
        return 1.0
    return float(np.isin(hubs, index_set.ids).mean())


def compute_slim_adjacency(
    embedding: NodeEmbedding,
    index_set: SignificantIndexSet,
    weights: AttentionWeights,
    alpha: float,
) -> SlimAdjacency:
    """Score every (node, neighbor) pair with the attention heads.

    Pairs are ``[E_i, E_j]`` (N x M x 2d); each head yields two score columns
    normalised with entmax over the M neighbors; the 2P normalised columns
    are projected to one value and rectified.
    """
    alpha = check_alpha(alpha)
    num_nodes, dim = embedding.num_nodes, embedding.dim
    index_set.validate_for(num_nodes)
    size = len(index_set)

    E = embedding.weight
    own = T.broadcast_to(T.reshape(E, (num_nodes, 1, dim)), (num_nodes, size, dim))
    neighbors = T.broadcast_to(
        T.reshape(T.gather(E, index_set.ids, axis=0), (1, size, dim)), (num_nodes, size, dim)
    )
    pairs = T.concat([own, neighbors], axis=2)

    scores = [T.entmax(head(pairs), alpha, axis=1) for head in weights.heads]
    stacked = T.concat(scores, axis=2)
    projected = T.reshape(T.matmul(stacked, weights.projection), (num_nodes, size))
    return SlimAdjacency(values=T.relu(projected), index_set=index_set)


def inner_product_adjacency(
    embedding: NodeEmbedding, index_set: SignificantIndexSet
) -> SlimAdjacency:
    """``rectify(E E_I^T)``: the ablation without pair-wise attention."""
    index_set.validate_for(embedding.num_nodes)
    E = embedding.weight
    neighbors = T.gather(E, index_set.ids, axis=0)
    values = T.relu(T.matmul(E, T.transpose(neighbors, (1, 0))))
    return SlimAdjacency(values=values, index_set=index_set)


def zero_adjacency(num_nodes: int, index_set: SignificantIndexSet) -> SlimAdjacency:
    """All-zero adjacency: the diffusion reduces to the self term."""
    return SlimAdjacency(values=Tensor(np.zeros((num_nodes, len(index_set)))), index_set=index_set)


def check_topology(matrix: np.ndarray, num_nodes: int) -> np.ndarray:
    """Validate a fixed N x N adjacency (finite and nonnegative).

    Raises:
        ValueError: On a wrong shape, non-finite or negative entries
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (num_nodes, num_nodes):
        raise ValueError(f"Topology must be {(num_nodes, num_nodes)}, got {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("Topology contains non-finite values")
    if matrix.min() < 0:
        raise ValueError("Topology entries must be nonnegative")
    return matrix


def topology_index_set(matrix: np.ndarray, size: int) -> SignificantIndexSet:
    """The ``size`` nodes with the largest total outflow (column sum), lower id first on ties."""
    matrix = check_topology(matrix, np.asarray(matrix).shape[0])
    if not 1 <= size <= matrix.shape[0]:
        raise ValueError(f"Index set size M={size} must satisfy 1 <= M <= N={matrix.shape[0]}")
    outflow = matrix.sum(axis=0)
    order = np.lexsort((np.arange(matrix.shape[0]), -outflow))
    return SignificantIndexSet(order[:size])


def topology_adjacency(matrix: np.ndarray, index_set: SignificantIndexSet) -> SlimAdjacency:
    """Columns of a fixed matrix: the ablation without neighbor sampling or attention."""
    matrix = check_topology(matrix, np.asarray(matrix).shape[0])
    index_set.validate_for(matrix.shape[0])
    return SlimAdjacency(values=Tensor(matrix[:, index_set.ids]), index_set=index_set)


__all__ = [
    "NodeEmbedding",
    "CandidateMatrix",
    "SignificantIndexSet",
    "SlimAdjacency",
    "AttentionHead",
    "AttentionWeights",
    "init_candidates",
    "rank_candidates",
    "sample_significant_neighbors",
    "random_index_set",
    "dense_index_set",
    "hub_recall",
    "compute_slim_adjacency",
    "inner_product_adjacency",
    "zero_adjacency",
    "check_topology",
    "topology_index_set",
    "topology_adjacency",
]
