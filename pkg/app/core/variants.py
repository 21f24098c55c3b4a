"""Adjacency variant enumeration."""

from enum import Enum


class AdjacencyVariant(str, Enum):
    """How the slim adjacency is produced.

    SPARSE_ATTENTION is the full model; the others are the ablations
    (softmax attention is SPARSE_ATTENTION with alpha = 1.0). TOPOLOGY drops
    both neighbor sampling and attention and reads a fixed N x N matrix.
    """

    SPARSE_ATTENTION = "sparse_attention"
    INNER_PRODUCT = "inner_product"
    RANDOM_NEIGHBORS = "random_neighbors"
    NO_GRAPH = "no_graph"
    TOPOLOGY = "topology"
