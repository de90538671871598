"""1-NN classification by Euclidean distance or by manifold-ranking score."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .graphrank import AffinityGraph, RankingSolver


@dataclass(frozen=True)
class LabeledIndex:
    """Split of graph nodes into labeled training nodes and unlabeled test nodes.

    ``train_labels[i]`` is the class of node ``train_indices[i]``.
    """

    train_indices: tuple
    train_labels: tuple
    test_indices: tuple

    def __post_init__(self):
        object.__setattr__(self, "train_indices", tuple(int(i) for i in self.train_indices))
        object.__setattr__(self, "train_labels", tuple(self.train_labels))
        object.__setattr__(self, "test_indices", tuple(int(i) for i in self.test_indices))
        if len(self.train_indices) != len(self.train_labels):
            raise ValueError("one label per training node required")
        if set(self.train_indices) & set(self.test_indices):
            raise ValueError("training and test nodes overlap")

    def covers(self, n: int) -> bool:
        return sorted(self.train_indices + self.test_indices) == list(range(n))


@dataclass(frozen=True)
class Prediction:
    label: object
    node: int
    fallback: bool = False


def euclidean_nn_classify(train, train_labels: Sequence, query):
    """Label of the closest training row; ties go to the lowest index."""
    return euclidean_nn_batch(train, train_labels, np.atleast_2d(query))[0]


def euclidean_nn_batch(train, train_labels: Sequence, queries) -> list:
    train = np.atleast_2d(np.asarray(train, dtype=np.float64))
    if train.shape[0] == 0 or len(train_labels) == 0:
        raise ValueError("empty training set")
    if train.shape[0] != len(train_labels):
        raise ValueError("one label per training row required")
    d = cdist(np.atleast_2d(np.asarray(queries, dtype=np.float64)), train)
    # argmin returns the first minimum
    return [train_labels[j] for j in np.argmin(d, axis=1)]


def _pick(scores, train_idx, train_labels, query, vectors):
    best = int(np.argmax(scores))
    if scores[best] > 0:
        return Prediction(train_labels[best], int(train_idx[best]))
    if vectors is None:
        raise ValueError(f"query {query} has zero score on every training node "
                         "and no vectors were given for the Euclidean fallback")
    j = int(np.argmin(cdist(vectors[[query]], vectors[train_idx])[0]))
    return Prediction(train_labels[j], int(train_idx[j]), fallback=True)


def rank_nn_batch(graph: AffinityGraph, labels: LabeledIndex, queries=None,
                  alpha: float = 0.99, vectors=None, solver: RankingSolver | None = None
                  ) -> list[Prediction]:
    """Classify test nodes by their highest-scoring training node.

    The graph is transductive: test nodes take part in ranking but their
    labels are never consulted. Ties resolve to the lowest training node
    index. A query whose scores vanish on every training node falls back to
    Euclidean 1-NN over ``vectors`` and the prediction is flagged.
    """
    if queries is None:
        queries = labels.test_indices
    queries = [int(q) for q in queries]
    test_set = set(labels.test_indices)
    for q in queries:
        if q not in test_set:
            raise ValueError(f"node {q} is not a test node")
    order = np.argsort(labels.train_indices, kind="stable")
    train_idx = np.asarray(labels.train_indices, dtype=np.int64)[order]
    train_labels = [labels.train_labels[i] for i in order]
    if train_idx.size == 0:
        raise ValueError("empty training set")
    if solver is None:
        solver = RankingSolver(graph, alpha)
    if vectors is not None:
        vectors = np.asarray(vectors, dtype=np.float64)
    F = solver.rank(queries)
    return [_pick(F[train_idx, c], train_idx, train_labels, q, vectors)
            for c, q in enumerate(queries)]


def rank_nn_classify(graph: AffinityGraph, labels: LabeledIndex, test: int,
                     alpha: float = 0.99, vectors=None) -> Prediction:
    return rank_nn_batch(graph, labels, [test], alpha=alpha, vectors=vectors)[0]
