"""Retrieval and classification metrics.

All rankings are by descending cosine similarity with ties broken by
ascending gallery index, so every metric is deterministic. Truncated
mean average precision (mAP@K) normalizes each query by
min(total relevant, K), the standard convention.

Average precision and metric means are accumulated with plain
sequential summation. The numbers involved are few and well scaled, and
sequential order makes results reproducible operation for operation
against straightforward reference implementations.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .embeddings import EmbeddingSet, similarity_matrix
from .errors import (
    EmptyGalleryError,
    InvalidConfigError,
    KTooLargeError,
    MissingPrototypeError,
    NoRelevantItemsError,
    SpeciesMismatchError,
    TooFewItemsError,
)
from .rng import rng_for

__all__ = [
    "EvalReport",
    "RankedList",
    "rank_by_score",
    "average_precision",
    "map_retrieval",
    "map_from_ranked",
    "chance_map_oracle",
    "knn_classify",
    "zero_shot_classify",
    "class_prototypes",
    "nearest_prototype",
]


@dataclass(frozen=True)
class EvalReport:
    """One metric value with its per-query breakdown and metadata."""

    metric_name: str
    value: float
    per_query: Optional[Tuple[float, ...]] = None
    k: Optional[int] = None
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (0.0 <= self.value <= 1.0):
            raise InvalidConfigError(f"metric value must lie in [0, 1], got {self.value}")
        if self.per_query is not None:
            mean = sum(self.per_query) / len(self.per_query)
            if abs(mean - self.value) > 1e-12:
                raise InvalidConfigError(
                    f"value {self.value} does not equal the per-query mean {mean}"
                )


@dataclass(frozen=True)
class RankedList:
    """Gallery ranking for one query, scores aligned with the order."""

    query_index: int
    gallery_order: np.ndarray
    scores: np.ndarray

    def __post_init__(self) -> None:
        order = np.asarray(self.gallery_order, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=np.float64)
        if order.shape != scores.shape or order.ndim != 1:
            raise InvalidConfigError("gallery_order and scores must be flat and aligned")
        if not np.array_equal(np.sort(order), np.arange(order.size)):
            raise InvalidConfigError("gallery_order must be a permutation of the gallery")
        if order.size > 1 and np.any(np.diff(scores) > 0):
            raise InvalidConfigError("scores must be non-increasing along the ranking")
        object.__setattr__(self, "gallery_order", order)
        object.__setattr__(self, "scores", scores)


def rank_by_score(scores: np.ndarray) -> np.ndarray:
    """Gallery order: descending score, ties by ascending index."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.argsort(-scores, kind="stable")


def average_precision(ranked_relevance: Sequence, n_relevant: Optional[int] = None) -> float:
    """AP of one ranked list of binary relevance flags.

    ``n_relevant`` overrides the normalizer; pass min(total relevant, k)
    when the list was truncated at k. Raises when nothing is relevant.
    """
    flags = [bool(r) for r in ranked_relevance]
    denom = sum(flags) if n_relevant is None else int(n_relevant)
    if denom <= 0:
        raise NoRelevantItemsError("average precision is undefined with no relevant items")
    hits = 0
    total = 0.0
    for rank, flag in enumerate(flags, start=1):
        if flag:
            hits += 1
            total += hits / rank
    return total / denom


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def map_retrieval(
    queries: EmbeddingSet,
    gallery: EmbeddingSet,
    k: Optional[int] = None,
    metric_name: Optional[str] = None,
) -> EvalReport:
    """Mean average precision for label-match retrieval, optionally @k.

    Queries with no relevant gallery item are excluded from the mean;
    their count is reported under metadata["excluded_queries"].
    """
    if k is not None and k < 1:
        raise InvalidConfigError(f"k must be >= 1, got {k}")
    if gallery.n_items == 0:
        raise EmptyGalleryError("cannot rank an empty gallery")
    scores = similarity_matrix(queries, gallery)
    lists = []
    for i in range(queries.n_items):
        order = rank_by_score(scores[i])
        lists.append(RankedList(query_index=i, gallery_order=order, scores=scores[i][order]))
    return map_from_ranked(lists, queries.labels, gallery.labels, k=k, metric_name=metric_name)


def map_from_ranked(
    ranked_lists: Sequence[RankedList],
    query_labels: np.ndarray,
    gallery_labels: np.ndarray,
    k: Optional[int] = None,
    metric_name: Optional[str] = None,
) -> EvalReport:
    """Mean average precision over pre-ranked galleries."""
    if k is not None and k < 1:
        raise InvalidConfigError(f"k must be >= 1, got {k}")
    query_labels = np.asarray(query_labels, dtype=np.int64)
    gallery_labels = np.asarray(gallery_labels, dtype=np.int64)
    if gallery_labels.size == 0:
        raise EmptyGalleryError("cannot rank an empty gallery")
    per_query: List[float] = []
    excluded = 0
    for ranked in ranked_lists:
        label = query_labels[ranked.query_index]
        total_relevant = int(np.sum(gallery_labels == label))
        if total_relevant == 0:
            excluded += 1
            continue
        order = ranked.gallery_order if k is None else ranked.gallery_order[:k]
        rel = gallery_labels[order] == label
        denom = total_relevant if k is None else min(total_relevant, k)
        per_query.append(average_precision(rel, n_relevant=denom))
    if not per_query:
        raise NoRelevantItemsError("no query has any relevant gallery item")
    name = metric_name or ("map" if k is None else f"map@{k}")
    return EvalReport(
        metric_name=name,
        value=_mean(per_query),
        per_query=tuple(per_query),
        k=k,
        metadata={"excluded_queries": excluded, "n_queries": len(ranked_lists)},
    )


def chance_map_oracle(
    n_per_class: int,
    n_classes: int,
    k: Optional[int] = None,
    trials: int = 1000,
    seed: int = 0,
) -> float:
    """Monte Carlo mean AP of uniformly random rankings.

    The gallery holds ``n_per_class`` items for each of ``n_classes``
    classes; by symmetry a single query class is representative.
    """
    if n_per_class < 1 or n_classes < 1:
        raise InvalidConfigError("n_per_class and n_classes must be >= 1")
    if trials < 1:
        raise InvalidConfigError(f"trials must be >= 1, got {trials}")
    if k is not None and k < 1:
        raise InvalidConfigError(f"k must be >= 1, got {k}")
    labels = np.repeat(np.arange(n_classes), n_per_class)
    denom = n_per_class if k is None else min(n_per_class, k)
    values: List[float] = []
    for trial in range(trials):
        perm = rng_for(seed, "chance", trial).permutation(labels.size)
        ranked = labels[perm] if k is None else labels[perm][:k]
        values.append(average_precision(ranked == 0, n_relevant=denom))
    return _mean(values)


def _same_set(queries: EmbeddingSet, reference: EmbeddingSet) -> bool:
    if queries is reference or queries.matrix is reference.matrix:
        return True
    return (
        queries.matrix.shape == reference.matrix.shape
        and np.array_equal(queries.matrix, reference.matrix)
        and np.array_equal(queries.labels, reference.labels)
    )


def knn_classify(queries: EmbeddingSet, reference: EmbeddingSet, k: int) -> EvalReport:
    """Cosine k-nearest-neighbor classification accuracy.

    Majority vote over the k nearest reference labels; a vote tie goes
    to the tied class whose best neighbor ranks highest. When queries
    and reference are the same set, each item is excluded from its own
    neighbor list.
    """
    if k < 1:
        raise InvalidConfigError(f"k must be >= 1, got {k}")
    if reference.n_items == 0:
        raise EmptyGalleryError("reference set is empty")
    exclude_self = _same_set(queries, reference)
    usable = reference.n_items - (1 if exclude_self else 0)
    if k > usable:
        raise KTooLargeError(f"k={k} but only {usable} usable reference items")
    scores = similarity_matrix(queries, reference)
    if exclude_self:
        np.fill_diagonal(scores, -np.inf)
    per_query: List[float] = []
    for i in range(queries.n_items):
        order = rank_by_score(scores[i])[:k]
        neighbor_labels = reference.labels[order]
        votes = Counter(int(lbl) for lbl in neighbor_labels)
        top_count = max(votes.values())
        tied = {lbl for lbl, count in votes.items() if count == top_count}
        prediction = next(int(lbl) for lbl in neighbor_labels if int(lbl) in tied)
        per_query.append(float(prediction == int(queries.labels[i])))
    return EvalReport(
        metric_name=f"knn@{k}_accuracy",
        value=_mean(per_query),
        per_query=tuple(per_query),
        k=k,
        metadata={"exclude_self": exclude_self},
    )


def class_prototypes(embedding_set: EmbeddingSet) -> EmbeddingSet:
    """Per-class centroids, one row per label, labels ascending."""
    if embedding_set.n_items == 0:
        raise TooFewItemsError("cannot build prototypes from an empty set")
    labels = np.unique(embedding_set.labels)
    rows = np.empty((labels.size, embedding_set.dim), dtype=np.float64)
    for j, label in enumerate(labels):
        rows[j] = embedding_set.matrix[embedding_set.labels == label].mean(axis=0)
    return EmbeddingSet(rows, labels, embedding_set.modality, normalized=False)


def nearest_prototype(queries: EmbeddingSet, prototypes: EmbeddingSet) -> Tuple[np.ndarray, np.ndarray]:
    """Predicted label and cosine confidence per query.

    Prototype labels must be unique; cosine ties resolve to the lowest
    label value.
    """
    labels = prototypes.labels
    if np.unique(labels).size != labels.size:
        raise SpeciesMismatchError("prototype labels must be unique")
    order = np.argsort(labels, kind="stable")
    sorted_prototypes = prototypes.take(order)
    scores = similarity_matrix(queries, sorted_prototypes)
    best = np.argmax(scores, axis=1)
    return sorted_prototypes.labels[best], scores[np.arange(queries.n_items), best]


def zero_shot_classify(queries: EmbeddingSet, prototypes: EmbeddingSet) -> EvalReport:
    """Accuracy of nearest-prototype classification."""
    missing = np.setdiff1d(np.unique(queries.labels), prototypes.labels)
    if missing.size:
        raise MissingPrototypeError(f"no prototype for labels {missing.tolist()}")
    predicted, _ = nearest_prototype(queries, prototypes)
    per_query = tuple(float(p == t) for p, t in zip(predicted, queries.labels))
    return EvalReport(
        metric_name="zero_shot_accuracy",
        value=_mean(per_query),
        per_query=per_query,
        metadata={"n_prototypes": prototypes.n_items},
    )
