"""
Clustering quality metrics, exact minimum-cover oracle and baseline clusterers
"""

import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from sklearn.cluster import AgglomerativeClustering, KMeans
from sklearn.metrics.cluster import contingency_matrix, pair_confusion_matrix

from .appropagation import SimilarityGraph, cluster, preference_for
from .errors import ContractViolation, OracleError
from .tdist import DistanceMatrix, build_matrix, dtw_matrix, euclidean_matrix

logger = logging.getLogger(__name__)

ORACLE_MAX_N = 20


@dataclass(frozen=True, eq=False)
class LabeledClustering:
    """Predicted cluster ids next to ground-truth classes"""

    predicted: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        predicted = np.asarray(self.predicted, dtype=np.int64)
        truth = np.asarray(self.truth, dtype=np.int64)
        if predicted.shape != truth.shape or predicted.ndim != 1:
            raise ValueError(f"predicted {predicted.shape} and truth {truth.shape} must be equal-length vectors")
        object.__setattr__(self, "predicted", predicted)
        object.__setattr__(self, "truth", truth)

    def __len__(self):
        return int(self.truth.size)

    @property
    def n_clusters(self) -> int:
        return int(np.unique(self.predicted).size)


@dataclass(frozen=True)
class ConfusionCounts:
    """Pair decisions over unordered index pairs"""

    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion_counts(lc: LabeledClustering) -> ConfusionCounts:
    # sklearn counts ordered pairs
    (tn, fp), (fn, tp) = pair_confusion_matrix(lc.truth, lc.predicted) // 2
    return ConfusionCounts(tp=int(tp), tn=int(tn), fp=int(fp), fn=int(fn))


def purity(lc: LabeledClustering) -> float:
    """Share of points in the majority class of their cluster"""
    if len(lc) == 0:
        raise ValueError("purity of an empty clustering is undefined")
    table = contingency_matrix(lc.truth, lc.predicted)
    return float(table.max(axis=0).sum() / len(lc))


def rand_index(lc: LabeledClustering) -> float:
    if len(lc) < 2:
        raise ValueError("rand index needs at least two points")
    counts = confusion_counts(lc)
    return (counts.tp + counts.tn) / counts.total


def f_measure(lc: LabeledClustering, beta: float = 2.0) -> float:
    """
    Pairwise F-beta; beta > 1 weighs recall (missed same-class pairs) higher

    Zero denominators give 0.
    """
    if beta <= 1:
        raise ValueError(f"beta must be greater than 1, got {beta}")
    counts = confusion_counts(lc)
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    denominator = beta ** 2 * precision + recall
    if denominator == 0:
        return 0.0
    return (1 + beta ** 2) * precision * recall / denominator


def _probabilities(pattern) -> np.ndarray:
    return np.asarray(getattr(pattern, "probabilities", pattern), dtype=np.float64)


def accuracy_score(sequences: Sequence, patterns: Sequence, normalize: bool = False) -> float:
    """
    Reward bins a sequence's pattern predicts and penalize the others

    Every bin is scored over the two classes present/absent: the class the bit
    belongs to contributes -value, the other +value, where a pattern's value
    is p for present and 1 - p for absent. Lower is better.

    Args:
        sequences: BIS segments (or bit arrays)
        patterns: The pattern (or probability vector) assigned to each sequence
        normalize: Scale every pattern vector to unit L2 norm first
    """
    if len(patterns) != len(sequences):
        raise ValueError(f"{len(patterns)} patterns for {len(sequences)} sequences")

    total = 0.0
    for i, (seq, pattern) in enumerate(zip(sequences, patterns)):
        if pattern is None:
            raise ContractViolation(f"Sequence {i} has no pattern")
        bits = np.asarray(getattr(seq, "bits", seq), dtype=np.float64)
        p = _probabilities(pattern)
        if p.shape != bits.shape:
            raise ValueError(f"Sequence {i} has {bits.size} bins, its pattern {p.size}")
        if normalize:
            norm = np.linalg.norm(p)
            p = p / norm if norm else p
        present = p
        absent = 1.0 - p
        total += float(np.sum(np.where(bits == 1, absent - present, present - absent)))
    return total


def assigned_patterns(patterns: Sequence, n: int) -> list:
    """Pattern of every sequence, looked up through pattern members; None when unassigned"""
    lookup = [None] * n
    for pattern in patterns:
        for m in pattern.members:
            lookup[m] = pattern
    return lookup


def _cover_mask(matrix) -> np.ndarray:
    finite = matrix.finite if isinstance(matrix, DistanceMatrix) else np.isfinite(np.asarray(matrix, dtype=np.float64))
    mask = np.array(finite, dtype=bool)
    np.fill_diagonal(mask, True)
    return mask


def min_cover_oracle(matrix) -> tuple:
    """
    Exhaustive minimum exemplar set

    Args:
        matrix: DistanceMatrix or dense distances (inf = undefined), n <= 20

    Returns:
        (size, exemplars) where exemplars is the lexicographically first set of
        minimum size with the highest summed member-to-exemplar similarity
    """
    dense = matrix.dense() if isinstance(matrix, DistanceMatrix) else np.asarray(matrix, dtype=np.float64)
    n = dense.shape[0]
    if n > ORACLE_MAX_N:
        raise OracleError(f"Exhaustive cover search limited to n <= {ORACLE_MAX_N}, got {n}")
    if n == 0:
        return 0, ()

    cover = _cover_mask(matrix)
    similarity = np.where(cover, -np.where(np.isfinite(dense), dense, 0.0), -np.inf)
    np.fill_diagonal(similarity, 0.0)

    for size in range(1, n + 1):
        best, best_set = -math.inf, None
        for combo in combinations(range(n), size):
            cols = list(combo)
            if not cover[:, cols].any(axis=1).all():
                continue
            score = float(similarity[:, cols].max(axis=1).sum())
            if best_set is None or score > best + 1e-12:
                best, best_set = score, combo
        if best_set is not None:
            return size, tuple(best_set)
    raise ContractViolation("Every node covers itself; a cover always exists")


def _check_k(k: int, n: int):
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if k > n:
        raise ValueError(f"k ({k}) exceeds the number of sequences ({n})")


def _bit_matrix(bis) -> np.ndarray:
    return np.vstack([np.asarray(getattr(s, "bits", s), dtype=np.float64) for s in bis])


def kmeans_baseline(bis: Sequence, k: int, truth, seed: int = 0, n_init: int = 1) -> LabeledClustering:
    """Lloyd's k-means on the raw bit vectors, started from k random rows"""
    _check_k(k, len(bis))
    model = KMeans(n_clusters=k, init="random", n_init=n_init, random_state=seed)
    predicted = model.fit_predict(_bit_matrix(bis))
    return LabeledClustering(predicted=predicted, truth=truth)


def hc_baseline(bis: Sequence, k: int, truth, linkage: str = "complete") -> LabeledClustering:
    """Agglomerative clustering with Euclidean distance"""
    _check_k(k, len(bis))
    if len(bis) == 1:
        return LabeledClustering(predicted=np.zeros(1, dtype=np.int64), truth=truth)
    model = AgglomerativeClustering(n_clusters=k, linkage=linkage)
    predicted = model.fit_predict(_bit_matrix(bis))
    return LabeledClustering(predicted=predicted, truth=truth)


def scores(lc: LabeledClustering, beta: float = 2.0) -> dict:
    return {
        "purity": purity(lc),
        "rand_index": rand_index(lc),
        "f_measure": f_measure(lc, beta),
        "n_clusters": lc.n_clusters,
    }


def distance_comparison(bis: Sequence, truth, w_units: int, mode: str = "minimizing",
                        beta: float = 2.0, seed: int = 0, jobs: Optional[int] = None,
                        **cluster_kwargs) -> dict:
    """
    Cluster the same sequences with affinity propagation under TDist,
    Euclidean and DTW distances

    TDist uses the requested preference mode; the fully connected Euclidean
    and DTW graphs use the median preference.

    Returns:
        method -> scores dict
    """
    bits = _bit_matrix(bis)
    graphs = {
        "tdist": (SimilarityGraph.from_distance_matrix(build_matrix(bits.astype(np.uint8), w_units)), mode),
        "euclidean": (SimilarityGraph.from_dense_distances(euclidean_matrix(bits)), "median"),
        "dtw": (SimilarityGraph.from_dense_distances(dtw_matrix(bits, n_jobs=jobs)), "median"),
    }
    report = {}
    for method, (graph, graph_mode) in graphs.items():
        graph = graph.with_preference(preference_for(graph, graph_mode))
        result = cluster(graph, seed=seed, **cluster_kwargs)
        report[method] = scores(LabeledClustering(predicted=result.labels(), truth=truth), beta)
        logger.info("%s: %d clusters, F=%.3f", method, result.n_clusters, report[method]["f_measure"])
    return report


def evaluation_report(lc: LabeledClustering, beta: float = 2.0, accuracy: Optional[float] = None,
                      per_method: Optional[dict] = None) -> dict:
    report = {
        "purity": purity(lc),
        "rand_index": rand_index(lc),
        "f_measure": f_measure(lc, beta),
        "beta": beta,
        "accuracy_score": accuracy,
        "n_clusters": lc.n_clusters,
    }
    if per_method:
        report["per_method"] = per_method
    return report


def cluster_profiles(bis: Sequence, labels) -> list:
    """Per-sequence mean bit vector of its cluster, the pattern a label-only clustering implies"""
    bits = _bit_matrix(bis)
    labels = np.asarray(labels)
    if labels.shape != (bits.shape[0],):
        raise ValueError(f"{labels.size} labels for {bits.shape[0]} sequences")
    means = {label: bits[labels == label].mean(axis=0) for label in np.unique(labels)}
    return [means[label] for label in labels]
