"""
Omega-coverings, frequency pruning and probabilistic behavior patterns
"""

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .appropagation import ClusteringResult, SimilarityGraph, cluster, preference_for
from .errors import ContractViolation, InputError, QueryError
from .preprocess import BIS
from .segtree import SegmentTree
from .tdist import DistanceMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OmegaCovering:
    """Sequences within a finite distance of `center`, the center included"""

    center: int
    members: frozenset
    avg_distance: Fraction

    def __len__(self):
        return len(self.members)


@dataclass(eq=False)
class Pattern:
    """Per-bin presence probabilities averaged over one cluster"""

    window: tuple
    counts: np.ndarray
    support: int
    exemplar: int
    members: tuple
    subject: Optional[str] = None
    mean_distance: Optional[float] = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.support < 1:
            raise ContractViolation("A pattern needs at least one member")
        if self.counts.size != self.window[1] - self.window[0]:
            raise ValueError(f"{self.counts.size} bins do not fit window {self.window}")

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.support

    def exact_probabilities(self) -> list:
        return [Fraction(int(c), self.support) for c in self.counts]

    def to_dict(self) -> dict:
        record = {
            "exemplar": self.exemplar,
            "support": self.support,
            "probabilities": [float(p) for p in self.probabilities],
            "members": list(self.members),
        }
        if self.subject is not None:
            record["subject"] = self.subject
        if self.mean_distance is not None:
            record["mean_distance"] = self.mean_distance
        return record


@dataclass
class Discovery:
    """Patterns and clusterings found in one window"""

    window: tuple
    lam: Optional[float]
    n: int
    patterns: list = field(default_factory=list)
    clusterings: list = field(default_factory=list)

    def labels(self) -> np.ndarray:
        """Cluster id per sequence, unique across subject groups"""
        labels = np.full(self.n, -1, dtype=np.int64)
        offset = 0
        for indices, result in self.clusterings:
            labels[np.asarray(indices)] = result.labels() + offset
            offset += result.n_clusters
        return labels

    def clusters(self) -> dict:
        """Global exemplar -> global members over every group"""
        merged = {}
        for indices, result in self.clusterings:
            for exemplar, members in result.clusters().items():
                merged[int(indices[exemplar])] = [int(indices[m]) for m in members]
        return dict(sorted(merged.items()))

    def converged(self) -> bool:
        return all(result.converged for _, result in self.clusterings)

    def n_clusters(self) -> int:
        return sum(result.n_clusters for _, result in self.clusterings)


def coverings(matrix: DistanceMatrix) -> list:
    """One complete Omega-covering per sequence (the finite entries of its row)"""
    result = []
    for i in range(matrix.n):
        members = [int(j) for j in matrix.neighbors(i)]
        others = [j for j in members if j != i]
        if others:
            avg = sum((matrix.value(i, j) for j in others), Fraction(0)) / len(others)
        else:
            avg = Fraction(0)
        result.append(OmegaCovering(center=i, members=frozenset(members) | {i}, avg_distance=avg))
    return result


def prune(covers: Sequence[OmegaCovering], alpha: int) -> list:
    """
    Keep frequent, maximal coverings

    Args:
        covers: Candidate coverings
        alpha: Minimum number of members

    Returns:
        Coverings with at least alpha members whose member set is not a strict
        subset of another's; equal sets keep the lowest average distance, then
        the lowest center
    """
    if alpha < 1:
        raise ValueError(f"alpha must be at least 1, got {alpha}")

    by_set = {}
    for cov in covers:
        if len(cov) < alpha:
            continue
        kept = by_set.get(cov.members)
        if kept is None or (cov.avg_distance, cov.center) < (kept.avg_distance, kept.center):
            by_set[cov.members] = cov

    candidates = list(by_set.values())
    survivors = [
        cov for cov in candidates
        if not any(cov.members < other.members for other in candidates)
    ]
    dropped = len(covers) - len(survivors)
    logger.debug("Pruned %d of %d coverings (alpha=%d)", dropped, len(covers), alpha)
    return sorted(survivors, key=lambda cov: cov.center)


def _window_bits(bis_window, width: int) -> np.ndarray:
    rows = [np.asarray(getattr(s, "bits", s), dtype=np.uint8) for s in bis_window]
    if not rows:
        return np.zeros((0, width), dtype=np.uint8)
    bits = np.vstack(rows)
    if bits.shape[1] != width:
        raise ValueError(f"Segments have {bits.shape[1]} bins, window spans {width}")
    return bits


def extract_patterns(result: ClusteringResult, bis_window, window: tuple,
                     matrix: Optional[DistanceMatrix] = None,
                     subject: Optional[str] = None,
                     indices: Optional[Sequence[int]] = None) -> list:
    """
    Average the member rows of every cluster into a pattern

    Args:
        result: Clustering of the window's sequences
        bis_window: Window segments in clustering order (BIS or bit arrays)
        window: (le, ri) unit-interval bounds of the segments
        matrix: Optional window matrix; adds mean member-to-exemplar distance
        subject: Subject label for per-subject grouping
        indices: Global sequence indices of the rows, defaults to 0..n-1

    Returns:
        One Pattern per exemplar, in exemplar order
    """
    le, ri = window
    bits = _window_bits(bis_window, ri - le)
    if bits.shape[0] != result.n:
        raise ContractViolation(f"Clustering covers {result.n} sequences, window has {bits.shape[0]}")
    global_index = np.arange(result.n) if indices is None else np.asarray(indices, dtype=np.int64)

    patterns = []
    for exemplar, members in result.clusters().items():
        if not members:
            raise ContractViolation(f"Cluster of exemplar {exemplar} is empty")
        mean_distance = None
        if matrix is not None:
            others = [m for m in members if m != exemplar]
            distances = [float(matrix.value(exemplar, m)) for m in others]
            mean_distance = float(np.mean(distances)) if distances else 0.0
        patterns.append(
            Pattern(
                window=(le, ri),
                counts=bits[members].sum(axis=0),
                support=len(members),
                exemplar=int(global_index[exemplar]),
                members=tuple(int(global_index[m]) for m in members),
                subject=subject,
                mean_distance=mean_distance,
            )
        )
    return patterns


def subject_groups(sequences: Sequence[BIS], grouping: str) -> list:
    """(subject, indices) per clustering group; pooled is one group with subject None"""
    if grouping == "pooled":
        return [(None, list(range(len(sequences))))]
    if grouping == "per_subject":
        by_subject = {}
        for i, s in enumerate(sequences):
            by_subject.setdefault(s.subject_id, []).append(i)
        return sorted(by_subject.items())
    raise ValueError(f"Invalid grouping: {grouping}")


def discover_window(tree: SegmentTree, window: Optional[tuple] = None, alpha: int = 3,
                    mode: str = "minimizing", grouping: str = "pooled",
                    damping: float = 0.9, max_iter: int = 1000, stable_iters: int = 50,
                    seed: int = 0, exchange_limit: int = 64) -> Discovery:
    """
    Cluster one window of the tree and turn the clusters into patterns

    The window is snapped outward to leaf boundaries before the matrix is
    assembled; patterns keep the snapped bounds.
    """
    le, ri = window if window is not None else (0, tree.length)
    if not 0 <= le < ri <= tree.length:
        raise QueryError(f"Window [{le}, {ri}) outside [0, {tree.length})")
    snapped = tree.snap_window(le, ri)
    if snapped != (le, ri):
        logger.info("Window [%d, %d) snapped to leaf bounds [%d, %d)", le, ri, *snapped)
    matrix = tree.window_matrix(*snapped)
    bits = tree.bits()[:, snapped[0]:snapped[1]]

    discovery = Discovery(window=snapped, lam=tree.lam, n=tree.n)
    for subject, indices in subject_groups(tree.sequences, grouping):
        sub = matrix.subset(indices)
        graph = SimilarityGraph.from_distance_matrix(sub)
        graph = graph.with_preference(preference_for(graph, mode))
        result = cluster(graph, damping=damping, max_iter=max_iter, stable_iters=stable_iters,
                         seed=seed, exchange_limit=exchange_limit)
        discovery.clusterings.append((indices, result))
        discovery.patterns.extend(
            extract_patterns(result, bits[indices], snapped, matrix=sub, subject=subject, indices=indices)
        )

    frequent = [p for p in discovery.patterns if p.support >= alpha]
    discovery.patterns = sorted(frequent, key=lambda p: (-p.support, p.exemplar))
    logger.info(
        "Window [%d, %d): %d clusters, %d frequent patterns (alpha=%d, mode=%s)",
        snapped[0], snapped[1], discovery.n_clusters(), len(discovery.patterns), alpha, mode,
    )
    return discovery


def discover(tree: SegmentTree, window: Optional[tuple] = None, alpha: int = 3,
             mode: str = "minimizing", **kwargs) -> list:
    """Frequent patterns of a window, ordered by support descending"""
    return discover_window(tree, window, alpha, mode, **kwargs).patterns


def patterns_to_dict(patterns: Sequence[Pattern], window: tuple, lam: Optional[float]) -> dict:
    return {
        "window": {"le": window[0], "ri": window[1], "lambda": lam},
        "patterns": [p.to_dict() for p in patterns],
    }


def write_patterns_json(patterns: Sequence[Pattern], window: tuple, lam: Optional[float], path):
    with open(path, "w") as f:
        json.dump(patterns_to_dict(patterns, window, lam), f, indent=2)


def read_patterns_json(path) -> tuple:
    """Returns (window, lam, patterns)"""
    try:
        with open(path, "r") as f:
            data = json.load(f)
        window = (int(data["window"]["le"]), int(data["window"]["ri"]))
        lam = data["window"].get("lambda")
        patterns = []
        for record in data["patterns"]:
            members = tuple(record.get("members", ()))
            support = int(record["support"])
            probs = np.asarray(record["probabilities"], dtype=np.float64)
            patterns.append(
                Pattern(
                    window=window,
                    counts=np.rint(probs * support).astype(np.int64),
                    support=support,
                    exemplar=int(record["exemplar"]),
                    members=members,
                    subject=record.get("subject"),
                    mean_distance=record.get("mean_distance"),
                )
            )
    except OSError as e:
        raise InputError(f"Cannot read patterns {path}: {e}") from e
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"Malformed patterns file {path}: {e}") from e
    return window, lam, patterns


def patterns_frame(patterns: Sequence[Pattern]) -> pd.DataFrame:
    """Long format: one row per (pattern, bin)"""
    rows = []
    for k, p in enumerate(patterns):
        for offset, prob in enumerate(p.probabilities):
            rows.append({
                "pattern": k,
                "exemplar": p.exemplar,
                "support": p.support,
                "bin": p.window[0] + offset,
                "probability": float(prob),
            })
    return pd.DataFrame(rows, columns=["pattern", "exemplar", "support", "bin", "probability"])


def write_patterns_csv(patterns: Sequence[Pattern], path):
    patterns_frame(patterns).to_csv(path, index=False)
