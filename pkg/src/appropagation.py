"""
Affinity propagation over a sparse similarity graph

Similarities are negated TDist values; pairs with an undefined distance have
no edge and exchange no messages. With a strongly negative shared preference
the result is a minimum set of exemplars whose coverings partition the
sequences.
"""

import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .errors import ContractViolation, InputError
from .tdist import DistanceMatrix

logger = logging.getLogger(__name__)

MERGE_PAIR_LIMIT = 4096


@dataclass(eq=False)
class SimilarityGraph:
    """
    Symmetric similarity matrix with -inf marking missing edges

    The diagonal is ignored; every node shares the scalar `preference`
    as its self-similarity.
    """

    similarity: np.ndarray
    preference: float = 0.0

    def __post_init__(self):
        s = np.array(self.similarity, dtype=np.float64)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError(f"similarity must be square, got shape {s.shape}")
        if np.isnan(s).any() or (s == np.inf).any():
            raise ValueError("similarity must not contain NaN or +inf")
        np.fill_diagonal(s, 0.0)
        if not np.array_equal(s, s.T):
            raise ValueError("similarity must be symmetric")
        if not math.isfinite(self.preference):
            raise ValueError(f"preference must be finite, got {self.preference}")
        s.setflags(write=False)
        self.similarity = s
        self.preference = float(self.preference)

    @property
    def n(self) -> int:
        return int(self.similarity.shape[0])

    def adjacency(self) -> np.ndarray:
        adj = np.isfinite(self.similarity)
        np.fill_diagonal(adj, False)
        return adj

    def degree(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)

    def edges(self) -> dict:
        """(i, j) -> similarity for i < j"""
        rows, cols = np.nonzero(np.triu(self.adjacency(), 1))
        return {(int(i), int(j)): float(self.similarity[i, j]) for i, j in zip(rows, cols)}

    def with_preference(self, preference: float) -> "SimilarityGraph":
        return SimilarityGraph(self.similarity, preference)

    @classmethod
    def from_distance_matrix(cls, matrix: DistanceMatrix, preference: float = 0.0) -> "SimilarityGraph":
        return cls(-matrix.dense(), preference)

    @classmethod
    def from_dense_distances(cls, distances, max_distance: Optional[float] = None,
                             preference: float = 0.0) -> "SimilarityGraph":
        """Graph over plain distances (Euclidean, DTW); optional cut-off drops far pairs"""
        d = np.array(distances, dtype=np.float64)
        if max_distance is not None:
            d[d > max_distance] = np.inf
        return cls(-d, preference)


@dataclass(frozen=True, eq=False)
class ClusteringResult:
    """Exemplars, per-node assignment and the objective they reach"""

    exemplars: tuple
    assignment: np.ndarray
    net_sim: float
    iterations: int
    converged: bool
    preference: float

    @property
    def n(self) -> int:
        return int(self.assignment.size)

    @property
    def n_clusters(self) -> int:
        return len(self.exemplars)

    def clusters(self) -> dict:
        """exemplar -> sorted member indices, exemplars in increasing order"""
        return {e: [int(i) for i in np.flatnonzero(self.assignment == e)] for e in self.exemplars}

    def labels(self) -> np.ndarray:
        """Cluster ids 0..k-1 numbered by exemplar order"""
        lookup = {e: k for k, e in enumerate(self.exemplars)}
        return np.array([lookup[int(e)] for e in self.assignment], dtype=np.int64)


def minimizing_preference(graph: SimilarityGraph) -> float:
    """
    Preference whose magnitude dominates every achievable similarity sum

    Returns:
        -10 * (sum of |similarity| over unordered edges + 1)
    """
    if graph.n < 1:
        raise InputError("Graph has no nodes")
    total = sum(abs(s) for s in graph.edges().values())
    return -10.0 * (total + 1.0)


def median_preference(graph: SimilarityGraph) -> float:
    """Median of the finite off-diagonal similarities; minimizing value without edges"""
    values = list(graph.edges().values())
    if not values:
        return minimizing_preference(graph)
    return float(np.median(values))


def preference_for(graph: SimilarityGraph, mode: str) -> float:
    if mode == "minimizing":
        return minimizing_preference(graph)
    if mode == "median":
        return median_preference(graph)
    raise ValueError(f"Unknown preference mode: {mode}")


def _propagate(similarity: np.ndarray, preference: float, damping: float,
               max_iter: int, stable_iters: int, seed: int):
    """
    Dense responsibility/availability updates; -inf entries never carry messages

    Returns:
        (exemplar indices, iterations run, converged flag)
    """
    n = similarity.shape[0]
    S = np.array(similarity, dtype=np.float64)
    np.fill_diagonal(S, preference)
    edge = np.isfinite(S)

    # tiny seeded jitter removes degenerate ties between equal messages
    rng = np.random.default_rng(seed)
    info = np.finfo(np.float64)
    S[edge] += (info.eps * np.abs(S[edge]) + info.tiny * 100) * rng.random(int(edge.sum()))

    R = np.where(edge, 0.0, -np.inf)
    A = np.zeros((n, n))
    ind = np.arange(n)

    last, stable = None, 0
    best = np.empty(0, dtype=np.int64)
    for it in range(1, max_iter + 1):
        tmp = A + S
        top = np.argmax(tmp, axis=1)
        first = tmp[ind, top]
        tmp[ind, top] = -np.inf
        second = tmp.max(axis=1)
        new_r = S - first[:, None]
        new_r[ind, top] = S[ind, top] - second
        R = damping * R + (1 - damping) * new_r

        tmp = np.maximum(R, 0)
        tmp[ind, ind] = R[ind, ind]
        tmp -= tmp.sum(axis=0)
        diag = tmp[ind, ind].copy()
        np.clip(tmp, 0, np.inf, out=tmp)
        tmp[ind, ind] = diag
        A = damping * A - (1 - damping) * tmp

        found = np.flatnonzero(A[ind, ind] + R[ind, ind] > 0)
        if found.size and last is not None and np.array_equal(found, last):
            stable += 1
        else:
            stable = 0
        last = found
        if found.size:
            best = found
        if stable >= stable_iters:
            logger.debug("Affinity propagation converged after %d iterations", it)
            return best, it, True

    return best, max_iter, False


class _CoverSearch:
    """Net_Sim evaluation and improving moves over exemplar sets"""

    def __init__(self, graph: SimilarityGraph):
        self.scores = graph.similarity
        self.cover = np.isfinite(self.scores)
        self.preference = graph.preference
        self.degree = graph.degree()
        self.n = graph.n

    def objective(self, chosen) -> float:
        if not chosen:
            return -math.inf
        best = self.scores[:, sorted(chosen)].max(axis=1)
        return len(chosen) * self.preference + float(best.sum())

    def improves(self, new: float, old: float) -> bool:
        return new > old + 1e-9 * max(1.0, abs(old))

    def assign(self, chosen) -> np.ndarray:
        ex = np.array(sorted(chosen), dtype=np.int64)
        assignment = ex[np.argmax(self.scores[:, ex], axis=1)]
        assignment[ex] = ex
        return assignment

    def repair(self, chosen) -> set:
        """Greedily add exemplars until every node is covered"""
        chosen = set(chosen)
        covered = self.cover[:, sorted(chosen)].any(axis=1) if chosen else np.zeros(self.n, dtype=bool)
        added = 0
        while not covered.all():
            gains = self.cover[~covered].sum(axis=0)
            c = int(np.argmax(gains))
            chosen.add(c)
            covered |= self.cover[:, c]
            added += 1
        if added:
            logger.debug("Added %d exemplars to cover every node", added)
        return chosen

    def _base(self, rest) -> np.ndarray:
        if not rest:
            return np.full(self.n, -np.inf)
        return self.scores[:, rest].max(axis=1)

    def best_removal(self, chosen, current):
        best, move = current, None
        for e in sorted(chosen):
            rest = chosen - {e}
            value = self.objective(rest)
            if self.improves(value, best):
                best, move = value, rest
        return move

    def best_merge(self, chosen, current):
        """Replace two exemplars by one node covering everything only they cover"""
        ex = sorted(chosen)
        if len(ex) < 2 or len(ex) * (len(ex) - 1) // 2 > MERGE_PAIR_LIMIT:
            return None
        counts = self.cover[:, ex].sum(axis=1)
        best, move = current, None
        for a, b in combinations(ex, 2):
            rest = [e for e in ex if e not in (a, b)]
            need = counts == self.cover[:, a].astype(np.int64) + self.cover[:, b]
            feasible = self.cover[need].all(axis=0)
            feasible[rest] = False
            candidates = np.flatnonzero(feasible)
            if not candidates.size:
                continue
            totals = np.maximum(self._base(rest)[:, None], self.scores[:, candidates]).sum(axis=0)
            values = (len(rest) + 1) * self.preference + totals
            k = int(np.argmax(values))
            if self.improves(values[k], best):
                best, move = float(values[k]), set(rest) | {int(candidates[k])}
        return move

    def best_exchange(self, chosen, current):
        """Replace three exemplars by two nodes that jointly cover their share"""
        ex = sorted(chosen)
        if len(ex) < 3:
            return None
        counts = self.cover[:, ex].sum(axis=1)
        best, move = current, None
        for trio in combinations(ex, 3):
            rest = [e for e in ex if e not in trio]
            need = counts == self.cover[:, list(trio)].sum(axis=1)
            miss = (~self.cover[need]).astype(np.float64)
            ok = np.triu((miss.T @ miss) == 0, 1)
            ok[rest, :] = False
            ok[:, rest] = False
            first, second = np.nonzero(ok)
            if not first.size:
                continue
            joint = np.maximum(self.scores[:, first], self.scores[:, second])
            totals = np.maximum(self._base(rest)[:, None], joint).sum(axis=0)
            values = (len(rest) + 2) * self.preference + totals
            k = int(np.argmax(values))
            if self.improves(values[k], best):
                best, move = float(values[k]), set(rest) | {int(first[k]), int(second[k])}
        return move

    def refine(self, chosen) -> set:
        """
        Move each exemplar to the member that covers the whole cluster with
        the highest summed similarity; ties go to the higher degree, then the
        lower index
        """
        assignment = self.assign(chosen)
        refined = set()
        for e in sorted(chosen):
            members = np.flatnonzero(assignment == e)
            candidates = members[self.cover[np.ix_(members, members)].all(axis=0)]
            totals = self.scores[np.ix_(members, candidates)].sum(axis=0)
            tied = candidates[np.isclose(totals, totals.max(), rtol=1e-12, atol=1e-12)]
            refined.add(int(min(tied, key=lambda c: (-self.degree[c], c))))
        return refined

    def polish(self, chosen, exchange_limit: int) -> set:
        chosen = self.repair(chosen)
        for _ in range(4 * self.n + 4):
            current = self.objective(chosen)
            move = self.best_removal(chosen, current) or self.best_merge(chosen, current)
            if move is None and self.n <= exchange_limit:
                move = self.best_exchange(chosen, current)
            if move is not None:
                logger.debug("Polish: %d -> %d exemplars", len(chosen), len(move))
                chosen = move
                continue

            refined = self.refine(chosen)
            value = self.objective(refined)
            if refined == chosen or value < current - 1e-9 * max(1.0, abs(current)):
                break
            chosen = refined
            if not self.improves(value, current):
                break
        return chosen


def _best_of_warm_starts(search: _CoverSearch, chosen: set, warm_starts: Sequence,
                         exchange_limit: int, polish: bool) -> set:
    """Highest Net_Sim set among those no larger than the smallest polished warm start"""
    candidates = [chosen]
    for start in warm_starts:
        start = {int(e) for e in start}
        if any(not 0 <= e < search.n for e in start):
            raise InputError(f"Warm start exemplars must lie in [0, {search.n})")
        candidates.append(search.polish(start, exchange_limit) if polish else search.repair(start))
    cap = min(len(c) for c in candidates[1:])
    best = max((c for c in candidates if len(c) <= cap), key=search.objective)
    if best is not chosen:
        logger.debug("Warm start kept %d exemplars instead of %d", len(best), len(chosen))
    return best


def cluster(graph: SimilarityGraph, damping: float = 0.9, max_iter: int = 1000,
            stable_iters: int = 50, seed: int = 0, exchange_limit: int = 64,
            polish: bool = True, warm_starts: Sequence = ()) -> ClusteringResult:
    """
    Affinity propagation followed by Net_Sim-improving local moves

    Args:
        graph: Similarity graph carrying the shared preference
        damping: Message damping factor in [0.5, 1)
        max_iter: Iteration cap for message passing
        stable_iters: Sweeps with an unchanged exemplar set that count as converged
        seed: Seed for the tie-breaking jitter
        exchange_limit: Largest graph on which three-for-two exchanges are tried
        polish: Run the improving moves (coverage repair always runs)
        warm_starts: Exemplar sets over the same nodes, e.g. the result for a
            smaller window; each is repaired and polished, and the final set
            has no more exemplars than the smallest of them

    Returns:
        ClusteringResult; `converged` reflects the message passing stage
    """
    if graph.n == 0:
        raise InputError("Cannot cluster an empty graph")
    if not 0.5 <= damping < 1:
        raise ValueError(f"damping must be in [0.5, 1), got {damping}")
    if max_iter < 1 or stable_iters < 1:
        raise ValueError("max_iter and stable_iters must be at least 1")

    adjacency = graph.adjacency()
    connected = adjacency.any(axis=1)
    active = np.flatnonzero(connected)
    chosen = {int(i) for i in np.flatnonzero(~connected)}

    iterations, converged = 0, True
    if active.size:
        found, iterations, converged = _propagate(
            graph.similarity[np.ix_(active, active)], graph.preference,
            damping, max_iter, stable_iters, seed,
        )
        chosen |= {int(active[i]) for i in found}
        if not converged:
            logger.warning(
                "Affinity propagation did not converge in %d iterations; using best-so-far exemplars",
                max_iter,
            )

    search = _CoverSearch(graph)
    before = len(chosen)
    chosen = search.polish(chosen, exchange_limit) if polish else search.repair(chosen)
    logger.debug("Exemplars: %d from message passing, %d after polish", before, len(chosen))
    if warm_starts:
        chosen = _best_of_warm_starts(search, chosen, warm_starts, exchange_limit, polish)

    assignment = search.assign(chosen)
    result = ClusteringResult(
        exemplars=tuple(sorted(chosen)),
        assignment=assignment,
        net_sim=0.0,
        iterations=iterations,
        converged=converged,
        preference=graph.preference,
    )
    net_sim = net_similarity(graph, result)
    logger.info(
        "Clustered %d nodes into %d clusters (net_sim=%.4f, iterations=%d, converged=%s)",
        graph.n, len(chosen), net_sim, iterations, converged,
    )
    return ClusteringResult(
        exemplars=result.exemplars,
        assignment=assignment,
        net_sim=net_sim,
        iterations=iterations,
        converged=converged,
        preference=graph.preference,
    )


def net_similarity(graph: SimilarityGraph, result: ClusteringResult) -> float:
    """
    Sum of member-to-exemplar similarities plus one preference per exemplar

    Raises:
        ContractViolation: an assignment uses a missing edge or an exemplar
            is not assigned to itself
    """
    if result.n != graph.n:
        raise ContractViolation(f"Result covers {result.n} nodes, graph has {graph.n}")
    exemplars = set(result.exemplars)
    total = len(exemplars) * graph.preference
    for i, e in enumerate(result.assignment):
        e = int(e)
        if e not in exemplars:
            raise ContractViolation(f"Node {i} assigned to non-exemplar {e}")
        if i in exemplars:
            if e != i:
                raise ContractViolation(f"Exemplar {i} assigned to {e}")
            continue
        s = graph.similarity[i, e]
        if not np.isfinite(s):
            raise ContractViolation(f"Node {i} assigned to exemplar {e} without an edge")
        total += float(s)
    return total


def write_clusters_csv(clusters: dict, path):
    """
    `cluster_id,exemplar_index,member_indices...` rows, shorter rows padded
    with empty fields

    Args:
        clusters: exemplar -> members, e.g. ClusteringResult.clusters()
        path: Output CSV
    """
    rows = [[cluster_id, exemplar, *members] for cluster_id, (exemplar, members) in enumerate(clusters.items())]
    pd.DataFrame(rows, dtype="Int64").to_csv(path, header=False, index=False)


def read_clusters_csv(path) -> dict:
    """Inverse of write_clusters_csv: exemplar -> members"""
    try:
        with open(path, "r") as f:
            width = max((line.count(",") + 1 for line in f if line.strip()), default=0)
        if not width:
            return {}
        frame = pd.read_csv(path, header=None, names=range(width), dtype="Int64")
    except OSError as e:
        raise InputError(f"Cannot read clusters {path}: {e}") from e
    except (ValueError, TypeError, pd.errors.ParserError) as e:
        raise InputError(f"Malformed clusters file {path}: {e}") from e

    clusters = {}
    for line_no, row in enumerate(frame.itertuples(index=False), start=1):
        values = [int(v) for v in row if not pd.isna(v)]
        if len(values) < 3:
            raise InputError(f"{path}:{line_no}: a cluster needs an id, an exemplar and members")
        clusters[values[1]] = values[2:]
    return clusters


def summary_dict(result: ClusteringResult) -> dict:
    return {
        "clusters": [
            {"exemplar": exemplar, "members": members}
            for exemplar, members in result.clusters().items()
        ],
        "net_sim": result.net_sim,
        "iterations": result.iterations,
        "converged": result.converged,
    }
