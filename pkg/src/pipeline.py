"""
PatternMiner class orchestrating the mining pipeline stages
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .appropagation import SimilarityGraph, cluster, preference_for
from .config import PREFERENCE_MODES, Config
from .errors import BuildError, InputError
from .evalkit import (
    LabeledClustering,
    accuracy_score,
    assigned_patterns,
    cluster_profiles,
    evaluation_report,
    hc_baseline,
    kmeans_baseline,
    scores,
)
from .ingest import (
    build_point_sequences,
    estimate_delta,
    estimate_delta_per_subject,
    gap_histogram,
    parse_trace,
)
from .patterns import Discovery, discover_window, extract_patterns, subject_groups
from .preprocess import stack_bits, to_bis
from .segtree import SegmentTree, build_tree
from .synth import ModeSpec, PlantedDataset, default_modes, generate, random_modes
from .tdist import WindowBound, build_matrix

logger = logging.getLogger(__name__)


@dataclass
class IngestSummary:
    """Point sequences of a trace plus the delta estimates drawn from it"""

    sequences: list
    skipped: int = 0
    delta: Optional[int] = None
    per_subject: dict = field(default_factory=dict)


class PatternMiner:
    """Runs each stage with the settings of one Config"""

    def __init__(self, config: Config):
        self.config = config

    def ingest(self, source) -> IngestSummary:
        """Parse a trace into per-day point sequences and estimate delta"""
        trace = parse_trace(source, self.config.columns)
        sequences = list(build_point_sequences(trace, self.config.utc_offset_s).values())

        hist = gap_histogram(sequences)
        delta = estimate_delta(hist, self.config.delta_quantile) if len(hist) else None
        per_subject = {}
        if self.config.per_subject_delta:
            per_subject = estimate_delta_per_subject(sequences, self.config.delta_quantile)

        logger.info(
            "Ingested %d point sequences (%d rows skipped, estimated delta=%s)",
            len(sequences), trace.skipped, delta,
        )
        return IngestSummary(sequences=sequences, skipped=trace.skipped, delta=delta, per_subject=per_subject)

    def preprocess(self, sequences: Sequence, per_subject: Optional[dict] = None) -> list:
        """
        Sessionize and discretize point sequences

        Args:
            sequences: PointSequences
            per_subject: Optional subject -> delta overrides; lambda stays common

        Returns:
            List of BIS in input order
        """
        per_subject = per_subject or {}
        lam = self.config.lambda_s
        return [
            to_bis(ps, per_subject.get(ps.subject_id, self.config.delta_s), lam, self.config.day_length_s)
            for ps in sequences
        ]

    def window_units(self, lam: float, omega_s: Optional[float] = None) -> int:
        omega = self.config.omega_s if omega_s is None else omega_s
        try:
            return WindowBound.from_seconds(omega, lam).w_units
        except ValueError as e:
            raise InputError(str(e)) from e

    def build_tree(self, sequences: Sequence) -> SegmentTree:
        if not sequences:
            raise BuildError("No sequences to build a tree from")
        w_units = self.window_units(sequences[0].lam)
        return build_tree(sequences, w_units, jobs=self.config.jobs)

    def _discover_one(self, tree: SegmentTree, window: Optional[tuple]) -> Discovery:
        cfg = self.config
        return discover_window(
            tree,
            window,
            alpha=cfg.alpha,
            mode=cfg.preference_mode,
            grouping=cfg.grouping,
            damping=cfg.damping,
            max_iter=cfg.max_iter,
            stable_iters=cfg.stable_iters,
            seed=cfg.seed,
            exchange_limit=cfg.polish_exchange_limit,
        )

    def discover(self, tree: SegmentTree, windows: Optional[Sequence[tuple]] = None) -> list:
        """Discoveries per window; windows run concurrently against the shared tree"""
        windows = list(windows or self.config.windows) or [None]
        with ThreadPoolExecutor(max_workers=self.config.jobs) as pool:
            return list(pool.map(lambda w: self._discover_one(tree, w), windows))

    def synth(self) -> PlantedDataset:
        cfg = self.config
        if cfg.modes:
            modes = [ModeSpec.from_dict(m, cfg.effective_sigma) for m in cfg.modes]
        elif cfg.random_modes:
            modes = random_modes(cfg.random_modes, cfg.n_units, cfg.effective_sigma, cfg.seed)
        else:
            modes = default_modes(cfg.n_units, cfg.effective_sigma)
        return generate(modes, cfg.synth_n, cfg.false_neg_p, cfg.lambda_s, cfg.n_units, cfg.seed)

    def evaluate(self, predicted, truth, sequences: Optional[Sequence] = None,
                 patterns: Optional[Sequence] = None, baselines: bool = False) -> dict:
        """
        Evaluation report for one clustering against ground truth

        Args:
            predicted: Cluster id per sequence
            truth: Class id per sequence
            sequences: BIS rows, needed for the accuracy score and baselines
            patterns: Patterns whose members cover the sequences
            baselines: Also score k-means and complete-linkage clustering
                with k = number of true classes
        """
        lc = LabeledClustering(predicted=predicted, truth=truth)
        accuracy = None
        if sequences is not None and patterns:
            lookup = assigned_patterns(patterns, len(sequences))
            if all(p is not None for p in lookup):
                accuracy = accuracy_score(sequences, lookup, normalize=True)
            else:
                logger.warning("Some sequences have no pattern; accuracy score skipped")

        per_method = None
        if baselines:
            if sequences is None:
                raise InputError("Baselines need the BIS sequences")
            k = int(np.unique(lc.truth).size)
            per_method = {
                "affinity_propagation": scores(lc, self.config.beta),
                "kmeans": scores(kmeans_baseline(sequences, k, lc.truth, self.config.seed), self.config.beta),
                "hierarchical": scores(hc_baseline(sequences, k, lc.truth), self.config.beta),
            }
        return evaluation_report(lc, self.config.beta, accuracy, per_method)

    def _cluster_groups(self, matrix, bits: np.ndarray, window: tuple, groups: list, mode: str,
                        warm: Optional[dict] = None):
        """
        Cluster every group of one window

        Args:
            matrix: Window DistanceMatrix over all sequences
            bits: Window bits of all sequences
            window: (le, ri) bounds of the bits
            groups: (subject, indices) pairs from subject_groups
            mode: Preference mode
            warm: group position -> list of exemplar sets to start from

        Returns:
            (labels, pattern per sequence, exemplar sets per group, all converged)
        """
        cfg = self.config
        warm = warm or {}
        labels = np.empty(bits.shape[0], dtype=np.int64)
        patterns, exemplars, converged, offset = [], [], True, 0
        for g, (subject, indices) in enumerate(groups):
            sub = matrix.subset(indices)
            graph = SimilarityGraph.from_distance_matrix(sub)
            graph = graph.with_preference(preference_for(graph, mode))
            result = cluster(
                graph, damping=cfg.damping, max_iter=cfg.max_iter, stable_iters=cfg.stable_iters,
                seed=cfg.seed, exchange_limit=cfg.polish_exchange_limit, warm_starts=warm.get(g, ()),
            )
            labels[indices] = result.labels() + offset
            offset += result.n_clusters
            patterns.extend(extract_patterns(result, bits[indices], window, subject=subject, indices=indices))
            exemplars.append(result.exemplars)
            converged = converged and result.converged
        return labels, assigned_patterns(patterns, bits.shape[0]), exemplars, converged

    def level_accuracy(self, tree: SegmentTree, mode: str) -> float:
        """
        Accuracy score summed over every node of the tree: each node's segments
        against the patterns clustered from that node's own matrix
        """
        bits = tree.bits()
        groups = subject_groups(tree.sequences, self.config.grouping)
        total = 0.0
        for node in tree.root.iter_nodes():
            window = (node.left, node.right)
            segment = bits[:, node.left:node.right]
            _, lookup, _, _ = self._cluster_groups(node.matrix, segment, window, groups, mode)
            total += accuracy_score(segment, lookup, normalize=True)
        return total

    def _baselines(self, truth) -> dict:
        """method -> clusterer of a bit matrix with k = number of classes"""
        k = int(np.unique(truth).size)
        seed = self.config.seed
        return {
            "kmeans": lambda bits: kmeans_baseline(bits, k, truth, seed),
            "hierarchical": lambda bits: hc_baseline(bits, k, truth),
        }

    @staticmethod
    def _profile_accuracy(bits: np.ndarray, predicted) -> float:
        return accuracy_score(bits, cluster_profiles(bits, predicted), normalize=True)

    def baseline_level_accuracy(self, tree: SegmentTree, run) -> float:
        """level_accuracy for a baseline clusterer, re-run on every node's segments"""
        bits = tree.bits()
        total = 0.0
        for node in tree.root.iter_nodes():
            segment = bits[:, node.left:node.right]
            total += self._profile_accuracy(segment, run(segment).predicted)
        return total

    def sweep(self, sequences: Sequence, truth=None, modes: Sequence[str] = PREFERENCE_MODES,
              levels: bool = False) -> list:
        """
        Cluster count and accuracy score for every omega of the sweep and
        every preference mode

        Omegas run in increasing order. A larger window keeps every edge of a
        smaller one, so each run also starts from the previous omega's
        exemplars in the same mode, and minimizing mode from the median
        exemplars at the same omega: counts never grow with omega and
        minimizing never exceeds median. The config's grouping applies; with
        per_subject the counts of all subjects add up. The full-day matrix is
        computed directly; it equals the tree's root matrix.

        Args:
            sequences: BIS of equal length and lambda
            truth: Optional class per sequence; adds purity, Rand index and
                F-measure columns plus k-means and hierarchical rows with k =
                number of classes
            modes: Preference modes to run
            levels: Also build the tree for every omega and report the
                accuracy score summed over all its nodes

        Returns:
            Per omega, one dict per mode followed by one per baseline
        """
        if not sequences:
            raise InputError("Nothing to sweep")
        cfg = self.config
        bits = stack_bits(sequences)
        lam = sequences[0].lam
        length = bits.shape[1]
        groups = subject_groups(sequences, cfg.grouping)
        # median first, so minimizing can start from it
        order = sorted(modes, key=lambda m: m != "median")

        baselines = self._baselines(truth) if truth is not None else {}
        full_day = {method: run(bits) for method, run in baselines.items()}
        full_day_accuracy = {m: self._profile_accuracy(bits, c.predicted) for m, c in full_day.items()}

        rows, previous = [], {}
        for omega in sorted(cfg.omega_sweep):
            w_units = self.window_units(lam, omega)
            matrix = build_matrix(bits, w_units, lam)
            tree = build_tree(sequences, w_units, jobs=cfg.jobs) if levels else None
            found = {}
            for mode in order:
                warm = {g: [previous[mode][g]] if mode in previous else [] for g in range(len(groups))}
                if mode == "minimizing" and "median" in found:
                    for g in warm:
                        warm[g].append(found["median"][2][g])
                found[mode] = self._cluster_groups(matrix, bits, (0, length), groups, mode, warm)

            for mode in modes:
                labels, lookup, exemplars, converged = found[mode]
                row = {
                    "omega_s": omega,
                    "w_units": w_units,
                    "mode": mode,
                    "n_clusters": sum(len(e) for e in exemplars),
                    "accuracy_score": accuracy_score(bits, lookup, normalize=True),
                    "converged": converged,
                }
                if levels:
                    row["level_accuracy"] = self.level_accuracy(tree, mode)
                if truth is not None:
                    row.update(scores(LabeledClustering(labels, truth), cfg.beta))
                rows.append(row)
                logger.info("omega=%ss mode=%s: %d clusters", omega, mode, row["n_clusters"])
            previous = {mode: found[mode][2] for mode in found}

            for method, clustering in full_day.items():
                row = {
                    "omega_s": omega,
                    "w_units": w_units,
                    "mode": method,
                    "n_clusters": clustering.n_clusters,
                    "accuracy_score": full_day_accuracy[method],
                    "converged": True,
                }
                if levels:
                    row["level_accuracy"] = self.baseline_level_accuracy(tree, baselines[method])
                row.update(scores(clustering, cfg.beta))
                rows.append(row)
        return rows
