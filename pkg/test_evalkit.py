#!/usr/bin/env python3
"""
Tests for clustering metrics, the accuracy score, the cover oracle and baselines
"""

import numpy as np
import pytest
from scipy.optimize import Bounds, LinearConstraint, milp

from conftest import random_bits, random_graph_distances
from src.errors import ContractViolation, OracleError
from src.evalkit import (
    LabeledClustering,
    accuracy_score,
    assigned_patterns,
    confusion_counts,
    distance_comparison,
    evaluation_report,
    f_measure,
    hc_baseline,
    kmeans_baseline,
    min_cover_oracle,
    purity,
    rand_index,
    scores,
)
from src.patterns import Pattern
from src.synth import ModeSpec, generate


@pytest.fixture
def small_case():
    return LabeledClustering(predicted=[0, 0, 0, 1], truth=[0, 0, 1, 1])


def brute_pairs(truth, predicted):
    tp = tn = fp = fn = 0
    n = len(truth)
    for i in range(n):
        for j in range(i + 1, n):
            same_t, same_p = truth[i] == truth[j], predicted[i] == predicted[j]
            tp += same_t and same_p
            fp += same_p and not same_t
            fn += same_t and not same_p
            tn += not same_t and not same_p
    return tp, tn, fp, fn


def test_purity_hand_case(small_case):
    assert purity(small_case) == 0.75


def test_pair_counts_hand_case(small_case):
    counts = confusion_counts(small_case)
    assert (counts.tp, counts.tn, counts.fp, counts.fn) == (1, 2, 2, 1)
    assert rand_index(small_case) == 0.5
    assert f_measure(small_case) == pytest.approx(5 / 11)


def test_pair_counts_match_brute_force(rng):
    for _ in range(10):
        truth = rng.integers(0, 3, 25)
        predicted = rng.integers(0, 4, 25)
        counts = confusion_counts(LabeledClustering(predicted, truth))
        assert (counts.tp, counts.tn, counts.fp, counts.fn) == brute_pairs(truth, predicted)


def test_perfect_clustering_scores_one():
    lc = LabeledClustering(predicted=[5, 5, 7, 7, 9], truth=[0, 0, 1, 1, 2])
    assert scores(lc) == {"purity": 1.0, "rand_index": 1.0, "f_measure": 1.0, "n_clusters": 3}


def test_f_measure_edge_cases():
    singletons = LabeledClustering(predicted=[0, 1, 2], truth=[0, 1, 2])
    assert f_measure(singletons) == 0.0
    with pytest.raises(ValueError):
        f_measure(singletons, beta=1.0)


def test_metric_input_checks():
    with pytest.raises(ValueError):
        LabeledClustering(predicted=[0, 1], truth=[0])
    with pytest.raises(ValueError):
        rand_index(LabeledClustering(predicted=[0], truth=[0]))
    with pytest.raises(ValueError):
        purity(LabeledClustering(predicted=[], truth=[]))


def test_accuracy_score_bounds():
    bits = np.array([1, 0, 1, 1])
    assert accuracy_score([bits], [bits.astype(float)]) == -4.0
    assert accuracy_score([bits], [1.0 - bits]) == 4.0
    assert accuracy_score([bits], [np.full(4, 0.5)]) == 0.0


def test_accuracy_score_normalized():
    bits = np.array([1, 0, 1])
    score = accuracy_score([bits], [np.array([1.0, 0.0, 1.0])], normalize=True)
    assert score == pytest.approx(2 * (1 - np.sqrt(2)) - 1)
    assert accuracy_score([np.zeros(3)], [np.zeros(3)], normalize=True) == -3.0


def test_accuracy_score_contract():
    with pytest.raises(ContractViolation):
        accuracy_score([np.zeros(2)], [None])
    with pytest.raises(ValueError):
        accuracy_score([np.zeros(2)], [])
    with pytest.raises(ValueError):
        accuracy_score([np.zeros(2)], [np.zeros(3)])


def test_assigned_patterns_follow_members():
    p = Pattern(window=(0, 2), counts=[1, 0], support=2, exemplar=0, members=(0, 2))
    lookup = assigned_patterns([p], 3)
    assert lookup[0] is p and lookup[2] is p
    assert lookup[1] is None


def milp_cover_size(d):
    cover = np.isfinite(d).astype(float)
    n = d.shape[0]
    res = milp(
        c=np.ones(n),
        constraints=LinearConstraint(cover, lb=np.ones(n), ub=np.inf),
        integrality=np.ones(n),
        bounds=Bounds(0, 1),
    )
    return int(round(res.fun))


def test_oracle_agrees_with_integer_program(rng):
    for _ in range(15):
        n = int(rng.integers(3, 13))
        d = random_graph_distances(rng, n, edge_p=0.3)
        size, exemplars = min_cover_oracle(d)
        assert size == milp_cover_size(d)
        assert len(exemplars) == size
        assert np.isfinite(d[:, list(exemplars)]).any(axis=1).all()


def test_oracle_limits():
    assert min_cover_oracle(np.zeros((0, 0))) == (0, ())
    with pytest.raises(OracleError):
        min_cover_oracle(np.zeros((21, 21)))


def test_baselines_extremes():
    bits = np.eye(6, 10, dtype=np.uint8)
    truth = np.arange(6)
    assert purity(kmeans_baseline(bits, 6, truth)) == 1.0
    assert hc_baseline(bits, 1, truth).n_clusters == 1
    assert hc_baseline(bits, 6, truth).n_clusters == 6
    with pytest.raises(ValueError):
        kmeans_baseline(bits, 0, truth)
    with pytest.raises(ValueError):
        hc_baseline(bits, 7, truth)


def test_distance_comparison_separates_distant_modes():
    modes = [ModeSpec(10, 20, sigma_units=0), ModeSpec(40, 50, sigma_units=0)]
    data = generate(modes, 12, false_neg_p=0.0, length=64, seed=3)
    report = distance_comparison(data.sequences, data.labels, w_units=4)
    assert set(report) == {"tdist", "euclidean", "dtw"}
    assert report["tdist"]["purity"] == 1.0
    assert report["tdist"]["n_clusters"] == np.unique(data.labels).size


def test_evaluation_report_fields(small_case):
    report = evaluation_report(small_case, beta=2.0, accuracy=-1.5, per_method={"kmeans": {}})
    assert report["purity"] == 0.75
    assert report["accuracy_score"] == -1.5
    assert report["n_clusters"] == 2
    assert "per_method" in report
    assert "per_method" not in evaluation_report(small_case)


def _triple_loop_accuracy(rows, probabilities, normalize=False) -> float:
    total = 0.0
    for bits, p in zip(rows, probabilities):
        p = [float(v) for v in p]
        if normalize:
            norm = sum(v * v for v in p) ** 0.5
            p = [v / norm for v in p] if norm else p
        for j, bit in enumerate(bits):
            for cls in (1, 0):
                value = p[j] if cls == 1 else 1.0 - p[j]
                total += -value if bit == cls else value
    return total


@pytest.mark.parametrize("normalize", [False, True])
def test_accuracy_score_matches_triple_loop(rng, normalize):
    rows = random_bits(rng, 2, 12)
    shared = rng.random(12)
    assert accuracy_score(list(rows), [shared, shared], normalize=normalize) == pytest.approx(
        _triple_loop_accuracy(rows, [shared, shared], normalize)
    )

    rows = random_bits(rng, 30, 24)
    probabilities = [rng.random(24) for _ in rows]
    assert accuracy_score(list(rows), probabilities, normalize=normalize) == pytest.approx(
        _triple_loop_accuracy(rows, probabilities, normalize)
    )
