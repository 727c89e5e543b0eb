#!/usr/bin/env python3
"""
Tests for the bounded temporal distance and the baseline distances
"""

from fractions import Fraction

import numpy as np
import pytest

from conftest import random_bits
from src.errors import SchemaError
from src.tdist import (
    INFINITE,
    DistanceMatrix,
    WindowBound,
    build_matrix,
    dtw,
    dtw_matrix,
    euclidean,
    euclidean_matrix,
    min_itdist,
    partial_distance,
    tdist,
)


def brute_tdist(a, b, w):
    """Direct transcription of the definition, used as an oracle"""
    a, b = list(a), list(b)

    def nearest(bits, i):
        best = INFINITE
        for j, bit in enumerate(bits):
            if bit and abs(i - j) < w:
                best = min(best, abs(i - j))
        return best

    sums, cnt = 0, 0
    for x, y in ((a, b), (b, a)):
        for i, bit in enumerate(x):
            if bit:
                d = nearest(y, i)
                if d == INFINITE:
                    return INFINITE
                sums += d
                cnt += 1
    return Fraction(sums, cnt) if cnt else Fraction(0)


def test_window_bound_from_seconds():
    assert WindowBound.from_seconds(1800, 450).w_units == 4
    with pytest.raises(ValueError):
        WindowBound.from_seconds(1000, 450)
    with pytest.raises(ValueError):
        WindowBound.from_seconds(0, 450)


def test_min_itdist_searches_strictly_inside_window():
    bits = np.array([0, 0, 0, 1, 0, 0])
    assert min_itdist(bits, 3, 1) == 0
    assert min_itdist(bits, 1, 3) == 2
    assert min_itdist(bits, 1, 2) == INFINITE
    with pytest.raises(IndexError):
        min_itdist(bits, 6, 2)


def test_partial_distance_counts_source_bits():
    a = np.array([1, 0, 1, 0])
    b = np.array([0, 1, 0, 0])
    pd = partial_distance(a, b, 2)
    assert (pd.sum, pd.cnt) == (2, 2)
    assert partial_distance(b, np.zeros(4), 2).is_infinite


def test_tdist_examples():
    a = np.array([1, 1, 0, 0, 0, 0])
    b = np.array([0, 1, 1, 0, 0, 0])
    assert tdist(a, b, 2) == Fraction(2, 4)
    assert tdist(a, a, 1) == 0
    assert tdist(np.zeros(6), np.zeros(6), 1) == 0
    assert tdist(a, np.zeros(6), 3) == INFINITE


def test_tdist_matches_oracle_and_is_symmetric(rng):
    bits = random_bits(rng, 30, 24, density=0.25)
    for w in (1, 2, 4):
        for i in range(0, 30, 3):
            for j in range(1, 30, 4):
                expected = brute_tdist(bits[i], bits[j], w)
                assert tdist(bits[i], bits[j], w) == expected
                assert tdist(bits[j], bits[i], w) == expected


def test_finite_tdist_is_below_window(rng):
    bits = random_bits(rng, 40, 32, density=0.3)
    w = 3
    matrix = build_matrix(bits, w)
    dense = matrix.dense()
    assert np.all(dense[np.isfinite(dense)] < w)
    assert np.all(np.diag(dense) == 0)


def test_build_matrix_matches_pairwise(rng):
    bits = random_bits(rng, 15, 40, density=0.2)
    matrix = build_matrix(bits, 3, lam=450)
    assert matrix.is_symmetric()
    for i in range(15):
        for j in range(15):
            assert matrix.value(i, j) == tdist(bits[i], bits[j], 3)
    assert matrix.counts.tolist() == bits.sum(axis=1).tolist()


def test_dense_in_minutes():
    bits = np.array([[1, 0, 0], [0, 1, 0]])
    matrix = build_matrix(bits, 2, lam=450)
    assert matrix.dense(minutes=True)[0, 1] == pytest.approx(7.5)
    with pytest.raises(ValueError):
        build_matrix(bits, 2).dense(minutes=True)


def test_build_matrix_rejects_ragged_segments():
    with pytest.raises(ValueError):
        build_matrix([np.zeros(3), np.zeros(4)], 1)


def test_subset_and_neighbors(worked_matrix):
    assert worked_matrix.neighbors(0).tolist() == [0, 2, 4, 5, 6]
    sub = worked_matrix.subset([0, 2])
    assert sub.value(0, 1) == Fraction(1, 2)


def test_from_values_rejects_unrealizable_distance():
    values = np.array([[0, Fraction(1, 3)], [Fraction(1, 3), 0]], dtype=object)
    with pytest.raises(ValueError):
        DistanceMatrix.from_values(values, [1, 1], 2)


def test_matrix_file_round_trip(tmp_path, rng):
    matrix = build_matrix(random_bits(rng, 12, 20), 2, lam=450.0)
    path = tmp_path / "m.mat"
    matrix.write(path)
    loaded = DistanceMatrix.read(path)
    assert loaded == matrix
    assert loaded.lam == 450.0


def test_malformed_matrix_file(tmp_path):
    path = tmp_path / "bad.mat"
    path.write_text("2,1,\ncounts,1\n")
    with pytest.raises(SchemaError):
        DistanceMatrix.read(path)


def test_euclidean():
    assert euclidean([1, 0, 1], [0, 0, 0]) == pytest.approx(np.sqrt(2))
    dense = euclidean_matrix(np.array([[1, 0], [0, 1], [1, 1]]))
    assert dense[0, 1] == pytest.approx(np.sqrt(2))
    assert dense[0, 2] == pytest.approx(1.0)


def test_dtw_absorbs_shifts():
    a = np.array([0, 1, 1, 0, 0])
    b = np.array([0, 0, 1, 1, 0])
    assert dtw(a, b) == 0
    assert dtw(a, np.zeros(5)) == 2
    with pytest.raises(ValueError):
        dtw([], [1])


def test_dtw_matrix_agrees_with_reference(rng):
    bits = random_bits(rng, 6, 16, density=0.3)
    dense = dtw_matrix(bits)
    for i in range(6):
        for j in range(6):
            assert dense[i, j] == dtw(bits[i], bits[j])


def test_matches_oracle_on_short_random_pairs():
    rng = np.random.default_rng(10_000)
    for _ in range(10_000):
        length = int(rng.integers(1, 17))
        w = int(rng.integers(1, 7))
        a, b = random_bits(rng, 2, length, density=float(rng.uniform(0.1, 0.6)))
        assert tdist(a, b, w) == brute_tdist(a, b, w), (a.tolist(), b.tolist(), w)


def test_finite_chains_stay_within_two_windows(rng):
    bits = random_bits(rng, 40, 24, density=0.45)
    w = 3
    dense = build_matrix(bits, w).dense()
    ones = [np.flatnonzero(row) for row in bits]
    checked = 0
    for x in range(40):
        linked = np.flatnonzero(np.isfinite(dense[x]))
        for a in linked:
            for b in linked:
                for i in ones[a]:
                    assert ones[b].size and np.abs(ones[b] - i).min() < 2 * w
                checked += 1
    assert checked > 40
