#!/usr/bin/env python3
"""
Tests for segment tree construction, window queries and persistence
"""

import datetime as dt

import numpy as np
import pytest

from conftest import random_bits
from src.errors import BuildError, CombineError, InputError, QueryError
from src.preprocess import BIS
from src.segtree import ExtendedView, build_tree, combine, load_tree, query_nodes, save_tree
from src.tdist import build_matrix


def as_bis(bits, lam=450):
    day = dt.date(2000, 1, 1)
    return [BIS(f"s{i}", day, lam, row) for i, row in enumerate(bits)]


@pytest.fixture
def day_bits(rng):
    return random_bits(rng, 12, 192, density=0.15)


def test_extended_view_reads_past_bounds():
    bits = np.array([1, 0, 0, 0, 0, 1], dtype=np.uint8)
    view = ExtendedView(bits, 2, 4, extension=2)
    assert len(view) == 2
    assert view.segment().tolist() == [0, 0]
    assert view.padded(2).tolist() == [1, 0, 0, 0, 0, 1]
    assert view.padded(3).tolist() == [0, 1, 0, 0, 0, 0, 1, 0]


def test_extended_view_reads_zero_outside_day():
    bits = np.array([1, 1, 1], dtype=np.uint8)
    view = ExtendedView(bits, 0, 1, extension=2)
    assert view.padded(2).tolist() == [0, 0, 1, 1, 1]


def test_tree_shape_for_default_day(day_bits):
    tree = build_tree(as_bis(day_bits), w_units=2)
    leaves = tree.leaves()
    assert len(leaves) == 96
    assert all(len(leaf) == 2 for leaf in leaves)
    assert tree.node_count() == 2 * 96 - 1
    assert (tree.root.left, tree.root.right) == (0, 192)


def test_every_node_equals_direct_computation(day_bits):
    w = 4
    tree = build_tree(as_bis(day_bits), w_units=w, jobs=2)
    for node in tree.root.iter_nodes():
        views = [ExtendedView(row, node.left, node.right, w) for row in day_bits]
        assert node.matrix == build_matrix(views, w)


def test_root_matrix_is_the_full_day(day_bits):
    tree = build_tree(as_bis(day_bits), w_units=3)
    assert tree.root.matrix == build_matrix(day_bits, 3)


def test_window_query_recombines_exactly(day_bits):
    w = 4
    tree = build_tree(as_bis(day_bits), w_units=w)
    for le, ri in [(0, 192), (8, 40), (64, 160), (100, 104)]:
        snapped = tree.snap_window(le, ri)
        assert snapped == (le, ri)
        views = [ExtendedView(row, le, ri, w) for row in day_bits]
        assert tree.window_matrix(le, ri) == build_matrix(views, w)


def test_query_snaps_outward_to_leaves(day_bits):
    tree = build_tree(as_bis(day_bits), w_units=4)
    assert tree.snap_window(5, 14) == (4, 16)
    nodes = tree.query(5, 14)
    assert sum(m.counts.sum() for m in nodes) == day_bits[:, 4:16].sum()


def test_query_out_of_range(day_bits):
    tree = build_tree(as_bis(day_bits), w_units=4)
    with pytest.raises(QueryError):
        tree.query(10, 10)
    with pytest.raises(QueryError):
        tree.query(0, 193)


def test_uneven_length_keeps_a_short_last_leaf(rng):
    bits = random_bits(rng, 5, 10)
    tree = build_tree(as_bis(bits), w_units=3)
    assert [len(leaf) for leaf in tree.leaves()] == [3, 3, 3, 1]
    assert tree.root.matrix == build_matrix(bits, 3)


def test_combine_checks_compatibility(rng):
    a = build_matrix(random_bits(rng, 3, 6), 2)
    with pytest.raises(CombineError):
        combine([a, build_matrix(random_bits(rng, 4, 6), 2)])
    with pytest.raises(CombineError):
        combine([a, build_matrix(random_bits(rng, 3, 6), 3)])
    with pytest.raises(CombineError):
        combine([])


def test_build_rejects_mixed_inputs(rng):
    with pytest.raises(BuildError):
        build_tree([], 2)
    mixed = as_bis(random_bits(rng, 2, 8)) + as_bis(random_bits(rng, 1, 8), lam=900)
    with pytest.raises(BuildError):
        build_tree(mixed, 2)


def test_save_and_load_round_trip(tmp_path, day_bits):
    tree = build_tree(as_bis(day_bits), w_units=8)
    save_tree(tree, tmp_path / "tree")
    loaded = load_tree(tmp_path / "tree")
    assert loaded.w_units == 8
    assert loaded.lam == 450
    assert loaded.sequences == tree.sequences
    pairs = zip(tree.root.iter_nodes(), loaded.root.iter_nodes())
    for original, restored in pairs:
        assert (original.left, original.right) == (restored.left, restored.right)
        assert original.matrix == restored.matrix


def test_load_missing_tree(tmp_path):
    with pytest.raises(InputError):
        load_tree(tmp_path)


def test_plain_slices_lose_matches_across_the_boundary():
    a = np.array([0, 0, 0, 1, 0, 0, 0, 0], dtype=np.uint8)
    b = np.array([0, 0, 0, 0, 1, 0, 0, 0], dtype=np.uint8)
    sliced = build_matrix([a[:4], b[:4]], 2)
    extended = build_matrix([ExtendedView(a, 0, 4, 2), ExtendedView(b, 0, 4, 2)], 2)
    assert not sliced.finite[0, 1]
    assert extended.finite[0, 1]
    assert extended.value(0, 1) == 1


def test_query_spans_tile_the_snapped_window(day_bits):
    tree = build_tree(as_bis(day_bits), w_units=2)
    for le, ri in [(0, 192), (3, 97), (50, 52), (1, 191)]:
        spans = [(node.left, node.right) for node in query_nodes(tree.root, le, ri)]
        assert spans[0][0] == tree.snap_window(le, ri)[0]
        assert spans[-1][1] == tree.snap_window(le, ri)[1]
        assert all(prev[1] == nxt[0] for prev, nxt in zip(spans, spans[1:]))
        assert len(spans) <= 2 * tree.depth()


def test_random_leaf_windows_recombine_exactly():
    rng = np.random.default_rng(500)
    for _ in range(500):
        n = int(rng.integers(1, 31))
        length = int(rng.integers(8, 257))
        w = int(rng.integers(2, 9))
        bits = random_bits(rng, n, length, density=float(rng.uniform(0.05, 0.5)))
        tree = build_tree(as_bis(bits), w_units=w)

        leaves = tree.leaves()
        first, last = sorted(rng.integers(0, len(leaves), size=2))
        le, ri = leaves[first].left, leaves[last].right
        views = [ExtendedView(row, le, ri, w) for row in bits]
        assert tree.window_matrix(le, ri) == build_matrix(views, w), (n, length, w, le, ri)
