"""
Segment tree of distance matrices over the day's unit-interval axis

Leaves hold matrices computed directly on extended segments; every internal
node's matrix is the exact recombination of its children. Any window is
answered by a short list of maximal nodes whose matrices are combined.
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import BuildError, CombineError, InputError, QueryError, SchemaError
from .preprocess import BIS, read_bis, stack_bits, write_bis
from .tdist import DistanceMatrix, build_matrix

logger = logging.getLogger(__name__)

INDEX_FILE = "index.csv"
SEQUENCES_FILE = "sequences.bis"


@dataclass(frozen=True, eq=False)
class ExtendedView:
    """
    Read-only view of bits[lo:hi] that can look `extension` units past
    either bound; positions outside the day read as 0
    """

    bits: np.ndarray
    lo: int
    hi: int
    extension: int

    def __len__(self):
        return self.hi - self.lo

    def segment(self) -> np.ndarray:
        return self.bits[self.lo:self.hi]

    def padded(self, pad: int) -> np.ndarray:
        """Segment with `pad` positions on both sides"""
        out = np.zeros(len(self) + 2 * pad, dtype=np.uint8)
        reach = min(pad, self.extension)
        src_lo = max(self.lo - reach, 0)
        src_hi = min(self.hi + reach, self.bits.size)
        offset = pad - (self.lo - src_lo)
        out[offset:offset + (src_hi - src_lo)] = self.bits[src_lo:src_hi]
        return out


@dataclass(eq=False)
class SegmentNode:
    """One segment [left, right) and its distance matrix"""

    left: int
    right: int
    matrix: Optional[DistanceMatrix] = None
    children: Optional[tuple] = None
    node_id: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    def __len__(self):
        return self.right - self.left

    def iter_nodes(self):
        """Pre-order traversal"""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            if node.children:
                stack.extend(reversed(node.children))


@dataclass(eq=False)
class SegmentTree:
    """Root node plus the sequences and window it was built from"""

    root: SegmentNode
    sequences: list
    w_units: int
    lam: Optional[float] = None

    @property
    def length(self) -> int:
        return self.root.right

    @property
    def n(self) -> int:
        return len(self.sequences)

    def bits(self) -> np.ndarray:
        return stack_bits(self.sequences)

    def leaves(self) -> list:
        return [node for node in self.root.iter_nodes() if node.is_leaf]

    def node_count(self) -> int:
        return sum(1 for _ in self.root.iter_nodes())

    def depth(self) -> int:
        def _depth(node):
            if node.is_leaf:
                return 0
            return 1 + max(_depth(child) for child in node.children)
        return _depth(self.root)

    def query(self, le: int, ri: int) -> list:
        return query(self.root, le, ri)

    def snap_window(self, le: int, ri: int) -> tuple:
        return snap_window(self.root, le, ri)

    def window_matrix(self, le: int, ri: int) -> DistanceMatrix:
        return window_matrix(self.root, le, ri)


def _split(lo: int, hi: int, w_units: int) -> int:
    """Midpoint split on a multiple of w_units so leaves are full windows"""
    blocks = math.ceil((hi - lo) / w_units)
    return lo + math.ceil(blocks / 2) * w_units


def _make_nodes(lo: int, hi: int, w_units: int, counter) -> SegmentNode:
    node = SegmentNode(left=lo, right=hi, node_id=next(counter))
    if hi - lo > w_units:
        mid = _split(lo, hi, w_units)
        node.children = (_make_nodes(lo, mid, w_units, counter), _make_nodes(mid, hi, w_units, counter))
    return node


def combine(parts: Sequence[DistanceMatrix]) -> DistanceMatrix:
    """
    Recombine matrices of disjoint contiguous segments

    Sums and counts add; an undefined entry in any part stays undefined.
    The combined value is sum(D_i * (cnt_a_i + cnt_b_i)) / sum(cnt_a_i + cnt_b_i).
    """
    parts = list(parts)
    if not parts:
        raise CombineError("Nothing to combine")
    n = parts[0].n
    w_units = parts[0].w_units
    for part in parts[1:]:
        if part.n != n:
            raise CombineError(f"Cannot combine matrices of size {n} and {part.n}")
        if part.w_units != w_units:
            raise CombineError(f"Cannot combine windows {w_units} and {part.w_units}")
    if len(parts) == 1:
        return parts[0]

    sums = np.zeros((n, n), dtype=np.int64)
    finite = np.ones((n, n), dtype=bool)
    counts = np.zeros(n, dtype=np.int64)
    for part in parts:
        sums += part.sums
        finite &= part.finite
        counts += part.counts
    return DistanceMatrix(sums, finite, counts, w_units, parts[0].lam)


def build_tree(all_bis: Sequence[BIS], w_units: int, jobs: int = 1) -> SegmentTree:
    """
    Build the segment tree for a set of equal-length sequences

    Args:
        all_bis: Sequences sharing length and unit width
        w_units: Window in unit intervals; also the leaf width
        jobs: Worker threads for leaf builds and per-level combines

    Returns:
        SegmentTree whose root covers [0, L)
    """
    all_bis = list(all_bis)
    if not all_bis:
        raise BuildError("Cannot build a tree without sequences")
    lengths = {len(s) for s in all_bis}
    lams = {s.lam for s in all_bis}
    if len(lengths) != 1 or len(lams) != 1:
        raise BuildError(f"Sequences must share length and lambda, got {sorted(lengths)} / {sorted(lams)}")
    if w_units < 1:
        raise BuildError(f"w_units must be at least 1, got {w_units}")

    length, lam = lengths.pop(), lams.pop()
    bits = stack_bits(all_bis)
    counter = itertools.count()
    root = _make_nodes(0, length, w_units, counter)

    levels = {}
    def _collect(node, depth):
        levels.setdefault(depth, []).append(node)
        for child in node.children or ():
            _collect(child, depth + 1)
    _collect(root, 0)

    nodes = list(root.iter_nodes())
    leaves = [node for node in nodes if node.is_leaf]

    def _leaf_matrix(node):
        views = [ExtendedView(row, node.left, node.right, w_units) for row in bits]
        node.matrix = build_matrix(views, w_units, lam)

    def _internal_matrix(node):
        node.matrix = combine([child.matrix for child in node.children])

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        list(pool.map(_leaf_matrix, leaves))
        for depth in sorted(levels, reverse=True):
            internal = [node for node in levels[depth] if not node.is_leaf]
            list(pool.map(_internal_matrix, internal))

    logger.info(
        "Built segment tree: %d sequences, L=%d, w=%d, %d nodes, %d leaves",
        len(all_bis), length, w_units, len(nodes), len(leaves),
    )
    return SegmentTree(root=root, sequences=all_bis, w_units=w_units, lam=lam)


def _check_bounds(root: SegmentNode, le: int, ri: int):
    if not 0 <= le < ri <= root.right:
        raise QueryError(f"Window [{le}, {ri}) outside [0, {root.right})")


def query_nodes(root: SegmentNode, le: int, ri: int) -> list:
    """
    Maximal nodes tiling [le, ri); a partially covered leaf is taken whole,
    which snaps the window outward to leaf boundaries
    """
    _check_bounds(root, le, ri)

    def _get(node):
        if node.left >= ri or node.right <= le:
            return []
        if (node.left >= le and node.right <= ri) or node.is_leaf:
            return [node]
        left, right = node.children
        return _get(left) + _get(right)

    return _get(root)


def query(root: SegmentNode, le: int, ri: int) -> list:
    """Matrices of the constituent segments of [le, ri)"""
    return [node.matrix for node in query_nodes(root, le, ri)]


def snap_window(root: SegmentNode, le: int, ri: int) -> tuple:
    nodes = query_nodes(root, le, ri)
    return nodes[0].left, nodes[-1].right


def window_matrix(root: SegmentNode, le: int, ri: int) -> DistanceMatrix:
    """Distance matrix of [le, ri) (snapped to leaves) without recomputation"""
    return combine(query(root, le, ri))


def save_tree(tree: SegmentTree, directory):
    """
    Persist a tree: index.csv (node_id,left,right,child_ids), one matrix
    file per node and the sequences it was built from
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / INDEX_FILE, "w") as f:
        for node in tree.root.iter_nodes():
            child_ids = ";".join(str(c.node_id) for c in node.children or ())
            f.write(f"{node.node_id},{node.left},{node.right},{child_ids}\n")
            node.matrix.write(directory / f"node_{node.node_id}.mat")
    write_bis(tree.sequences, directory / SEQUENCES_FILE)


def load_tree(directory) -> SegmentTree:
    """Inverse of save_tree; matrices reload bit-exact"""
    directory = Path(directory)
    index = directory / INDEX_FILE
    if not index.exists():
        raise InputError(f"No segment tree index in {directory}")

    nodes, child_map = {}, {}
    with open(index, "r") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                node_id, left, right, child_ids = line.split(",")
                node = SegmentNode(left=int(left), right=int(right), node_id=int(node_id))
                child_map[node.node_id] = [int(c) for c in child_ids.split(";") if c]
            except ValueError as e:
                raise SchemaError(f"{index}:{line_no}: malformed index line ({e})") from e
            node.matrix = DistanceMatrix.read(directory / f"node_{node.node_id}.mat")
            nodes[node.node_id] = node

    for node_id, child_ids in child_map.items():
        if child_ids:
            nodes[node_id].children = tuple(nodes[c] for c in child_ids)

    root = min(nodes.values(), key=lambda node: node.node_id)
    sequences = read_bis(directory / SEQUENCES_FILE)
    lam = sequences[0].lam if sequences else root.matrix.lam
    return SegmentTree(root=root, sequences=sequences, w_units=root.matrix.w_units, lam=lam)
