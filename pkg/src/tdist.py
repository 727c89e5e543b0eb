"""
Bounded temporal dissimilarity (TDist) between binary interval sequences

Distances are kept in unit-interval counts. A pairwise distance is stored as
the exact pair (sum of nearest-match offsets in both directions, number of
1-bits in both sequences) so that segment matrices recombine without rounding.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import distance as spdist

from .errors import InputError, SchemaError

logger = logging.getLogger(__name__)

INFINITE = math.inf


@dataclass(frozen=True)
class WindowBound:
    """Maximum permissible local mismatch"""

    omega: float
    w_units: int

    def __post_init__(self):
        if self.w_units < 1:
            raise ValueError(f"window must span at least one unit, got {self.w_units}")

    @classmethod
    def from_seconds(cls, omega: float, lam: float) -> "WindowBound":
        units = omega / lam
        if not math.isclose(units, round(units)):
            raise ValueError(f"omega ({omega}s) is not a multiple of lambda ({lam}s)")
        return cls(omega=omega, w_units=int(round(units)))


@dataclass(frozen=True)
class PartialDistance:
    """Directed match cost: summed nearest-1 offsets and the source 1-bit count"""

    sum: float
    cnt: int

    @property
    def is_infinite(self) -> bool:
        return self.sum == INFINITE


def _padded(segment, pad: int):
    """Return (core length, bits padded by `pad` on both sides)"""
    if hasattr(segment, "padded"):
        return len(segment), segment.padded(pad)
    bits = getattr(segment, "bits", segment)
    bits = np.asarray(bits, dtype=np.uint8)
    return bits.size, np.pad(bits, pad)


def _min_itdist_padded(padded: np.ndarray, pos: int, w_units: int) -> float:
    for d in range(w_units):
        if padded[pos + d] or padded[pos - d]:
            return d
    return INFINITE


def min_itdist(bits, i: int, w_units: int) -> float:
    """
    Offset of the nearest 1-bit to index i, searching strictly below w_units

    Args:
        bits: Segment (array, BIS or ExtendedView) to search
        i: Index inside the segment
        w_units: Window in unit intervals

    Returns:
        Offset in units, or INFINITE when no 1-bit lies within the window
    """
    length, padded = _padded(bits, w_units)
    if not 0 <= i < length:
        raise IndexError(f"index {i} outside segment of length {length}")
    return _min_itdist_padded(padded, i + w_units, w_units)


def partial_distance(a, b, w_units: int) -> PartialDistance:
    """Match every 1-bit of a against b; stops at the first unmatched bit"""
    len_a, pad_a = _padded(a, w_units)
    len_b, pad_b = _padded(b, w_units)
    if len_a != len_b:
        raise ValueError(f"Segments differ in length: {len_a} != {len_b}")

    core = pad_a[w_units:w_units + len_a]
    total, cnt = 0, 0
    for i in np.flatnonzero(core):
        local = _min_itdist_padded(pad_b, int(i) + w_units, w_units)
        if local == INFINITE:
            return PartialDistance(sum=INFINITE, cnt=int(core.sum()))
        total += local
        cnt += 1
    return PartialDistance(sum=total, cnt=cnt)


def tdist(a, b, w_units: int):
    """
    Symmetric bounded temporal dissimilarity

    Returns:
        Fraction (sum_ab + sum_ba) / (cnt_a + cnt_b), 0 for two empty segments,
        INFINITE when either direction has an unmatched 1-bit
    """
    ab = partial_distance(a, b, w_units)
    if ab.is_infinite:
        return INFINITE
    ba = partial_distance(b, a, w_units)
    if ba.is_infinite:
        return INFINITE
    if ab.cnt + ba.cnt == 0:
        return Fraction(0)
    return Fraction(ab.sum + ba.sum, ab.cnt + ba.cnt)


def nearest_one_offsets(padded: np.ndarray, length: int, w_units: int) -> np.ndarray:
    """
    Vectorized min_itdist over every core position of every row

    Args:
        padded: (n, length + 2 * w_units) padded bit rows
        length: Core segment length
        w_units: Window in unit intervals

    Returns:
        (n, length) int array; w_units marks "no match inside the window"
    """
    padded = np.asarray(padded, dtype=bool)
    offsets = np.full((padded.shape[0], length), w_units, dtype=np.int64)
    for d in range(w_units):
        hit = padded[:, w_units + d:w_units + d + length] | padded[:, w_units - d:w_units - d + length]
        offsets[(offsets == w_units) & hit] = d
    return offsets


class DistanceMatrix:
    """Symmetric TDist matrix stored as exact (sum, count) pairs"""

    def __init__(self, sums: np.ndarray, finite: np.ndarray, counts: np.ndarray,
                 w_units: int, lam: Optional[float] = None):
        sums = np.asarray(sums, dtype=np.int64)
        finite = np.asarray(finite, dtype=bool)
        counts = np.asarray(counts, dtype=np.int64)
        n = counts.size
        if sums.shape != (n, n) or finite.shape != (n, n):
            raise ValueError(f"Matrix shapes {sums.shape}/{finite.shape} do not match {n} counts")
        self.sums = np.where(finite, sums, 0)
        self.finite = finite
        self.counts = counts
        self.w_units = int(w_units)
        self.lam = lam

    @property
    def n(self) -> int:
        return int(self.counts.size)

    def pair_counts(self) -> np.ndarray:
        return self.counts[:, None] + self.counts[None, :]

    def value(self, i: int, j: int):
        """Exact distance between sequences i and j"""
        if not self.finite[i, j]:
            return INFINITE
        cnt = int(self.counts[i] + self.counts[j])
        return Fraction(int(self.sums[i, j]), cnt) if cnt else Fraction(0)

    def dense(self, minutes: bool = False) -> np.ndarray:
        """Float matrix with np.inf for undefined entries"""
        cnt = self.pair_counts()
        values = np.divide(self.sums, cnt, out=np.zeros(self.sums.shape), where=cnt > 0)
        values[~self.finite] = np.inf
        if minutes:
            if self.lam is None:
                raise ValueError("lambda unknown; cannot convert to minutes")
            values = values * (self.lam / 60.0)
        return values

    def neighbors(self, i: int) -> np.ndarray:
        """Indices with a finite distance to i (including i)"""
        return np.flatnonzero(self.finite[i])

    def subset(self, indices: Sequence[int]) -> "DistanceMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        return DistanceMatrix(
            self.sums[np.ix_(idx, idx)],
            self.finite[np.ix_(idx, idx)],
            self.counts[idx],
            self.w_units,
            self.lam,
        )

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.sums, self.sums.T) and np.array_equal(self.finite, self.finite.T))

    def __eq__(self, other):
        if not isinstance(other, DistanceMatrix):
            return NotImplemented
        return (
            self.w_units == other.w_units
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(self.finite, other.finite)
            and np.array_equal(self.sums, other.sums)
        )

    def __repr__(self):
        return f"DistanceMatrix(n={self.n}, w_units={self.w_units}, finite={int(self.finite.sum())})"

    @classmethod
    def from_values(cls, values, counts, w_units: int, lam: Optional[float] = None) -> "DistanceMatrix":
        """
        Build a matrix from explicit distance values

        Args:
            values: (n, n) distances, inf for undefined; each finite value times
                (counts[i] + counts[j]) must be an integer
            counts: Per-sequence 1-bit counts
            w_units: Window the values were computed under

        Returns:
            DistanceMatrix
        """
        values = np.asarray(values, dtype=object)
        counts = np.asarray(counts, dtype=np.int64)
        n = counts.size
        sums = np.zeros((n, n), dtype=np.int64)
        finite = np.zeros((n, n), dtype=bool)
        for i in range(n):
            for j in range(n):
                value = values[i, j]
                if value == INFINITE:
                    continue
                exact = Fraction(value) * int(counts[i] + counts[j])
                if exact.denominator != 1:
                    raise ValueError(f"value {value} at ({i}, {j}) is not realizable with the counts")
                sums[i, j] = int(exact)
                finite[i, j] = True
        matrix = cls(sums, finite, counts, w_units, lam)
        if not matrix.is_symmetric():
            raise ValueError("values must be symmetric")
        return matrix

    def write(self, path):
        """Sparse triplet export; undefined entries are omitted"""
        lam = "" if self.lam is None else repr(self.lam)
        with open(path, "w") as f:
            f.write(f"{self.n},{self.w_units},{lam}\n")
            f.write("counts," + ";".join(str(c) for c in self.counts) + "\n")
            rows, cols = np.nonzero(np.triu(self.finite))
            for i, j in zip(rows, cols):
                f.write(f"{i},{j},{self.value(i, j)}\n")

    @classmethod
    def read(cls, path) -> "DistanceMatrix":
        path = Path(path)
        if not path.exists():
            raise InputError(f"Matrix file not found: {path}")
        with open(path, "r") as f:
            lines = [line.strip() for line in f if line.strip()]
        try:
            n_str, w_str, lam_str = lines[0].split(",")
            n, w_units = int(n_str), int(w_str)
            lam = float(lam_str) if lam_str else None
            tag, joined = lines[1].split(",", 1)
            if tag != "counts":
                raise ValueError("missing counts line")
            counts = np.array([int(c) for c in joined.split(";") if c], dtype=np.int64)
            if counts.size != n:
                raise ValueError(f"expected {n} counts, found {counts.size}")
            sums = np.zeros((n, n), dtype=np.int64)
            finite = np.zeros((n, n), dtype=bool)
            for line in lines[2:]:
                i_str, j_str, value = line.split(",")
                i, j = int(i_str), int(j_str)
                exact = Fraction(value) * int(counts[i] + counts[j])
                sums[i, j] = sums[j, i] = int(exact)
                finite[i, j] = finite[j, i] = True
        except (ValueError, IndexError) as e:
            raise SchemaError(f"{path}: malformed matrix file ({e})") from e
        return cls(sums, finite, counts, w_units, lam)


def build_matrix(segments: Sequence, w_units: int, lam: Optional[float] = None) -> DistanceMatrix:
    """
    Pairwise TDist over equal-length segments

    Args:
        segments: Arrays, BIS rows or ExtendedViews covering the same window
        w_units: Window in unit intervals
        lam: Unit width, carried for unit conversion

    Returns:
        DistanceMatrix with exact sums and 1-bit counts
    """
    if w_units < 1:
        raise ValueError(f"w_units must be at least 1, got {w_units}")
    if len(segments) == 0:
        return DistanceMatrix(np.zeros((0, 0)), np.zeros((0, 0), dtype=bool), np.zeros(0), w_units, lam)

    padded_rows, lengths = [], set()
    for segment in segments:
        length, padded = _padded(segment, w_units)
        lengths.add(length)
        padded_rows.append(padded)
    if len(lengths) != 1:
        raise ValueError(f"Segments differ in length: {sorted(lengths)}")
    length = lengths.pop()

    padded = np.vstack(padded_rows)
    core = padded[:, w_units:w_units + length].astype(np.float64)
    offsets = nearest_one_offsets(padded, length, w_units)
    miss = offsets >= w_units

    # float products of small integers are exact; rint guards the conversion
    unmatched = np.rint(core @ miss.T.astype(np.float64))
    partial = np.rint(core @ np.where(miss, 0, offsets).T.astype(np.float64))
    finite = (unmatched == 0) & (unmatched.T == 0)
    sums = (partial + partial.T).astype(np.int64)
    counts = core.sum(axis=1).astype(np.int64)

    return DistanceMatrix(sums, finite, counts, w_units, lam)


def euclidean(a, b) -> float:
    """L2 distance between two equal-length bit vectors"""
    a = np.asarray(getattr(a, "bits", a), dtype=np.float64)
    b = np.asarray(getattr(b, "bits", b), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"Length mismatch: {a.size} != {b.size}")
    return float(spdist.euclidean(a, b))


def euclidean_matrix(bits: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances of the rows of bits"""
    bits = np.asarray(bits, dtype=np.float64)
    if bits.shape[0] < 2:
        return np.zeros((bits.shape[0], bits.shape[0]))
    return spdist.squareform(spdist.pdist(bits, metric="euclidean"))


def dtw(a, b) -> float:
    """
    Dynamic time warping with absolute-difference local cost, no band

    Args:
        a, b: Non-empty sequences

    Returns:
        Accumulated cost of the optimal warping path
    """
    x = np.asarray(getattr(a, "bits", a), dtype=np.float64)
    y = np.asarray(getattr(b, "bits", b), dtype=np.float64)
    if x.size == 0 or y.size == 0:
        raise ValueError("DTW requires non-empty sequences")

    n, m = x.size, y.size
    table = np.full((n + 1, m + 1), np.inf)
    table[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = abs(x[i - 1] - y[j - 1])
            table[i, j] = cost + min(table[i - 1, j], table[i, j - 1], table[i - 1, j - 1])
    return float(table[n, m])


def dtw_matrix(bits: np.ndarray, n_jobs: Optional[int] = None) -> np.ndarray:
    """
    Pairwise unconstrained DTW for binary rows

    tslearn accumulates squared local costs and returns the square root; for
    0/1 values the squared and absolute costs coincide, so squaring the result
    recovers the absolute-cost DTW of `dtw`.
    """
    from tslearn.metrics import cdist_dtw

    bits = np.asarray(bits, dtype=np.float64)
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise ValueError("dtw_matrix expects binary rows")
    if bits.shape[0] == 0:
        return np.zeros((0, 0))
    return np.rint(cdist_dtw(bits[:, :, None], n_jobs=n_jobs) ** 2)
