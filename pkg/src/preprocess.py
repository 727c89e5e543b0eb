"""
Sessionization of point sequences and discretization into binary interval sequences
"""

import datetime as dt
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import pandas as pd

from .errors import SchemaError
from .ingest import SECONDS_PER_DAY, PointSequence, read_headerless

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IntervalSequence:
    """Half-open presence intervals of one subject on one day"""

    subject_id: str
    day: dt.date
    intervals: tuple

    def __post_init__(self):
        for start, end in self.intervals:
            if not start < end:
                raise ValueError(f"Empty interval [{start}, {end})")
        for (_, prev_end), (next_start, _) in zip(self.intervals, self.intervals[1:]):
            if next_start < prev_end:
                raise ValueError("Intervals must be ordered and disjoint")


@dataclass(frozen=True, eq=False)
class BIS:
    """Binary presence vector over unit intervals of width lam"""

    subject_id: str
    day: dt.date
    lam: float
    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8)
        if bits.ndim != 1:
            raise ValueError("bits must be one-dimensional")
        if np.any(bits > 1):
            raise ValueError("bits must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def __len__(self):
        return int(self.bits.size)

    def __eq__(self, other):
        if not isinstance(other, BIS):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.day == other.day
            and self.lam == other.lam
            and np.array_equal(self.bits, other.bits)
        )

    def __hash__(self):
        return hash((self.subject_id, self.day, self.lam, self.bits.tobytes()))

    def bitstring(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)


def sessionize(ps: PointSequence, delta: float) -> IntervalSequence:
    """
    Merge detections closer than delta into presence intervals

    Args:
        ps: Point sequence of one subject/day
        delta: Maximum gap (seconds) bridged inside one interval

    Returns:
        IntervalSequence of [first, last + 1) intervals
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")

    intervals = []
    ts = ps.timestamps
    if ts:
        start = prev = ts[0]
        for t in ts[1:]:
            if t - prev > delta:
                intervals.append((start, prev + 1))
                start = t
            prev = t
        intervals.append((start, prev + 1))

    return IntervalSequence(subject_id=ps.subject_id, day=ps.day, intervals=tuple(intervals))


def n_units(lam: float, day_length: int = SECONDS_PER_DAY) -> int:
    return math.ceil(day_length / lam)


def discretize(iseq: IntervalSequence, lam: float, day_length: int = SECONDS_PER_DAY) -> BIS:
    """
    Set bit j when [j*lam, (j+1)*lam) overlaps any interval

    Args:
        iseq: Interval sequence
        lam: Unit interval width in seconds
        day_length: Length of the day axis in seconds

    Returns:
        BIS of length ceil(day_length / lam)
    """
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")

    length = n_units(lam, day_length)
    bits = np.zeros(length, dtype=np.uint8)
    for start, end in iseq.intervals:
        first = max(int(math.floor(start / lam)), 0)
        last = min(int(math.ceil(end / lam)), length)
        bits[first:last] = 1

    return BIS(subject_id=iseq.subject_id, day=iseq.day, lam=lam, bits=bits)


def to_bis(ps: PointSequence, delta: float, lam: Optional[float] = None,
           day_length: int = SECONDS_PER_DAY) -> BIS:
    """Sessionize then discretize; lam defaults to delta / 2"""
    lam = delta / 2 if lam is None else lam
    return discretize(sessionize(ps, delta), lam, day_length)


def stack_bits(sequences: Iterable[BIS]) -> np.ndarray:
    """Stack equal-length BIS rows into an (n, L) uint8 matrix"""
    rows = [s.bits for s in sequences]
    if not rows:
        return np.zeros((0, 0), dtype=np.uint8)
    lengths = {r.size for r in rows}
    if len(lengths) != 1:
        raise ValueError(f"Sequences have different lengths: {sorted(lengths)}")
    return np.vstack(rows).astype(np.uint8)


def _format_lam(lam: float) -> str:
    return str(int(lam)) if float(lam).is_integer() else repr(float(lam))


BIS_FIELDS = ["subject", "day", "lambda", "bits"]


def write_bis(sequences: Iterable[BIS], path):
    """Write `subject,day,lambda,bitstring` rows; subjects holding a comma or quote are quoted"""
    frame = pd.DataFrame(
        [(s.subject_id, s.day.isoformat(), _format_lam(s.lam), s.bitstring()) for s in sequences],
        columns=BIS_FIELDS,
    )
    frame.to_csv(path, header=False, index=False)


def read_bis(path) -> list:
    """Inverse of write_bis"""
    frame = read_headerless(path, BIS_FIELDS, "BIS")

    sequences = []
    for line_no, (subject, day, lam, bitstring) in enumerate(frame.itertuples(index=False), start=1):
        try:
            if set(bitstring) - {"0", "1"}:
                raise ValueError("bitstring must contain only 0/1")
            lam_value = float(lam)
            sequences.append(
                BIS(
                    subject_id=subject,
                    day=dt.date.fromisoformat(day),
                    lam=int(lam_value) if lam_value.is_integer() else lam_value,
                    bits=np.frombuffer(bitstring.encode(), dtype=np.uint8) - ord("0"),
                )
            )
        except ValueError as e:
            raise SchemaError(f"{path}:{line_no}: malformed BIS line ({e})") from e
    return sequences
