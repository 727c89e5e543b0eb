"""
Planted multimodal visiting datasets

Each sequence draws a mode, jitters the mode's start/end with a Gaussian,
sets the bins in between and then loses every present bin independently
with the sensor false-negative probability.
"""

import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .errors import InputError, SchemaError
from .ingest import SECONDS_PER_DAY, SensorRecord
from .preprocess import BIS

logger = logging.getLogger(__name__)

DEFAULT_SIGMA_UNITS = 4 / 3
PLANTED_SUBJECT = "planted"
FIRST_DAY = dt.date(2000, 1, 1)
MAX_RETRIES = 10


@dataclass(frozen=True)
class ModeSpec:
    """One planted visiting habit, in unit intervals"""

    mean_start: float
    mean_end: float
    sigma_units: float = DEFAULT_SIGMA_UNITS
    weight: float = 1.0

    def __post_init__(self):
        if not self.mean_start < self.mean_end:
            raise ValueError(f"mean_start ({self.mean_start}) must be below mean_end ({self.mean_end})")
        if self.sigma_units < 0:
            raise ValueError(f"sigma_units must be non-negative, got {self.sigma_units}")
        if self.weight <= 0:
            raise ValueError(f"weight must be positive, got {self.weight}")

    @classmethod
    def from_dict(cls, data: dict, sigma_units: Optional[float] = None) -> "ModeSpec":
        sigma = data.get("sigma_units", sigma_units if sigma_units is not None else DEFAULT_SIGMA_UNITS)
        return cls(
            mean_start=float(data["mean_start"]),
            mean_end=float(data["mean_end"]),
            sigma_units=float(sigma),
            weight=float(data.get("weight", 1.0)),
        )

    def to_dict(self) -> dict:
        return {
            "mean_start": self.mean_start,
            "mean_end": self.mean_end,
            "sigma_units": self.sigma_units,
            "weight": self.weight,
        }


# Office-hours style habits on a 192-bin day (7.5 minute bins): three long
# shifted stays and one short midday visit
DEFAULT_MODES = (
    ModeSpec(64, 136),
    ModeSpec(76, 148),
    ModeSpec(88, 160),
    ModeSpec(100, 124),
)


def default_modes(length: int = 192, sigma_units: float = DEFAULT_SIGMA_UNITS) -> list:
    """DEFAULT_MODES rescaled to a day of `length` bins"""
    scale = length / 192
    return [
        ModeSpec(round(m.mean_start * scale), round(m.mean_end * scale), sigma_units, m.weight)
        for m in DEFAULT_MODES
    ]


def habit_grid(length: int = 192, spacing: int = 12, min_duration: int = 48) -> list:
    """
    (start, end) pairs on a `spacing` grid, at least one spacing away from
    either day boundary and at least `min_duration` bins long

    Any two habits differ by a full spacing at one endpoint or more.
    """
    if spacing < 1 or min_duration < 1:
        raise ValueError("spacing and min_duration must be positive")
    starts = range(spacing, length - spacing, spacing)
    return [
        (start, end)
        for start in starts
        for end in range(start + spacing, length - spacing + 1, spacing)
        if end - start >= min_duration
    ]


def random_modes(count: int, length: int = 192, sigma_units: float = DEFAULT_SIGMA_UNITS,
                 seed: int = 0, spacing: int = 12, min_duration: int = 48) -> list:
    """
    `count` distinct equally weighted habits drawn from habit_grid

    Raises:
        ValueError: the grid holds fewer than `count` habits
    """
    grid = habit_grid(length, spacing, min_duration)
    if not 1 <= count <= len(grid):
        raise ValueError(f"count must be in [1, {len(grid)}] for this grid, got {count}")
    rng = np.random.default_rng(seed)
    picked = sorted(rng.choice(len(grid), size=count, replace=False))
    return [ModeSpec(*grid[k], sigma_units=sigma_units) for k in picked]


@dataclass(eq=False)
class PlantedDataset:
    """Generated sequences with their mode labels and pre-noise masks"""

    sequences: list
    labels: np.ndarray
    clean: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.size != len(self.sequences):
            raise ValueError(f"{self.labels.size} labels for {len(self.sequences)} sequences")

    def __len__(self):
        return len(self.sequences)

    def bits(self) -> np.ndarray:
        if not self.sequences:
            return np.zeros((0, 0), dtype=np.uint8)
        return np.vstack([s.bits for s in self.sequences])

    @property
    def n_modes(self) -> int:
        return len(self.params.get("modes", ())) or int(np.unique(self.labels).size)


def _weights(modes: Sequence[ModeSpec]) -> np.ndarray:
    weights = np.array([m.weight for m in modes], dtype=np.float64)
    return weights / weights.sum()


def _jitter(rng: np.random.Generator, mean: float, sigma: float) -> int:
    if sigma == 0:
        return int(round(mean))
    return int(np.rint(mean + rng.normal(0.0, sigma)))


def _endpoints(rng: np.random.Generator, mode: ModeSpec, length: int) -> tuple:
    for _ in range(MAX_RETRIES):
        start = _jitter(rng, mode.mean_start, mode.sigma_units)
        end = _jitter(rng, mode.mean_end, mode.sigma_units)
        start = min(max(start, 0), length - 1)
        end = min(max(end, 0), length)
        if start < end:
            return start, end
    logger.debug("Degenerate jitter for mode %s, clamping to one bin", mode)
    return start, start + 1


def generate(modes: Sequence[ModeSpec], n: int, false_neg_p: float = 0.2, lam: float = 450,
             length: int = 192, seed: int = 0) -> PlantedDataset:
    """
    Generate a planted dataset

    Args:
        modes: Visiting habits to sample from, by weight
        n: Number of sequences
        false_neg_p: Probability that a present bin reads as absent
        lam: Unit interval width in seconds (carried on every BIS)
        length: Number of bins per sequence
        seed: Root seed; sequence i uses the i-th spawned child seed

    Returns:
        PlantedDataset with one subject and consecutive days
    """
    modes = list(modes)
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if not modes:
        raise ValueError("At least one mode is required")
    if not 0 <= false_neg_p < 1:
        raise ValueError(f"false_neg_p must be in [0, 1), got {false_neg_p}")

    weights = _weights(modes)
    children = np.random.SeedSequence(seed).spawn(n)

    sequences, labels = [], np.empty(n, dtype=np.int64)
    clean = np.zeros((n, length), dtype=np.uint8)
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        label = int(rng.choice(len(modes), p=weights))
        start, end = _endpoints(rng, modes[label], length)
        clean[i, start:end] = 1
        lost = rng.random(length) < false_neg_p
        bits = np.where(lost, 0, clean[i]).astype(np.uint8)
        labels[i] = label
        sequences.append(
            BIS(subject_id=PLANTED_SUBJECT, day=FIRST_DAY + dt.timedelta(days=i), lam=lam, bits=bits)
        )

    params = {
        "modes": [m.to_dict() for m in modes],
        "n": n,
        "false_neg_p": false_neg_p,
        "lambda": lam,
        "length": length,
        "seed": seed,
    }
    logger.info("Generated %d planted sequences from %d modes (p=%.2f, seed=%d)", n, len(modes), false_neg_p, seed)
    return PlantedDataset(sequences=sequences, labels=labels, clean=clean, params=params)


def false_negative_rate(dataset: PlantedDataset) -> float:
    """Share of planted bins lost to false negatives"""
    planted = int(dataset.clean.sum())
    if planted == 0:
        return 0.0
    return 1.0 - int(dataset.bits().sum()) / planted


def run_loss_rate(dataset: PlantedDataset, run: int = 4) -> float:
    """Share of `run` consecutive planted bins that were all lost"""
    clean = dataset.clean.astype(bool)
    lost = clean & (dataset.bits() == 0)
    if clean.shape[1] < run:
        return 0.0
    windows = np.lib.stride_tricks.sliding_window_view
    planted_runs = windows(clean, run, axis=1).all(axis=2)
    lost_runs = windows(lost, run, axis=1).all(axis=2)
    total = int(planted_runs.sum())
    return int(lost_runs.sum()) / total if total else 0.0


def write_labels(labels, path):
    """`index,mode_id` rows"""
    frame = pd.DataFrame({"index": np.arange(len(labels)), "mode_id": np.asarray(labels)})
    frame.to_csv(path, index=False)


def read_labels(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise InputError(f"Labels file not found: {path}")
    frame = pd.read_csv(path)
    if list(frame.columns) != ["index", "mode_id"]:
        raise SchemaError(f"{path}: expected columns index,mode_id")
    frame = frame.sort_values("index")
    if not np.array_equal(frame["index"].to_numpy(), np.arange(len(frame))):
        raise SchemaError(f"{path}: indices must run 0..n-1")
    return frame["mode_id"].to_numpy(dtype=np.int64)


def to_sensor_records(sequences: Sequence[BIS], device_id: str = "synthetic") -> list:
    """
    One detection at the middle of every present bin

    Sessionizing with delta = 2 * lambda bridges single missing bins, so the
    round trip recovers the bits up to those bridged gaps.
    """
    epoch = dt.date(1970, 1, 1)
    records = []
    for s in sequences:
        base = (s.day - epoch).days * SECONDS_PER_DAY
        half = int(s.lam) // 2
        for j in np.flatnonzero(s.bits):
            records.append(
                SensorRecord(device_id=device_id, subject_id=s.subject_id,
                             timestamp=int(base + int(j) * s.lam + half))
            )
    return records


def write_sensor_csv(records: Sequence[SensorRecord], path):
    frame = pd.DataFrame(
        {
            "subject": [r.subject_id for r in records],
            "timestamp": [r.timestamp for r in records],
            "device": [r.device_id for r in records],
        }
    )
    frame.to_csv(path, index=False)
