"""
Sensor trace parsing, per-day point sequences and sessionization threshold estimation
"""

import datetime as dt
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np
import pandas as pd

from .config import DEFAULT_COLUMNS
from .errors import EstimationError, InputError, SchemaError

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400
MAX_MALFORMED_FRACTION = 0.5


@dataclass(frozen=True)
class SensorRecord:
    """One detection of a subject by a sensor"""

    device_id: str
    subject_id: str
    timestamp: int
    rssi: Optional[int] = None
    latitude: Optional[float] = None
    longitude: Optional[float] = None

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError(f"timestamp must be non-negative, got {self.timestamp}")
        if not self.subject_id:
            raise ValueError("subject_id must be non-empty")


@dataclass(frozen=True)
class PointSequence:
    """Detection times (seconds within day) of one subject on one day"""

    subject_id: str
    day: dt.date
    timestamps: tuple

    def __post_init__(self):
        ts = self.timestamps
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("timestamps must be strictly increasing")
        if ts and (ts[0] < 0 or ts[-1] >= SECONDS_PER_DAY):
            raise ValueError("timestamps must lie in [0, 86400)")

    def __len__(self):
        return len(self.timestamps)


@dataclass(frozen=True)
class GapHistogram:
    """Multiset of positive inter-detection gaps in seconds"""

    gaps: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        gaps = np.asarray(self.gaps, dtype=np.int64)
        if np.any(gaps <= 0):
            raise ValueError("gaps must be positive")
        object.__setattr__(self, "gaps", gaps)

    def __len__(self):
        return int(self.gaps.size)


@dataclass
class ParsedTrace:
    """Records read from a trace plus the number of skipped rows"""

    records: list
    skipped: int = 0

    def __len__(self):
        return len(self.records)

    def __iter__(self) -> Iterator[SensorRecord]:
        return iter(self.records)


def _coerce_timestamps(raw: pd.Series) -> pd.Series:
    """Epoch seconds or ISO-8601 strings -> nullable integer epoch seconds"""
    numeric = pd.to_numeric(raw, errors="coerce")
    result = numeric.where(numeric == np.floor(numeric)).astype("Float64")

    pending = result.isna().to_numpy() & raw.notna().to_numpy()
    if pending.any():
        parsed = pd.to_datetime(raw[pending], errors="coerce", utc=True, format="ISO8601")
        seconds = (parsed - pd.Timestamp(0, tz="UTC")) // pd.Timedelta(seconds=1)
        result[pending] = seconds.astype("Float64").to_numpy()

    return result.astype("Int64")


def _optional(value, cast):
    if value is None or pd.isna(value):
        return None
    try:
        return cast(value)
    except (TypeError, ValueError):
        return None


def _header_delimiter(source) -> str:
    """Tab if the header row has one, comma otherwise; streams are rewound"""
    if hasattr(source, "readline"):
        position = source.tell()
        header = source.readline()
        source.seek(position)
    else:
        with open(source, "r", encoding="utf-8") as f:
            header = f.readline()
    return "\t" if "\t" in header else ","


def parse_trace(source, schema: Optional[dict] = None) -> ParsedTrace:
    """
    Parse a delimited sensor trace into SensorRecords

    Args:
        source: Path or text stream with a header row (comma or tab separated)
        schema: Column mapping (keys: subject, timestamp, rssi, device, latitude, longitude)

    Returns:
        ParsedTrace with the records in read order and the skipped-row count
    """
    columns = dict(DEFAULT_COLUMNS)
    columns.update(schema or {})

    try:
        sep = _header_delimiter(source)
        frame = pd.read_csv(source, sep=sep, dtype=str)
    except pd.errors.EmptyDataError:
        return ParsedTrace(records=[], skipped=0)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as e:
        raise InputError(f"Cannot read trace {source}: {e}") from e

    for key in ("subject", "timestamp"):
        if columns[key] not in frame.columns:
            raise SchemaError(f"Missing required column '{columns[key]}' for {key}")

    if frame.empty:
        return ParsedTrace(records=[], skipped=0)

    subjects = frame[columns["subject"]].fillna("").str.strip()
    timestamps = _coerce_timestamps(frame[columns["timestamp"]])
    valid = (
        subjects.ne("").to_numpy()
        & timestamps.notna().to_numpy()
        & (timestamps.fillna(-1).to_numpy(dtype=np.int64) >= 0)
    )

    skipped = int((~valid).sum())
    if skipped / len(frame) > MAX_MALFORMED_FRACTION:
        raise SchemaError(
            f"{skipped} of {len(frame)} rows are malformed; check the column mapping"
        )
    if skipped:
        logger.info("Skipped %d malformed rows", skipped)

    def column(key):
        name = columns.get(key)
        if name in frame.columns:
            return frame[name]
        return pd.Series([None] * len(frame), index=frame.index)

    devices, rssi = column("device"), column("rssi")
    lat, lon = column("latitude"), column("longitude")

    records = []
    for idx in frame.index[valid]:
        records.append(
            SensorRecord(
                device_id=_optional(devices[idx], str) or "",
                subject_id=subjects[idx],
                timestamp=int(timestamps[idx]),
                rssi=_optional(rssi[idx], lambda v: int(float(v))),
                latitude=_optional(lat[idx], float),
                longitude=_optional(lon[idx], float),
            )
        )

    logger.debug("Parsed %d records from %s", len(records), source)
    return ParsedTrace(records=records, skipped=skipped)


def build_point_sequences(records: Iterable[SensorRecord], utc_offset_s: int = 0) -> dict:
    """
    Group detections into per-(subject, day) point sequences

    Args:
        records: Parsed sensor records in any order
        utc_offset_s: Fixed offset applied before splitting at local midnight

    Returns:
        Mapping (subject_id, day) -> PointSequence, keys sorted
    """
    groups = defaultdict(set)
    for record in records:
        local = record.timestamp + utc_offset_s
        day_index, second = divmod(local, SECONDS_PER_DAY)
        day = dt.date(1970, 1, 1) + dt.timedelta(days=day_index)
        groups[(record.subject_id, day)].add(second)

    return {
        key: PointSequence(subject_id=key[0], day=key[1], timestamps=tuple(sorted(groups[key])))
        for key in sorted(groups)
    }


def gap_histogram(sequences: Iterable[PointSequence]) -> GapHistogram:
    """Collect the consecutive-detection gaps of every sequence"""
    gaps = [np.diff(np.asarray(ps.timestamps, dtype=np.int64)) for ps in sequences if len(ps) > 1]
    if not gaps:
        return GapHistogram()
    return GapHistogram(np.concatenate(gaps))


def estimate_delta(hist: GapHistogram, quantile: float = 0.95) -> int:
    """
    Estimate the sessionization threshold from the gap distribution

    Args:
        hist: Inter-detection gaps
        quantile: Fraction of gaps the threshold must cover

    Returns:
        Smallest observed gap g with P(gap <= g) >= quantile
    """
    if not 0 < quantile <= 1:
        raise EstimationError(f"quantile must be in (0, 1], got {quantile}")
    if len(hist) == 0:
        raise EstimationError("Cannot estimate delta from an empty gap histogram")
    return int(np.quantile(hist.gaps, quantile, method="inverted_cdf"))


def estimate_delta_per_subject(sequences: Iterable[PointSequence], quantile: float = 0.95) -> dict:
    """Per-subject delta estimates; subjects without any gap are left out"""
    by_subject = defaultdict(list)
    for ps in sequences:
        by_subject[ps.subject_id].append(ps)

    estimates = {}
    for subject, group in sorted(by_subject.items()):
        hist = gap_histogram(group)
        if len(hist):
            estimates[subject] = estimate_delta(hist, quantile)
        else:
            logger.debug("No gaps for subject %s, skipping", subject)
    return estimates


POINT_SEQUENCE_FIELDS = ["subject", "day", "timestamps"]


def write_point_sequences(sequences: Iterable[PointSequence], path):
    """Write `subject,day,t1;t2;...` rows; subjects holding a comma or quote are quoted"""
    frame = pd.DataFrame(
        [(ps.subject_id, ps.day.isoformat(), ";".join(str(t) for t in ps.timestamps)) for ps in sequences],
        columns=POINT_SEQUENCE_FIELDS,
    )
    frame.to_csv(path, header=False, index=False)


def read_headerless(path, names: list, what: str) -> pd.DataFrame:
    """All-string frame of a header-less CSV; empty files give an empty frame"""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{what} file not found: {path}")
    try:
        frame = pd.read_csv(path, header=None, names=names, dtype=str, keep_default_na=False,
                            skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=names)
    except pd.errors.ParserError as e:
        raise SchemaError(f"{path}: malformed {what.lower()} file ({e})") from e
    short = frame.isna().any(axis=1).to_numpy()
    if short.any():
        line_no = int(np.flatnonzero(short)[0]) + 1
        raise SchemaError(f"{path}:{line_no}: expected {len(names)} fields")
    return frame


def read_point_sequences(path) -> list:
    """Inverse of write_point_sequences"""
    frame = read_headerless(path, POINT_SEQUENCE_FIELDS, "Point sequence")

    sequences = []
    for line_no, (subject, day, joined) in enumerate(frame.itertuples(index=False), start=1):
        try:
            stamps = tuple(int(t) for t in joined.split(";") if t)
            sequences.append(
                PointSequence(subject_id=subject, day=dt.date.fromisoformat(day), timestamps=stamps)
            )
        except ValueError as e:
            raise SchemaError(f"{path}:{line_no}: malformed point sequence ({e})") from e
    return sequences


def write_subject_deltas(estimates: dict, path):
    """`subject,delta_s` rows with a header"""
    frame = pd.DataFrame(
        {"subject": list(estimates), "delta_s": [int(d) for d in estimates.values()]},
        columns=["subject", "delta_s"],
    )
    frame.to_csv(path, index=False)


def read_subject_deltas(path) -> dict:
    """Inverse of write_subject_deltas: subject -> delta in seconds"""
    path = Path(path)
    if not path.exists():
        raise InputError(f"Delta file not found: {path}")
    frame = pd.read_csv(path, dtype={"subject": str}, keep_default_na=False)
    if list(frame.columns) != ["subject", "delta_s"]:
        raise SchemaError(f"{path}: expected columns subject,delta_s")
    deltas = pd.to_numeric(frame["delta_s"], errors="coerce")
    if deltas.isna().any() or (deltas <= 0).any():
        raise SchemaError(f"{path}: every delta_s must be a positive number")
    return dict(zip(frame["subject"], deltas.tolist()))
