"""Meter-reading ingestion, daily segmentation, scaling, splitting and fixtures."""

from __future__ import annotations

import csv
import io
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

T = 24
HEADER = ("household_id", "timestamp", "kwh")
DATASET_HEADER = ("source_id",) + tuple(f"h{t:02d}" for t in range(T))


class DataError(ValueError):
    """Malformed or unusable input data."""


class EmptyInputError(DataError):
    pass


class ConstantProfileError(DataError):
    """A daily sequence with max == min cannot be min-max scaled."""


@dataclass(frozen=True)
class Reading:
    household_id: str
    timestamp: datetime
    kwh: float


@dataclass(frozen=True, eq=False)
class LoadProfile:
    values: np.ndarray
    source_id: str | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != (T,):
            raise DataError(f"load profile must have {T} values, got shape {v.shape}")
        if not np.all((v >= 0.0) & (v <= 1.0)):
            raise DataError("load profile values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


class Dataset:
    """Immutable ordered collection of 24-hour profiles stored as an (N, 24) matrix."""

    def __init__(self, values, source_ids: Sequence[str | None] | None = None):
        v = np.array(values, dtype=np.float64).reshape(-1, T)
        if not np.all((v >= 0.0) & (v <= 1.0)):
            raise DataError("dataset values must lie in [0, 1]")
        v.setflags(write=False)
        self.values = v
        if source_ids is None:
            source_ids = [None] * len(v)
        if len(source_ids) != len(v):
            raise DataError("source_ids length does not match number of profiles")
        self.source_ids = tuple(source_ids)

    @classmethod
    def from_profiles(cls, profiles: Iterable[LoadProfile]) -> Dataset:
        profiles = list(profiles)
        values = np.array([p.values for p in profiles]).reshape(-1, T)
        return cls(values, [p.source_id for p in profiles])

    @classmethod
    def concat(cls, parts: Iterable[Dataset]) -> Dataset:
        parts = list(parts)
        if not parts:
            return cls(np.zeros((0, T)))
        return cls(
            np.concatenate([p.values for p in parts]),
            [s for p in parts for s in p.source_ids],
        )

    @property
    def N(self) -> int:
        return len(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i: int) -> LoadProfile:
        return LoadProfile(self.values[i], self.source_ids[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __repr__(self) -> str:
        return f"Dataset(N={len(self)})"

    def subset(self, indices) -> Dataset:
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(self.values[idx], [self.source_ids[i] for i in idx])


# -- ingestion ----------------------------------------------------------------

def _open_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    elif isinstance(source, (str, Path)):
        raw = Path(source).read_bytes()
    else:
        raw = source.read()
        if isinstance(raw, str):
            return raw
    try:
        return raw.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise DataError(f"input is not valid UTF-8: {exc}") from exc


def parse_readings(source) -> list[Reading]:
    """Parse ``household_id,timestamp,kwh`` CSV from bytes, a binary stream or a path."""
    text = _open_text(source)
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header is None:
        raise EmptyInputError("empty input file")
    if tuple(h.strip() for h in header) != HEADER:
        raise DataError(f"line 1: expected header {','.join(HEADER)}, got {','.join(header)}")
    readings = []
    for row in rows:
        line = rows.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise DataError(f"line {line}: expected 3 fields, got {len(row)}")
        hid, ts, kwh = (c.strip() for c in row)
        if not hid:
            raise DataError(f"line {line}: empty household_id")
        try:
            stamp = datetime.fromisoformat(ts)
        except ValueError:
            raise DataError(f"line {line}: bad timestamp {ts!r}") from None
        if stamp.tzinfo is not None:
            raise DataError(f"line {line}: timezone-aware timestamp {ts!r} not supported")
        if stamp.minute or stamp.second or stamp.microsecond:
            raise DataError(f"line {line}: timestamp {ts!r} is not on an hour boundary")
        try:
            value = float(kwh)
        except ValueError:
            raise DataError(f"line {line}: unparseable consumption {kwh!r}") from None
        if not np.isfinite(value):
            raise DataError(f"line {line}: non-finite consumption {kwh!r}")
        if value < 0:
            raise DataError(f"negative consumption at line {line}")
        readings.append(Reading(hid, stamp, value))
    if not readings:
        raise EmptyInputError("no readings in input")
    return readings


@dataclass(frozen=True)
class Segmentation:
    days: list[tuple[str, np.ndarray]]
    dropped_days: int
    dropped_readings: int


def segment_daily(readings: Iterable[Reading]) -> Segmentation:
    """Cut readings into complete (household, calendar day) 24-vectors.

    Days missing any hour are dropped whole. Output is ordered by household
    first appearance, then date.
    """
    table: dict[str, dict] = {}
    for r in readings:
        days = table.setdefault(r.household_id, {})
        hours = days.setdefault(r.timestamp.date(), {})
        if r.timestamp.hour in hours:
            raise DataError(f"duplicate reading for {r.household_id} at {r.timestamp.isoformat()}")
        hours[r.timestamp.hour] = r.kwh
    out, dropped_days, dropped_readings = [], 0, 0
    for hid, days in table.items():
        for day in sorted(days):
            hours = days[day]
            if len(hours) == T:
                out.append((f"{hid}_{day.isoformat()}", np.array([hours[h] for h in range(T)])))
            else:
                dropped_days += 1
                dropped_readings += len(hours)
    return Segmentation(out, dropped_days, dropped_readings)


def normalize(raw, source_id: str | None = None) -> LoadProfile:
    """Min-max scale one day of readings to [0, 1]."""
    x = np.asarray(raw, dtype=np.float64)
    if x.shape != (T,):
        raise DataError(f"expected {T} hourly values, got shape {x.shape}")
    lo, hi = x.min(), x.max()
    if not hi > lo:
        label = f" {source_id}" if source_id else ""
        raise ConstantProfileError(f"constant sequence{label} cannot be scaled to [0, 1]")
    return LoadProfile((x - lo) / (hi - lo), source_id)


def build_dataset(days: Iterable[tuple[str, np.ndarray]]) -> tuple[Dataset, int]:
    """Normalize segmented days, dropping constant ones. Returns (dataset, n_dropped)."""
    profiles, dropped = [], 0
    for sid, raw in days:
        try:
            profiles.append(normalize(raw, sid))
        except ConstantProfileError:
            log.warning("dropping constant profile %s", sid)
            dropped += 1
    return Dataset.from_profiles(profiles), dropped


def split(dataset: Dataset, train_fraction: float = 0.7, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded random per-profile partition; both parts keep the original order."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n = len(dataset)
    if n == 0:
        raise DataError("cannot split an empty dataset")
    n_train = int(np.floor(train_fraction * n + 0.5))
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    val_idx = np.sort(perm[n_train:])
    return dataset.subset(train_idx), dataset.subset(val_idx)


# -- dataset files ------------------------------------------------------------

def write_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(DATASET_HEADER) + "\n")
        for sid, row in zip(dataset.source_ids, dataset.values):
            fh.write((sid or "") + "," + ",".join(f"{v:.9g}" for v in row) + "\n")


def read_dataset(path) -> Dataset:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or tuple(header) != DATASET_HEADER:
            raise DataError(f"{path}: expected dataset header source_id,h00..h23")
        ids, values = [], []
        for row in rows:
            if not row:
                continue
            if len(row) != T + 1:
                raise DataError(f"{path}: line {rows.line_num} has {len(row) - 1} values, expected {T}")
            try:
                values.append([float(v) for v in row[1:]])
            except ValueError:
                raise DataError(f"{path}: line {rows.line_num} has a non-numeric value") from None
            ids.append(row[0] or None)
    return Dataset(np.array(values).reshape(-1, T), ids)


# -- fixtures -----------------------------------------------------------------

@dataclass(frozen=True)
class Archetype:
    name: str
    curve: tuple[float, ...]
    peak_hours: tuple[int, ...]

    @property
    def base(self) -> np.ndarray:
        return normalize(self.curve).values


# Hourly kWh-like shapes (hour 00 first); normalized before use.
ARCHETYPES = {
    a.name: a
    for a in (
        Archetype(
            "morning_peak",
            (0.30, 0.25, 0.20, 0.20, 0.25, 0.50, 1.20, 2.00, 2.20, 1.60, 1.00, 0.80,
             0.70, 0.70, 0.60, 0.60, 0.70, 0.80, 0.90, 0.80, 0.60, 0.50, 0.40, 0.35),
            (6, 7, 8, 9),
        ),
        Archetype(
            "evening_peak",
            (0.40, 0.30, 0.25, 0.20, 0.20, 0.25, 0.40, 0.60, 0.60, 0.50, 0.45, 0.45,
             0.50, 0.50, 0.55, 0.70, 1.00, 1.50, 2.00, 2.30, 2.10, 1.50, 0.90, 0.60),
            (17, 18, 19, 20, 21),
        ),
        Archetype(
            "dual_peak",
            (0.40, 0.30, 0.25, 0.25, 0.30, 0.60, 1.30, 1.90, 1.60, 0.90, 0.60, 0.50,
             0.50, 0.50, 0.50, 0.60, 0.90, 1.40, 1.90, 2.00, 1.60, 1.10, 0.70, 0.50),
            (6, 7, 8, 17, 18, 19, 20),
        ),
        Archetype(
            "flat_night",
            (1.80, 1.90, 1.90, 1.80, 1.70, 1.40, 0.90, 0.60, 0.50, 0.40, 0.40, 0.40,
             0.40, 0.40, 0.40, 0.45, 0.50, 0.60, 0.70, 0.80, 0.90, 1.10, 1.40, 1.60),
            (0, 1, 2, 3, 4, 23),
        ),
        Archetype(
            "midday_peak",
            (0.30, 0.30, 0.30, 0.30, 0.30, 0.35, 0.50, 0.70, 0.90, 1.20, 1.60, 1.90,
             2.10, 2.20, 2.10, 1.80, 1.30, 0.90, 0.70, 0.60, 0.50, 0.40, 0.35, 0.30),
            (11, 12, 13, 14, 15),
        ),
    )
}


def fixture_generate(recipe: Sequence[tuple[str, int, float]], seed: int = 0) -> Dataset:
    """Deterministic normalized profiles: archetype base curve plus Gaussian noise.

    ``recipe`` lists ``(archetype name, count, noise std)``; each profile is
    renormalized after noise and tagged ``<archetype>_<ordinal>``.
    """
    if not recipe:
        raise ValueError("fixture recipe is empty")
    rng = np.random.default_rng(seed)
    values, ids = [], []
    for name, count, noise in recipe:
        if name not in ARCHETYPES:
            raise ValueError(f"unknown archetype {name!r}; choose from {sorted(ARCHETYPES)}")
        if count <= 0:
            raise ValueError("archetype count must be positive")
        if noise < 0:
            raise ValueError("noise level must be non-negative")
        base = ARCHETYPES[name].base
        for i in range(count):
            raw = base + noise * rng.standard_normal(T) if noise > 0 else base
            values.append(normalize(raw).values)
            ids.append(f"{name}_{i:04d}")
    return Dataset(np.array(values), ids)


def readings_csv(rows: Iterable[tuple[str, datetime, float]]) -> bytes:
    """Render readings in the ingest CSV format (handy for tests and demos)."""
    buf = io.StringIO()
    buf.write(",".join(HEADER) + "\n")
    for hid, stamp, kwh in rows:
        buf.write(f"{hid},{stamp.isoformat()},{kwh!r}\n")
    return buf.getvalue().encode("utf-8")


def profiles_to_readings(dataset, households: int = 4, start: str = "2017-03-01",
                         base_kwh: float = 0.1, scale_kwh: float = 2.5) -> bytes:
    """Turn profiles back into ingestable meter CSV.

    Profile ``i`` becomes household ``h{i % households}`` on day
    ``i // households`` with ``kwh = base_kwh + scale_kwh * value``; ingesting the
    result recovers the profiles up to the 6-decimal rounding of the readings.
    """
    X = np.asarray(getattr(dataset, "values", dataset), dtype=np.float64).reshape(-1, T)
    t0 = datetime.fromisoformat(start)
    rows = []
    for i, prof in enumerate(X):
        day = t0 + timedelta(days=i // households)
        for hour, v in enumerate(prof):
            rows.append((f"h{i % households}", day + timedelta(hours=hour),
                         round(base_kwh + scale_kwh * float(v), 6)))
    return readings_csv(rows)
