"""Canonical data model for frequency-regular time series.

Series live on a fixed grid described by (start, freq, index). Long-format
CSV (`unique_id,ds,y[,exo...]`) is the interchange format; gaps on the grid
are filled at ingestion according to a fill policy. Irregular timestamps are
rejected, never resampled.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Iterable, Iterator, Mapping, TextIO

import numpy as np

__all__ = [
    "Frequency",
    "FillPolicy",
    "Role",
    "TimeSeries",
    "Dataset",
    "IngestError",
    "ingest_long_csv",
    "write_long_csv",
    "last_window_split",
    "rolling_origins",
]


class IngestError(ValueError):
    """Raised for malformed or irregular long-format input."""


class Frequency(enum.Enum):
    """Supported observation frequencies with their fixed constants.

    season_length: Hourly=24, Daily=7, Weekly=52, Monthly=12.
    default_horizon: Hourly=24, Daily=7, Weekly=1, Monthly=12.
    """

    HOURLY = ("hourly", 24, 24, "%Y-%m-%dT%H")
    DAILY = ("daily", 7, 7, "%Y-%m-%d")
    WEEKLY = ("weekly", 52, 1, "%Y-%m-%d")
    MONTHLY = ("monthly", 12, 12, "%Y-%m")

    def __init__(self, label: str, season_length: int, default_horizon: int, ds_format: str):
        self.label = label
        self.season_length = season_length
        self.default_horizon = default_horizon
        self.ds_format = ds_format

    @classmethod
    def from_name(cls, name: str) -> "Frequency":
        for f in cls:
            if f.label == name.lower():
                return f
        raise ValueError(f"unknown frequency {name!r}; expected one of "
                         f"{[f.label for f in cls]}")

    def parse_ds(self, text: str) -> datetime:
        try:
            return datetime.strptime(text, self.ds_format)
        except ValueError as exc:
            raise IngestError(f"unparseable timestamp {text!r} for {self.label} "
                              f"frequency (expected {self.ds_format})") from exc

    def format_ds(self, ts: datetime) -> str:
        return ts.strftime(self.ds_format)

    def step(self, ts: datetime, n: int = 1) -> datetime:
        """Timestamp n grid steps after ts."""
        if self is Frequency.MONTHLY:
            total = ts.year * 12 + (ts.month - 1) + n
            return ts.replace(year=total // 12, month=total % 12 + 1)
        if self is Frequency.WEEKLY:
            return ts + timedelta(days=7 * n)
        if self is Frequency.DAILY:
            return ts + timedelta(days=n)
        return ts + timedelta(hours=n)

    def index_of(self, ts: datetime, start: datetime) -> int:
        """Grid position of ts relative to start; raises if off-grid."""
        if self is Frequency.MONTHLY:
            if ts.day != start.day:
                raise IngestError(f"timestamp {ts} not on the monthly grid anchored at {start}")
            return (ts.year - start.year) * 12 + (ts.month - start.month)
        delta = ts - start
        unit = {Frequency.WEEKLY: timedelta(days=7),
                Frequency.DAILY: timedelta(days=1),
                Frequency.HOURLY: timedelta(hours=1)}[self]
        steps, rem = divmod(delta, unit)
        if rem:
            raise IngestError(f"timestamp {ts} not on the {self.label} grid anchored at {start}")
        return steps


class FillPolicy(enum.Enum):
    FORWARD_THEN_BACKFILL = "ffill"
    ZERO = "zero"
    ERROR = "error"


class Role(enum.Enum):
    SOURCE = "source"
    TARGET = "target"


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """One identified series on a regular grid, with optional exogenous channels.

    Exogenous channels are aligned to `values` and may extend past the last
    observation, carrying future covariates for the forecast window.
    """

    id: str
    start: datetime
    freq: Frequency
    values: np.ndarray
    exogenous: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.atleast_1d(self.values)))
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError(f"series {self.id!r}: values must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"series {self.id!r}: values contain non-finite entries")
        exo = {}
        for name, chan in self.exogenous.items():
            chan = _frozen(np.atleast_1d(chan))
            if chan.size < self.values.size:
                raise ValueError(f"series {self.id!r}: exogenous channel {name!r} shorter "
                                 f"than values ({chan.size} < {self.values.size})")
            if not np.all(np.isfinite(chan)):
                raise ValueError(f"series {self.id!r}: exogenous channel {name!r} has "
                                 f"non-finite entries")
            exo[name] = chan
        object.__setattr__(self, "exogenous", exo)

    def __len__(self) -> int:
        return int(self.values.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (self.id == other.id and self.start == other.start
                and self.freq is other.freq
                and np.array_equal(self.values, other.values)
                and set(self.exogenous) == set(other.exogenous)
                and all(np.array_equal(self.exogenous[k], other.exogenous[k])
                        for k in self.exogenous))

    @property
    def future_exo_length(self) -> int:
        """Steps of exogenous data available past the last observation."""
        if not self.exogenous:
            return 0
        return min(c.size for c in self.exogenous.values()) - len(self)

    def timestamps(self, count: int | None = None, offset: int = 0) -> list[datetime]:
        n = len(self) if count is None else count
        return [self.freq.step(self.start, offset + i) for i in range(n)]

    def replace_window(self, lo: int, hi: int, *, exo_hi: int | None = None) -> "TimeSeries":
        """Sub-series values[lo:hi], exogenous channels cut at exo_hi (default hi)."""
        exo_hi = hi if exo_hi is None else exo_hi
        return TimeSeries(
            id=self.id,
            start=self.freq.step(self.start, lo),
            freq=self.freq,
            values=self.values[lo:hi],
            exogenous={k: v[lo:exo_hi] for k, v in self.exogenous.items()},
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """A collection of same-frequency series playing a source or target role."""

    freq: Frequency
    series: tuple[TimeSeries, ...]
    role: Role = Role.TARGET

    def __post_init__(self):
        object.__setattr__(self, "series", tuple(self.series))
        ids = [s.id for s in self.series]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate series ids: {dup}")
        for s in self.series:
            if s.freq is not self.freq:
                raise ValueError(f"series {s.id!r} frequency {s.freq.label} does not match "
                                 f"dataset frequency {self.freq.label}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.freq is other.freq and self.role is other.role
                and self.series == other.series)

    def __len__(self) -> int:
        return len(self.series)

    def __iter__(self) -> Iterator[TimeSeries]:
        return iter(self.series)

    def get(self, series_id: str) -> TimeSeries:
        for s in self.series:
            if s.id == series_id:
                return s
        raise KeyError(series_id)


# ---------------------------------------------------------------------------
# Long-format CSV ingestion
# ---------------------------------------------------------------------------

_REQUIRED_COLUMNS = ("unique_id", "ds", "y")


def _parse_cell(text: str, what: str, uid: str, ds: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise IngestError(f"non-numeric {what} {text!r} at ({uid}, {ds})") from None
    if not math.isfinite(v):
        raise IngestError(f"non-finite {what} {text!r} at ({uid}, {ds})")
    return v


def _fill(cells: list[float | None], policy: FillPolicy, uid: str, what: str) -> list[float]:
    """Fill None holes per policy. ForwardThenBackFill copies the previous
    observed value; leading holes copy the first observed value."""
    if all(c is None for c in cells):
        raise IngestError(f"series {uid!r}: {what} has no observed values")
    missing = [i for i, c in enumerate(cells) if c is None]
    if not missing:
        return cells  # type: ignore[return-value]
    if policy is FillPolicy.ERROR:
        raise IngestError(f"series {uid!r}: {what} has {len(missing)} gap(s) on the grid "
                          f"and fill policy is Error")
    if policy is FillPolicy.ZERO:
        return [0.0 if c is None else c for c in cells]
    out: list[float] = []
    last: float | None = None
    for c in cells:
        if c is not None:
            last = c
        out.append(last)  # type: ignore[arg-type]
    first = next(c for c in cells if c is not None)
    return [first if c is None else c for c in out]


def ingest_long_csv(stream: TextIO | Iterable[str], freq: Frequency,
                    fill_policy: FillPolicy = FillPolicy.FORWARD_THEN_BACKFILL,
                    role: Role = Role.TARGET) -> Dataset:
    """Parse long-format CSV into a Dataset.

    Header must be `unique_id,ds,y` plus optional exogenous columns. Rows are
    sorted by ds per series; grid gaps are filled per `fill_policy`. When
    exogenous columns exist, trailing rows with a blank y carry future
    covariates past the last observation.
    """
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("empty stream") from None
    header = [h.strip() for h in header]
    if tuple(header[:3]) != _REQUIRED_COLUMNS:
        raise IngestError(f"header must start with {','.join(_REQUIRED_COLUMNS)}, "
                          f"got {','.join(header) or '<nothing>'}")
    exo_names = header[3:]
    if len(set(exo_names)) != len(exo_names):
        raise IngestError("duplicate exogenous column names")

    # uid -> list of (ts, y_text, [exo_texts]); insertion order of uids preserved
    rows: dict[str, list[tuple[datetime, str, list[str]]]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise IngestError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        uid = row[0].strip()
        if not uid:
            raise IngestError(f"line {lineno}: empty unique_id")
        ts = freq.parse_ds(row[1].strip())
        rows.setdefault(uid, []).append((ts, row[2].strip(), [c.strip() for c in row[3:]]))
    if not rows:
        raise IngestError("stream contains no data rows")

    series = []
    for uid, items in rows.items():
        items.sort(key=lambda r: r[0])
        start = items[0][0]
        n_grid = freq.index_of(items[-1][0], start) + 1
        y_cells: list[float | None] = [None] * n_grid
        exo_cells: list[list[float | None]] = [[None] * n_grid for _ in exo_names]
        seen: set[int] = set()
        for ts, y_text, exo_texts in items:
            idx = freq.index_of(ts, start)
            if idx in seen:
                raise IngestError(f"duplicate (unique_id, ds) pair ({uid}, {freq.format_ds(ts)})")
            seen.add(idx)
            if y_text:
                y_cells[idx] = _parse_cell(y_text, "y", uid, freq.format_ds(ts))
            for j, cell in enumerate(exo_texts):
                if cell:
                    exo_cells[j][idx] = _parse_cell(cell, exo_names[j], uid, freq.format_ds(ts))

        observed = [i for i, c in enumerate(y_cells) if c is not None]
        if not observed:
            raise IngestError(f"series {uid!r} has no observed y values")
        last_obs = observed[-1]
        if last_obs < n_grid - 1 and not exo_names:
            # trailing blank-y rows without exogenous columns are plain gaps
            last_obs = n_grid - 1
        y = _fill(y_cells[: last_obs + 1], fill_policy, uid, "y")
        exo = {name: np.array(_fill(cells, fill_policy, uid, f"exogenous {name!r}"))
               for name, cells in zip(exo_names, exo_cells)}
        series.append(TimeSeries(id=uid, start=start, freq=freq,
                                 values=np.array(y), exogenous=exo))
    return Dataset(freq=freq, series=tuple(series), role=role)


def write_long_csv(ds: Dataset, stream: TextIO) -> None:
    """Serialize a Dataset as long-format CSV (inverse of ingest_long_csv).

    Future covariate steps are written as rows with a blank y. All series must
    share the same exogenous channel names.
    """
    channels: list[str] = list(ds.series[0].exogenous) if ds.series else []
    for s in ds.series:
        if list(s.exogenous) != channels:
            raise ValueError(f"series {s.id!r} exogenous channels {list(s.exogenous)} differ "
                             f"from {channels}; cannot serialize one file")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow([*_REQUIRED_COLUMNS, *channels])
    for s in ds.series:
        total = len(s) + s.future_exo_length
        for i in range(total):
            ts = ds.freq.format_ds(ds.freq.step(s.start, i))
            y = repr(float(s.values[i])) if i < len(s) else ""
            exo = [repr(float(s.exogenous[c][i])) for c in channels]
            writer.writerow([s.id, ts, y, *exo])


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def last_window_split(ds: Dataset, horizon: int) -> tuple[Dataset, Dataset]:
    """Split off the final `horizon` observations of every series.

    Train series keep their history plus the window's future covariates; test
    series hold exactly the final window.
    """
    if horizon < 1:
        raise ValueError("horizon must be positive")
    for s in ds.series:
        if len(s) <= horizon:
            raise ValueError(f"series {s.id!r} has length {len(s)} <= horizon {horizon}")
    train, test = [], []
    for s in ds.series:
        cut = len(s) - horizon
        train.append(s.replace_window(0, cut, exo_hi=len(s)))
        test.append(s.replace_window(cut, len(s), exo_hi=len(s) + s.future_exo_length))
    return (Dataset(ds.freq, tuple(train), ds.role),
            Dataset(ds.freq, tuple(test), ds.role))


def rolling_origins(series: TimeSeries, horizon: int,
                    n_windows: int) -> list[tuple[int, np.ndarray]]:
    """Back-to-back evaluation windows ending at the series end.

    Returns (history cut index, actuals) per window, oldest first; the windows
    tile the final horizon*n_windows observations exactly.
    """
    if horizon < 1 or n_windows < 1:
        raise ValueError("horizon and n_windows must be positive")
    if len(series) <= horizon * n_windows:
        raise ValueError(f"series {series.id!r} has length {len(series)}, needs "
                         f"> {horizon * n_windows} for {n_windows} windows of {horizon}")
    out = []
    for k in range(1, n_windows + 1):
        cut = len(series) - (n_windows - k + 1) * horizon
        out.append((cut, series.values[cut:cut + horizon]))
    return out
