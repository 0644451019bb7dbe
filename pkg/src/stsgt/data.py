"""Case-count ingestion, chronological splits, z-scoring and sliding windows.

Two raw layouts are supported:

* county-wide: one row per county, metadata columns (county, state, lat,
  lon) followed by one cumulative-count column per date in ``M/D/YY`` form;
* state-long: ``date,state,fips,cases,deaths`` rows with cumulative counts.

Both are turned into a :class:`TimeSeries` of daily counts, shape T x N x 1.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
import pandas as pd

from .errors import CoverageError, DataFormatError, InsufficientDataError, SchemaError

US_STATES: tuple[str, ...] = (
    "Alabama", "Alaska", "Arizona", "Arkansas", "California", "Colorado",
    "Connecticut", "Delaware", "District of Columbia", "Florida", "Georgia",
    "Hawaii", "Idaho", "Illinois", "Indiana", "Iowa", "Kansas", "Kentucky",
    "Louisiana", "Maine", "Maryland", "Massachusetts", "Michigan", "Minnesota",
    "Mississippi", "Missouri", "Montana", "Nebraska", "Nevada", "New Hampshire",
    "New Jersey", "New Mexico", "New York", "North Carolina", "North Dakota",
    "Ohio", "Oklahoma", "Oregon", "Pennsylvania", "Rhode Island",
    "South Carolina", "South Dakota", "Tennessee", "Texas", "Utah", "Vermont",
    "Virginia", "Washington", "West Virginia", "Wisconsin", "Wyoming",
)

_NON_COUNTY = re.compile(r"^(unassigned|out of\b)|correction|\(fci\)|\(mdoc\)", re.IGNORECASE)
_DATE_HEADER = re.compile(r"^\d{1,2}/\d{1,2}/\d{2}$")


@dataclass(frozen=True)
class CountyColumns:
    county: str = "Admin2"
    state: str = "Province_State"
    lat: str = "Lat"
    lon: str = "Long_"


@dataclass(frozen=True)
class StateColumns:
    date: str = "date"
    state: str = "state"
    cases: str = "cases"
    deaths: str = "deaths"


@dataclass(frozen=True)
class TimeSeries:
    """Daily values on a contiguous calendar, shape T x N x F."""

    dates: np.ndarray
    vertex_names: tuple[str, ...]
    values: np.ndarray
    coords: np.ndarray | None = None

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.shape[:2] != (len(dates), len(self.vertex_names)):
            raise DataFormatError(
                f"values shape {values.shape} does not match {len(dates)} dates x {len(self.vertex_names)} vertices"
            )
        if len(dates) > 1 and not np.all(np.diff(dates).astype(int) == 1):
            raise DataFormatError("dates must increase by exactly one day")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "vertex_names", tuple(self.vertex_names))

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def num_vertices(self) -> int:
        return len(self.vertex_names)

    @property
    def start(self) -> dt.date:
        return self.dates[0].item()

    @property
    def end(self) -> dt.date:
        return self.dates[-1].item()

    def between(self, start=None, end=None) -> "TimeSeries":
        """Inclusive date slice."""
        mask = np.ones(len(self.dates), dtype=bool)
        if start is not None:
            mask &= self.dates >= np.datetime64(_as_date(start), "D")
        if end is not None:
            mask &= self.dates <= np.datetime64(_as_date(end), "D")
        return TimeSeries(self.dates[mask], self.vertex_names, self.values[mask], self.coords)

    def index_of(self, date) -> int:
        hits = np.flatnonzero(self.dates == np.datetime64(_as_date(date), "D"))
        if hits.size == 0:
            raise KeyError(f"{_as_date(date)} not in series ({self.start}..{self.end})")
        return int(hits[0])

    def select(self, names: Sequence[str]) -> "TimeSeries":
        idx = [self.vertex_names.index(n) for n in names]
        coords = None if self.coords is None else self.coords[idx]
        return TimeSeries(self.dates, names, self.values[:, idx], coords)


def _as_date(value) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[D]").item()
    return dt.date.fromisoformat(str(value))


def cumulative_to_daily(cumulative: np.ndarray, clamp: bool = True) -> np.ndarray:
    """First difference along axis 0; the first row keeps its raw value."""
    cumulative = np.asarray(cumulative, dtype=np.float64)
    daily = np.diff(cumulative, axis=0, prepend=np.zeros_like(cumulative[:1]))
    if clamp:
        np.maximum(daily, 0.0, out=daily)
    return daily


def is_county_vertex(name) -> bool:
    """False for unassigned, out-of-state and correctional-facility rows."""
    if not isinstance(name, str) or not name.strip():
        return False
    return _NON_COUNTY.search(name.strip()) is None


def _mean_coords(frame: pd.DataFrame, lat: str, lon: str) -> tuple[float, float]:
    ok = frame[lat].notna() & frame[lon].notna() & (frame[lat] != 0) & (frame[lon] != 0)
    if not ok.any():
        return (math.nan, math.nan)
    return (float(frame.loc[ok, lat].mean()), float(frame.loc[ok, lon].mean()))


def ingest_county_cumulative(
    path,
    level: str = "national",
    state: str | None = None,
    *,
    start=None,
    end=None,
    clamp: bool = True,
    states: Sequence[str] | None = US_STATES,
    columns: CountyColumns = CountyColumns(),
) -> TimeSeries:
    """Daily series from a county-rows x date-columns cumulative table.

    ``national`` sums counties per state (one vertex per state in ``states``);
    ``state`` keeps each county of ``state`` as its own vertex.  Vertex
    coordinates are the mean of the retained rows' non-zero lat/lon.
    """
    if level not in ("national", "state"):
        raise ValueError(f"level must be 'national' or 'state', got {level!r}")
    if level == "state" and not state:
        raise ValueError("level='state' needs a state name")
    frame = pd.read_csv(path, dtype={columns.county: str, columns.state: str})
    required = [columns.county, columns.state, columns.lat, columns.lon]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: missing required columns {missing}")
    date_cols = [c for c in frame.columns if _DATE_HEADER.match(str(c))]
    if not date_cols:
        raise SchemaError(f"{path}: no M/D/YY date columns found")
    dates = pd.to_datetime(pd.Series(date_cols), format="%m/%d/%y").to_numpy().astype("datetime64[D]")
    steps = np.diff(dates).astype(int)
    if np.any(steps != 1):
        bad = date_cols[int(np.flatnonzero(steps != 1)[0]) + 1]
        raise DataFormatError(f"{path}: date columns are not consecutive days (at {bad!r})")

    frame = frame[frame[columns.county].map(is_county_vertex)]
    if level == "national":
        if states is not None:
            frame = frame[frame[columns.state].isin(states)]
            present = set(frame[columns.state])
            names = [s for s in states if s in present]
        else:
            names = sorted(set(frame[columns.state]))
        groups = frame.groupby(columns.state, sort=False)
        blocks = [groups.get_group(n) for n in names]
    else:
        frame = frame[frame[columns.state] == state].sort_values(columns.county, kind="stable")
        if frame.empty:
            raise SchemaError(f"{path}: no county rows for state {state!r}")
        names = list(frame[columns.county])
        blocks = [frame.iloc[[i]] for i in range(len(frame))]

    # difference per county row, then sum rows belonging to one vertex
    daily = np.stack(
        [cumulative_to_daily(b[date_cols].to_numpy(dtype=np.float64).T, clamp=False).sum(axis=1) for b in blocks],
        axis=1,
    )
    coords = [_mean_coords(b, columns.lat, columns.lon) for b in blocks]
    if clamp:
        np.maximum(daily, 0.0, out=daily)
    ts = TimeSeries(dates, tuple(names), daily, np.array(coords, dtype=np.float64).reshape(-1, 2))
    return ts.between(start, end) if (start is not None or end is not None) else ts


def ingest_state_cumulative(
    path,
    field: str = "cases",
    *,
    start=None,
    end=None,
    clamp: bool = True,
    strict: bool = True,
    states: Sequence[str] | None = US_STATES,
    columns: StateColumns = StateColumns(),
) -> TimeSeries:
    """Daily series from long-format ``date,state,...,cases,deaths`` rows.

    Without ``start`` the series begins on the first date on which every
    retained state has reported.  With ``start`` given and ``strict`` on, any
    retained state lacking a row on that date raises :class:`CoverageError`.
    """
    if field not in ("cases", "deaths"):
        raise ValueError(f"field must be 'cases' or 'deaths', got {field!r}")
    frame = pd.read_csv(path, dtype={columns.state: str})
    value_col = columns.cases if field == "cases" else columns.deaths
    missing = [c for c in (columns.date, columns.state, value_col) if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: missing required columns {missing}")
    try:
        frame[columns.date] = pd.to_datetime(frame[columns.date], format="%Y-%m-%d")
    except ValueError as exc:
        raise DataFormatError(f"{path}: unparseable date column: {exc}") from None
    if states is not None:
        frame = frame[frame[columns.state].isin(states)]
    if frame.empty:
        raise SchemaError(f"{path}: no rows for the retained states")
    if frame.duplicated([columns.date, columns.state]).any():
        raise DataFormatError(f"{path}: duplicate (date, state) rows")

    wide = frame.pivot(index=columns.date, columns=columns.state, values=value_col)
    full = pd.date_range(wide.index.min(), wide.index.max(), freq="D")
    wide = wide.reindex(full)
    names = [s for s in states if s in wide.columns] if states is not None else sorted(wide.columns)
    wide = wide[names]
    first_seen = wide.apply(lambda col: col.first_valid_index())

    if start is None:
        start_ts = first_seen.max()
    else:
        start_ts = pd.Timestamp(_as_date(start))
        if strict:
            if start_ts in wide.index:
                absent = [n for n in names if pd.isna(wide.at[start_ts, n])]
            else:
                absent = list(names)
            if absent:
                raise CoverageError(
                    f"{path}: states without data on {start_ts.date()}: {', '.join(absent)}", absent
                )

    before_first = wide.index.to_numpy()[:, None] < first_seen.to_numpy()[None, :]
    wide = wide.mask(before_first, 0.0).ffill().fillna(0.0)
    daily = cumulative_to_daily(wide.to_numpy(dtype=np.float64), clamp=clamp)
    ts = TimeSeries(wide.index.to_numpy().astype("datetime64[D]"), tuple(names), daily)
    return ts.between(start_ts.date(), end)


# ---------------------------------------------------------------------------
# splits and normalisation


@dataclass(frozen=True)
class SplitSpec:
    """Either fractions (train, val, test) or the first dates of val and test."""

    fractions: tuple[float, float, float] | None = (0.8, 0.1, 0.1)
    val_start: dt.date | None = None
    test_start: dt.date | None = None

    @classmethod
    def by_dates(cls, val_start, test_start) -> "SplitSpec":
        return cls(None, _as_date(val_start), _as_date(test_start))


SPLIT_NAMES = ("train", "val", "test")


def chronological_split(
    ts: TimeSeries, spec: SplitSpec = SplitSpec(), min_length: int | None = None
) -> tuple[TimeSeries, TimeSeries, TimeSeries]:
    """Contiguous train/val/test pieces in calendar order.

    Fractional splits floor the val and test sizes and hand the remainder to
    train.
    """
    total = len(ts)
    if spec.val_start is not None and spec.test_start is not None:
        v = int((np.datetime64(spec.val_start, "D") - ts.dates[0]).astype(int))
        t = int((np.datetime64(spec.test_start, "D") - ts.dates[0]).astype(int))
        if not 0 < v < t < total:
            raise InsufficientDataError(
                f"split dates {spec.val_start}/{spec.test_start} do not partition {ts.start}..{ts.end}"
            )
        bounds = (v, t)
    else:
        fractions = spec.fractions
        if fractions is None or len(fractions) != 3 or not math.isclose(sum(fractions), 1.0):
            raise ValueError(f"fractions must be three numbers summing to 1, got {fractions}")
        n_val = math.floor(fractions[1] * total)
        n_test = math.floor(fractions[2] * total)
        n_train = total - n_val - n_test
        bounds = (n_train, n_train + n_val)
    pieces = (
        TimeSeries(ts.dates[: bounds[0]], ts.vertex_names, ts.values[: bounds[0]], ts.coords),
        TimeSeries(ts.dates[bounds[0]: bounds[1]], ts.vertex_names, ts.values[bounds[0]: bounds[1]], ts.coords),
        TimeSeries(ts.dates[bounds[1]:], ts.vertex_names, ts.values[bounds[1]:], ts.coords),
    ) if bounds[0] > 0 else None
    if pieces is None:
        raise InsufficientDataError(f"series of {total} days too short to split")
    if min_length is not None:
        for name, piece in zip(SPLIT_NAMES, pieces):
            if len(piece) < min_length:
                raise InsufficientDataError(
                    f"{name} split has {len(piece)} days; at least {min_length} (M+H) are needed"
                )
    return pieces


STD_FLOOR = 1e-8


@dataclass(frozen=True)
class NormStats:
    mean: float
    std: float
    scope: str = ""

    def apply(self, values):
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse(self, values):
        return np.asarray(values, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "scope": self.scope}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(float(d["mean"]), float(d["std"]), str(d.get("scope", "")))


def compute_stats(values, scope: str = "") -> NormStats:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise InsufficientDataError("cannot normalise an empty split")
    return NormStats(float(values.mean()), max(float(values.std()), STD_FLOOR), scope)


def zscore(split: TimeSeries, scope: str = "") -> tuple[TimeSeries, NormStats]:
    """One scalar mean/std over every value in the split."""
    stats = compute_stats(split.values, scope)
    return TimeSeries(split.dates, split.vertex_names, stats.apply(split.values), split.coords), stats


# ---------------------------------------------------------------------------
# sliding windows


@dataclass(frozen=True)
class WindowSample:
    history: np.ndarray  # M x N x F, normalised
    target: np.ndarray  # H x N, raw units
    anchor_date: dt.date
    history_raw: np.ndarray | None = None


@dataclass(frozen=True)
class WindowSet:
    """All stride-1 windows of one split, stored as stacked arrays."""

    history: np.ndarray  # S x M x N x F, normalised
    history_raw: np.ndarray  # S x M x N x F
    target: np.ndarray  # S x H x N, raw
    anchor_dates: np.ndarray  # S, datetime64[D]
    stats: NormStats
    vertex_names: tuple[str, ...] = ()

    def __len__(self) -> int:
        return self.history.shape[0]

    def __getitem__(self, i: int) -> WindowSample:
        return WindowSample(self.history[i], self.target[i], self.anchor_dates[i].item(), self.history_raw[i])

    def __iter__(self) -> Iterator[WindowSample]:
        return (self[i] for i in range(len(self)))

    def subset(self, idx) -> "WindowSet":
        idx = np.asarray(idx)
        return WindowSet(self.history[idx], self.history_raw[idx], self.target[idx],
                         self.anchor_dates[idx], self.stats, self.vertex_names)


def window_count(length: int, m: int, h: int) -> int:
    return max(length - m - h + 1, 0)


def make_windows(split: TimeSeries, m: int, h: int, stats: NormStats | None = None) -> WindowSet:
    """Stride-1 (history, target) pairs that stay inside ``split``.

    ``split`` holds raw values; histories are normalised with ``stats``
    (the split's own statistics when omitted) and targets stay raw.
    """
    if m < 1 or h < 1:
        raise ValueError("M and H must be positive")
    length = len(split)
    if length < m + h:
        raise InsufficientDataError(f"split of {length} days cannot hold a window of M+H={m + h} days")
    if stats is None:
        stats = compute_stats(split.values)
    count = window_count(length, m, h)
    raw = split.values
    hist_idx = np.arange(count)[:, None] + np.arange(m)[None, :]
    targ_idx = np.arange(count)[:, None] + m + np.arange(h)[None, :]
    history_raw = raw[hist_idx]
    return WindowSet(
        history=stats.apply(history_raw),
        history_raw=history_raw,
        target=raw[targ_idx][..., 0],
        anchor_dates=split.dates[m - 1: m - 1 + count],
        stats=stats,
        vertex_names=split.vertex_names,
    )


@dataclass(frozen=True)
class WindowedDataset:
    train: WindowSet
    val: WindowSet
    test: WindowSet
    splits: tuple[TimeSeries, TimeSeries, TimeSeries] = field(repr=False)
    m: int = 12
    h: int = 12
    normalization: str = "per_split"

    def split(self, name: str) -> WindowSet:
        return getattr(self, name)

    @property
    def stats(self) -> dict[str, NormStats]:
        return {n: self.split(n).stats for n in SPLIT_NAMES}


def build_dataset(
    ts: TimeSeries,
    m: int = 12,
    h: int = 12,
    spec: SplitSpec = SplitSpec(),
    normalization: str = "per_split",
) -> WindowedDataset:
    """Split, normalise and window a series in one call.

    ``per_split`` normalises every split with its own statistics;
    ``train_stats`` reuses the training statistics everywhere.
    """
    if normalization not in ("per_split", "train_stats"):
        raise ValueError(f"unknown normalization {normalization!r}")
    pieces = chronological_split(ts, spec, min_length=m + h)
    train_stats = compute_stats(pieces[0].values, "train")
    sets = []
    for name, piece in zip(SPLIT_NAMES, pieces):
        stats = train_stats if normalization == "train_stats" else compute_stats(piece.values, name)
        sets.append(make_windows(piece, m, h, stats))
    return WindowedDataset(*sets, splits=pieces, m=m, h=h, normalization=normalization)


# ---------------------------------------------------------------------------
# audit CSV: ISO date, then one column per vertex


def format_number(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2**53 else repr(x)


def write_series_csv(ts: TimeSeries, path, feature: int = 0) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", *ts.vertex_names])
        for date, row in zip(ts.dates, ts.values[:, :, feature]):
            writer.writerow([str(date), *(format_number(v) for v in row)])


def read_series_csv(path, coords: np.ndarray | None = None) -> TimeSeries:
    frame = pd.read_csv(path)
    if frame.columns[0] != "date":
        raise SchemaError(f"{path}: first column must be 'date'")
    dates = pd.to_datetime(frame["date"], format="%Y-%m-%d").to_numpy().astype("datetime64[D]")
    names = tuple(frame.columns[1:])
    return TimeSeries(dates, names, frame[list(names)].to_numpy(dtype=np.float64), coords)
