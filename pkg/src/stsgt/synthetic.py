"""Synthetic epidemic curves written in the two public raw-file layouts.

Used by the demos and the test-suite when the public files are not at hand.
Incidence is a sum of waves that travel outward from a seed location, so
nearby vertices are correlated and later vertices lag earlier ones; weekly
reporting rhythm, Poisson noise and occasional downward corrections of the
cumulative totals are layered on top.
"""

from __future__ import annotations

import datetime as dt
from typing import Sequence

import numpy as np
import pandas as pd

from .data import US_STATES

# approximate geographic centres (lat, lon)
STATE_CENTERS: dict[str, tuple[float, float]] = {
    "Alabama": (32.8, -86.8), "Alaska": (61.4, -152.3), "Arizona": (34.2, -111.7),
    "Arkansas": (34.9, -92.4), "California": (37.2, -119.5), "Colorado": (39.0, -105.5),
    "Connecticut": (41.6, -72.7), "Delaware": (39.0, -75.5), "District of Columbia": (38.9, -77.0),
    "Florida": (28.6, -82.4), "Georgia": (32.7, -83.4), "Hawaii": (20.8, -156.3),
    "Idaho": (44.4, -114.6), "Illinois": (40.0, -89.2), "Indiana": (39.9, -86.3),
    "Iowa": (42.1, -93.5), "Kansas": (38.5, -98.4), "Kentucky": (37.5, -85.3),
    "Louisiana": (31.1, -92.0), "Maine": (45.4, -69.2), "Maryland": (39.0, -76.8),
    "Massachusetts": (42.3, -71.8), "Michigan": (44.3, -85.4), "Minnesota": (46.3, -94.3),
    "Mississippi": (32.7, -89.7), "Missouri": (38.4, -92.5), "Montana": (47.0, -109.6),
    "Nebraska": (41.5, -99.8), "Nevada": (39.3, -116.6), "New Hampshire": (43.7, -71.6),
    "New Jersey": (40.2, -74.7), "New Mexico": (34.4, -106.1), "New York": (42.9, -75.5),
    "North Carolina": (35.6, -79.4), "North Dakota": (47.5, -100.5), "Ohio": (40.3, -82.8),
    "Oklahoma": (35.6, -97.5), "Oregon": (43.9, -120.6), "Pennsylvania": (40.9, -77.8),
    "Rhode Island": (41.7, -71.5), "South Carolina": (33.9, -80.9), "South Dakota": (44.4, -100.2),
    "Tennessee": (35.9, -86.4), "Texas": (31.5, -99.3), "Utah": (39.3, -111.7),
    "Vermont": (44.1, -72.7), "Virginia": (37.5, -78.9), "Washington": (47.4, -120.5),
    "West Virginia": (38.6, -80.6), "Wisconsin": (44.6, -89.9), "Wyoming": (43.0, -107.6),
}

MICHIGAN_COUNTIES: tuple[str, ...] = (
    "Alcona", "Alger", "Allegan", "Alpena", "Antrim", "Arenac", "Baraga", "Barry", "Bay",
    "Benzie", "Berrien", "Branch", "Calhoun", "Cass", "Charlevoix", "Cheboygan", "Chippewa",
    "Clare", "Clinton", "Crawford", "Delta", "Dickinson", "Eaton", "Emmet", "Genesee",
    "Gladwin", "Gogebic", "Grand Traverse", "Gratiot", "Hillsdale", "Houghton", "Huron",
    "Ingham", "Ionia", "Iosco", "Iron", "Isabella", "Jackson", "Kalamazoo", "Kalkaska", "Kent",
    "Keweenaw", "Lake", "Lapeer", "Leelanau", "Lenawee", "Livingston", "Luce", "Mackinac",
    "Macomb", "Manistee", "Marquette", "Mason", "Mecosta", "Menominee", "Midland", "Missaukee",
    "Monroe", "Montcalm", "Montmorency", "Muskegon", "Newaygo", "Oakland", "Oceana", "Ogemaw",
    "Ontonagon", "Osceola", "Oscoda", "Otsego", "Ottawa", "Presque Isle", "Roscommon",
    "Saginaw", "St. Clair", "St. Joseph", "Sanilac", "Schoolcraft", "Shiawassee", "Tuscola",
    "Van Buren", "Washtenaw", "Wayne", "Wexford",
)

# rows the ingestion filters must drop
_TERRITORIES = (("Puerto Rico", 18.2, -66.5), ("Guam", 13.4, 144.8))
_SHIPS = ("Diamond Princess", "Grand Princess")


def epidemic_curves(
    coords: np.ndarray,
    days: int,
    *,
    scale: np.ndarray | float = 1000.0,
    waves: int = 4,
    seed: int = 0,
) -> np.ndarray:
    """Expected daily incidence, ``days x N``, from waves spreading across ``coords``."""
    rng = np.random.default_rng(seed)
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    scale = np.broadcast_to(np.asarray(scale, dtype=np.float64), (n,))
    t = np.arange(days, dtype=np.float64)[:, None]
    curve = np.zeros((days, n))
    for w in range(waves):
        origin = coords[rng.integers(n)]
        dist = np.sqrt(((coords - origin) ** 2).sum(axis=1))
        peak = (w + 0.5) * days / waves + rng.uniform(-0.1, 0.1) * days / waves
        delay = 1.5 * dist * rng.uniform(0.6, 1.4)
        width = days / waves * rng.uniform(0.12, 0.22)
        height = rng.uniform(0.4, 1.0) * np.exp(rng.normal(0.0, 0.25, n))
        curve += height * np.exp(-0.5 * ((t - peak - delay) / width) ** 2)
    weekly = 1.0 + 0.25 * np.sin(2 * np.pi * t / 7.0 + rng.uniform(0, 2 * np.pi))
    return 0.02 * scale + scale * curve * weekly


def _cumulative_counts(rate: np.ndarray, rng: np.random.Generator, corrections: float) -> np.ndarray:
    daily = rng.poisson(np.maximum(rate, 0.0)).astype(np.int64)
    cum = np.cumsum(daily, axis=0)
    if corrections > 0:
        # occasional downward revisions, like real reporting fixes
        # a revised day dips below the previous total, so its daily diff goes negative
        hits = rng.random(cum.shape) < corrections
        dip = daily + rng.integers(1, 6, cum.shape)
        cum = cum - np.where(hits, np.minimum(dip, cum), 0)
    return cum


def write_county_csv(
    path,
    *,
    start="2020-01-22",
    end="2021-11-30",
    states: Sequence[str] = US_STATES,
    counties_per_state: int = 3,
    detailed_state: str | None = "Michigan",
    field: str = "cases",
    seed: int = 0,
    corrections: float = 0.002,
) -> pd.DataFrame:
    """County-row cumulative table in the wide ``M/D/YY`` layout.

    ``detailed_state`` gets one row per real county name (83 for Michigan);
    other states get ``counties_per_state`` placeholder counties.  Unassigned,
    out-of-state, correctional, territory and cruise-ship rows are included
    so that filters have something to remove.
    """
    rng = np.random.default_rng(seed)
    start, end = pd.Timestamp(start), pd.Timestamp(end)
    dates = pd.date_range(start, end, freq="D")
    rows: list[dict] = []

    def county_rows(state: str, names: Sequence[str], center):
        for name in names:
            lat = center[0] + rng.normal(0.0, 0.6)
            lon = center[1] + rng.normal(0.0, 0.8)
            rows.append({"Admin2": name, "Province_State": state, "Lat": lat, "Long_": lon})

    for state in states:
        center = STATE_CENTERS.get(state, (rng.uniform(25, 48), rng.uniform(-124, -67)))
        if state == detailed_state:
            names = MICHIGAN_COUNTIES if state == "Michigan" else [f"{state} County {i + 1}" for i in range(83)]
        else:
            names = [f"{state} County {i + 1}" for i in range(counties_per_state)]
        county_rows(state, names, center)
        rows.append({"Admin2": "Unassigned", "Province_State": state, "Lat": 0.0, "Long_": 0.0})
        rows.append({"Admin2": f"Out of {state[:2].upper()}", "Province_State": state, "Lat": 0.0, "Long_": 0.0})
        if state == detailed_state:
            rows.append({"Admin2": "Federal Correctional Facility (FCI)", "Province_State": state, "Lat": 0.0, "Long_": 0.0})
            rows.append({"Admin2": f"{state} Department of Corrections (MDOC)", "Province_State": state, "Lat": 0.0, "Long_": 0.0})
    for name, lat, lon in _TERRITORIES:
        rows.append({"Admin2": "Some County", "Province_State": name, "Lat": lat, "Long_": lon})
    for ship in _SHIPS:
        rows.append({"Admin2": None, "Province_State": ship, "Lat": 0.0, "Long_": 0.0})

    meta = pd.DataFrame(rows)
    coords = meta[["Lat", "Long_"]].to_numpy()
    coords = np.where(coords == 0.0, np.array([[39.0, -98.0]]), coords)
    scale = np.exp(rng.normal(np.log(60.0), 0.9, len(meta)))
    if field == "deaths":
        scale = scale * 0.015
    rate = epidemic_curves(coords, len(dates), scale=scale, seed=seed + 1)
    # nothing reported before the first few weeks
    rate[: min(40, len(dates) // 4)] *= 0.02
    cum = _cumulative_counts(rate, rng, corrections)

    meta.insert(0, "UID", np.arange(84000000, 84000000 + len(meta)))
    meta.insert(1, "iso2", "US")
    meta["Country_Region"] = "US"
    meta["Combined_Key"] = meta["Admin2"].fillna("") + ", " + meta["Province_State"] + ", US"
    date_cols = [f"{d.month}/{d.day}/{d.strftime('%y')}" for d in dates]
    table = pd.concat([meta, pd.DataFrame(cum.T, columns=date_cols)], axis=1)
    table.to_csv(path, index=False)
    return table


def write_state_csv(
    path,
    *,
    start="2020-01-21",
    end="2021-11-30",
    states: Sequence[str] = US_STATES,
    late_state: str | None = "West Virginia",
    late_start="2020-03-18",
    seed: int = 0,
    corrections: float = 0.002,
) -> pd.DataFrame:
    """Long ``date,state,fips,cases,deaths`` cumulative rows.

    Every state reports from ``start`` except ``late_state``, which first
    appears on ``late_start``.
    """
    rng = np.random.default_rng(seed)
    dates = pd.date_range(pd.Timestamp(start), pd.Timestamp(end), freq="D")
    names = list(states) + ["Puerto Rico"]
    coords = np.array([STATE_CENTERS.get(s, (18.2, -66.5)) for s in names])
    scale = np.exp(rng.normal(np.log(800.0), 0.8, len(names)))
    cases = _cumulative_counts(epidemic_curves(coords, len(dates), scale=scale, seed=seed + 1), rng, corrections)
    deaths = _cumulative_counts(epidemic_curves(coords, len(dates), scale=scale * 0.015, seed=seed + 2), rng, corrections)
    frames = []
    for j, name in enumerate(names):
        frame = pd.DataFrame({"date": dates.strftime("%Y-%m-%d"), "state": name, "fips": j + 1,
                              "cases": cases[:, j], "deaths": deaths[:, j]})
        if name == late_state:
            frame = frame[pd.to_datetime(frame["date"]) >= pd.Timestamp(late_start)]
        frames.append(frame)
    table = pd.concat(frames).sort_values(["date", "state"], kind="stable")
    table.to_csv(path, index=False)
    return table


def toy_series(n: int = 5, days: int = 120, seed: int = 0):
    """A small in-memory :class:`~stsgt.data.TimeSeries` with coordinates."""
    from .data import TimeSeries

    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, 10.0, (n, 2))
    rate = epidemic_curves(coords, days, scale=rng.uniform(50, 200, n), waves=2, seed=seed)
    values = rng.poisson(rate).astype(np.float64)
    dates = np.arange(np.datetime64(dt.date(2021, 1, 1)), np.datetime64(dt.date(2021, 1, 1)) + days)
    return TimeSeries(dates, tuple(f"v{i}" for i in range(n)), values, coords)
