"""Forecast metrics, per-horizon reports and reference baselines."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .data import TimeSeries, WindowSet
from .model import StsgtModel

log = logging.getLogger(__name__)

METRICS = ("mae", "rmsle", "rmse")


def _pair(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.size} true vs {y_pred.size} predicted values")
    if y_true.size == 0:
        raise ValueError("metrics need at least one value")
    return y_true, y_pred


def mae(y_true, y_pred) -> float:
    t, p = _pair(y_true, y_pred)
    return float(np.mean(np.abs(t - p)))


def rmse(y_true, y_pred) -> float:
    t, p = _pair(y_true, y_pred)
    return float(np.sqrt(np.mean((t - p) ** 2)))


def rmsle(y_true, y_pred) -> float:
    """Root mean squared difference of ``log(1 + y)``; predictions below 0 count as 0."""
    t, p = _pair(y_true, y_pred)
    if np.any(t < 0):
        raise ValueError("rmsle needs non-negative ground truth")
    p = np.maximum(p, 0.0)
    return float(np.sqrt(np.mean((np.log1p(t) - np.log1p(p)) ** 2)))


# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    """Per-horizon-step metrics pooled over windows x vertices, plus their mean."""

    per_step: list[dict[str, float]]
    algorithm: str = "STSGT"
    metadata: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.per_step)

    @property
    def mean(self) -> dict[str, float]:
        return {m: float(np.mean([s[m] for s in self.per_step])) for m in METRICS}

    def rows(self) -> list[tuple[str, str, float, float, float]]:
        """(algorithm, label, mae, rmsle, rmse) for every step plus the mean."""
        out = [(self.algorithm, f"Day {i + 1}", s["mae"], s["rmsle"], s["rmse"])
               for i, s in enumerate(self.per_step)]
        m = self.mean
        out.append((self.algorithm, f"{self.horizon} Days Mean", m["mae"], m["rmsle"], m["rmse"]))
        return out


def evaluate_forecasts(forecast: np.ndarray, target: np.ndarray, algorithm: str = "STSGT",
                       metadata: dict | None = None) -> MetricsReport:
    """Metrics for forecasts and targets shaped (windows, H, N)."""
    forecast = np.asarray(forecast, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if forecast.shape != target.shape or forecast.ndim != 3:
        raise ValueError(f"forecast {forecast.shape} and target {target.shape} must both be (S, H, N)")
    steps = []
    for h in range(target.shape[1]):
        t, p = target[:, h, :], forecast[:, h, :]
        steps.append({"mae": mae(t, p), "rmsle": rmsle(t, p), "rmse": rmse(t, p)})
    return MetricsReport(steps, algorithm, dict(metadata or {}))


class Forecaster(Protocol):
    name: str

    def forecast(self, windows: WindowSet) -> np.ndarray: ...


def evaluate(forecaster, windows: WindowSet, metadata: dict | None = None) -> MetricsReport:
    """Score a forecaster (or a trained model) on every window of a split."""
    if len(windows) == 0:
        raise ValueError("cannot evaluate an empty split")
    if isinstance(forecaster, StsgtModel):
        forecaster = ModelForecaster(forecaster)
    return evaluate_forecasts(forecaster.forecast(windows), windows.target, forecaster.name, metadata)


# ---------------------------------------------------------------------------
# forecasters


class ModelForecaster:
    name = "STSGT"

    def __init__(self, model: StsgtModel, batch_size: int = 16):
        self.model = model
        self.batch_size = batch_size

    def forecast(self, windows: WindowSet) -> np.ndarray:
        return self.model.predict(windows.history, windows.stats, self.batch_size)


def persistence_forecast(history_raw: np.ndarray, h: int) -> np.ndarray:
    """Repeat the last observed day: (M, N[, F]) -> (H, N)."""
    last = np.asarray(history_raw, dtype=np.float64)[-1]
    if last.ndim == 2:
        last = last[:, 0]
    return np.repeat(last[None, :], h, axis=0)


class Persistence:
    name = "Persistence"

    def forecast(self, windows: WindowSet) -> np.ndarray:
        h = windows.target.shape[1]
        last = windows.history_raw[:, -1, :, 0]
        return np.repeat(last[:, None, :], h, axis=1)


class ArBaseline:
    """Per-vertex AR(p) with intercept on once-differenced levels, fit by least squares.

    Forecasts roll the difference recursion forward and integrate back to
    levels; there are no moving-average terms.  With a ``context`` series the
    lags are read from it up to each window's anchor date, so the baseline is
    not limited to the model's M-day history.
    """

    name = "ARIMA(5,1,0)"

    def __init__(self, p: int = 5, context: TimeSeries | None = None):
        self.p = p
        self.context = context
        self.coef: np.ndarray | None = None  # N x p, lag 1 first
        self.intercept: np.ndarray | None = None  # N
        self.fallback: np.ndarray | None = None  # N, True -> persistence

    @classmethod
    def from_coefficients(cls, coef, intercept) -> "ArBaseline":
        coef = np.atleast_2d(np.asarray(coef, dtype=np.float64))
        model = cls(coef.shape[1])
        model.coef = coef
        model.intercept = np.asarray(intercept, dtype=np.float64).reshape(-1)
        model.fallback = np.zeros(coef.shape[0], dtype=bool)
        return model

    def fit(self, series: np.ndarray) -> "ArBaseline":
        """``series`` is T x N (or T x N x 1) raw levels from the training split."""
        series = np.asarray(series, dtype=np.float64)
        if series.ndim == 3:
            series = series[..., 0]
        p = self.p
        t_len, n = series.shape
        self.coef = np.zeros((n, p))
        self.intercept = np.zeros(n)
        self.fallback = np.zeros(n, dtype=bool)
        diffs = np.diff(series, axis=0)
        rows = diffs.shape[0] - p
        for j in range(n):
            if rows < 1:
                log.warning("vertex %d: %d levels are too few for AR(%d); using persistence", j, t_len, p)
                self.fallback[j] = True
                continue
            d = diffs[:, j]
            lags = np.stack([d[p - i - 1: p - i - 1 + rows] for i in range(p)], axis=1)
            design = np.hstack([lags, np.ones((rows, 1))])
            try:
                sol, *_ = np.linalg.lstsq(design, d[p:], rcond=None)
            except np.linalg.LinAlgError:
                sol = None
            if sol is None or not np.all(np.isfinite(sol)):
                log.warning("vertex %d: singular least-squares system; using persistence", j)
                self.fallback[j] = True
                continue
            self.coef[j], self.intercept[j] = sol[:p], sol[p]
        return self

    def forecast_levels(self, history: np.ndarray, h: int) -> np.ndarray:
        """(L, N) raw levels with L >= p + 1 -> (H, N)."""
        if self.coef is None:
            raise RuntimeError("fit() first")
        history = np.asarray(history, dtype=np.float64)
        if history.ndim == 3:
            history = history[..., 0]
        p = self.p
        if history.shape[0] < p + 1:
            raise ValueError(f"AR({p}) forecast needs at least {p + 1} past levels")
        recent = np.diff(history[-(p + 1):], axis=0)[::-1]  # lag 1 first, p x N
        level = history[-1].copy()
        out = np.empty((h, history.shape[1]))
        for step in range(h):
            nxt = self.intercept + np.einsum("np,pn->n", self.coef, recent)
            nxt = np.where(self.fallback, 0.0, nxt)
            level = level + nxt
            out[step] = level
            recent = np.vstack([nxt[None, :], recent[:-1]])
        return out

    def forecast(self, windows: WindowSet) -> np.ndarray:
        h = windows.target.shape[1]
        if self.context is None:
            histories = list(windows.history_raw)
        else:
            ends = [self.context.index_of(a) + 1 for a in windows.anchor_dates]
            histories = [self.context.values[max(0, e - self.p - 1):e] for e in ends]
        return np.stack([self.forecast_levels(hist, h) for hist in histories])


# ---------------------------------------------------------------------------
# output


def write_metrics_csv(reports: Sequence[MetricsReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "horizon", "mae", "rmsle", "rmse"])
        for report in reports:
            for algo, label, a, b, c in report.rows():
                w.writerow([algo, label, repr(a), repr(b), repr(c)])


def format_table(reports: Sequence[MetricsReport], all_steps: bool = False) -> str:
    """Aligned text table: Day 1 and the horizon mean per algorithm (every step with ``all_steps``)."""
    header = ("Algorithm", "Forecasting Horizon", "MAE", "RMSLE", "RMSE")
    body = []
    for report in reports:
        rows = report.rows()
        if not all_steps:
            rows = [rows[0], rows[-1]]
        for algo, label, a, b, c in rows:
            if label == "Day 1":
                label = "Day 1 (H=1)"
            body.append((algo, label, f"{a:.2f}", f"{b:.3f}", f"{c:.2f}"))
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(5)]

    def line(r):
        return "  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))

    rule = "-" * (sum(widths) + 8)
    out = [line(header), rule]
    last_algo = None
    for r in body:
        if last_algo is not None and r[0] != last_algo:
            out.append(rule)
        out.append(line(r if r[0] != last_algo else ("", *r[1:])))
        last_algo = r[0]
    return "\n".join(out)


__all__ = [
    "ArBaseline",
    "MetricsReport",
    "ModelForecaster",
    "Persistence",
    "evaluate",
    "evaluate_forecasts",
    "format_table",
    "mae",
    "persistence_forecast",
    "rmse",
    "rmsle",
    "write_metrics_csv",
]
