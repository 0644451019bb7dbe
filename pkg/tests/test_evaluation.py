import math

import numpy as np
import pytest

from stsgt import data as D
from stsgt import evaluation as E
from stsgt.synthetic import toy_series

from conftest import tiny_model


# -- loop oracles for the metrics ---------------------------------------------


def loop_mae(t, p):
    return sum(abs(a - b) for a, b in zip(t, p)) / len(t)


def loop_rmse(t, p):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(t, p)) / len(t))


def loop_rmsle(t, p):
    return math.sqrt(sum((math.log(1 + a) - math.log(1 + max(b, 0.0))) ** 2 for a, b in zip(t, p)) / len(t))


def test_metrics_match_loop_oracles():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        t = rng.uniform(0, 1000, n)
        p = rng.uniform(-50, 1000, n)
        tl, pl = t.tolist(), p.tolist()
        assert E.mae(t, p) == pytest.approx(loop_mae(tl, pl), rel=1e-12, abs=1e-12)
        assert E.rmse(t, p) == pytest.approx(loop_rmse(tl, pl), rel=1e-12, abs=1e-12)
        assert E.rmsle(t, p) == pytest.approx(loop_rmsle(tl, pl), rel=1e-12, abs=1e-12)
        assert E.rmse(t, p) >= E.mae(t, p) - 1e-12


def test_metric_examples():
    assert E.rmsle([0.0], [math.e - 1]) == pytest.approx(1.0, rel=1e-15)
    assert E.rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5))
    assert E.mae([0, 0], [3, 4]) == 3.5
    assert E.rmsle([0.0, 5.0], [-3.0, 5.0]) == 0.0  # negative predictions count as zero


def test_metric_errors():
    with pytest.raises(ValueError, match="non-negative"):
        E.rmsle([-1.0], [0.0])
    with pytest.raises(ValueError, match="length"):
        E.mae([1, 2], [1])
    with pytest.raises(ValueError):
        E.rmse([], [])


# -- reports ------------------------------------------------------------------


def windows(days=60, n=3, m=4, h=3, seed=2):
    return D.make_windows(toy_series(n=n, days=days, seed=seed), m, h)


def test_perfect_forecaster_scores_zero():
    w = windows()

    class Oracle:
        name = "oracle"

        def forecast(self, ws):
            return ws.target.copy()

    report = E.evaluate(Oracle(), w)
    assert all(v == 0.0 for step in report.per_step for v in step.values())
    assert report.rows()[-1][1] == "3 Days Mean"


def test_persistence_examples():
    w = windows()
    pred = E.Persistence().forecast(w)
    for i in (0, len(w) - 1):
        last = w.history_raw[i, -1, :, 0]
        np.testing.assert_array_equal(pred[i], np.tile(last, (3, 1)))
    np.testing.assert_array_equal(E.persistence_forecast([[1.0, 2.0], [5.0, 7.0]], 3), [[5.0, 7.0]] * 3)


def test_persistence_on_constant_and_increasing_series():
    days = np.arange(np.datetime64("2021-01-01"), np.datetime64("2021-01-31"))
    flat = D.make_windows(D.TimeSeries(days, ("a", "b"), np.full((30, 2), 4.0)), 5, 4)
    report = E.evaluate(E.Persistence(), flat)
    assert all(s["mae"] == 0.0 for s in report.per_step)
    rising = D.make_windows(D.TimeSeries(days, ("a",), np.arange(30.0)[:, None] ** 1.5), 5, 4)
    maes = [s["mae"] for s in E.evaluate(E.Persistence(), rising).per_step]
    assert all(a < b for a, b in zip(maes, maes[1:]))


def test_single_step_report_mean_equals_day_one():
    w = windows(h=1)
    report = E.evaluate(E.Persistence(), w)
    rows = report.rows()
    assert [r[1] for r in rows] == ["Day 1", "1 Days Mean"]
    assert rows[0][2:] == rows[1][2:]


def test_per_step_pooling_matches_manual():
    rng = np.random.default_rng(3)
    target = rng.uniform(0, 50, (7, 4, 5))
    forecast = target + rng.normal(0, 3, target.shape)
    report = E.evaluate_forecasts(forecast, target)
    for h in range(4):
        assert report.per_step[h]["mae"] == pytest.approx(np.abs(forecast[:, h] - target[:, h]).mean())
    assert report.mean["rmse"] == pytest.approx(np.mean([s["rmse"] for s in report.per_step]))


def test_model_forecasts_do_not_depend_on_batching():
    w = windows(n=4, m=3, h=2)
    model = tiny_model(m=3, n=4, h=2)
    a = E.ModelForecaster(model, batch_size=1).forecast(w)
    b = E.ModelForecaster(model, batch_size=64).forecast(w)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_table_and_csv(tmp_path):
    w = windows(h=12, days=80, m=5)
    reports = [E.evaluate(E.Persistence(), w), E.evaluate(E.ArBaseline(2).fit(toy_series(3, 80, 2).values), w)]
    table = E.format_table(reports)
    assert "Day 1 (H=1)" in table and "12 Days Mean" in table
    assert "Day 2" not in table
    assert "Day 7" in E.format_table(reports, all_steps=True)
    E.write_metrics_csv(reports, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "algorithm,horizon,mae,rmsle,rmse"
    assert len(lines) == 1 + 2 * 13


# -- AR baseline ----------------------------------------------------------------


def test_ar_constant_series_forecasts_constant():
    series = np.full((40, 2), 17.0)
    ar = E.ArBaseline(5).fit(series)
    np.testing.assert_allclose(ar.forecast_levels(series[-10:], 4), 17.0, atol=1e-9)


def test_ar_linear_series_continues_trend():
    t = np.arange(60, dtype=float)
    series = np.stack([3.0 + 2.5 * t, 100.0 - 0.5 * t], axis=1)
    ar = E.ArBaseline(5).fit(series)
    out = ar.forecast_levels(series, 3)
    expected = series[-1] + np.outer(np.arange(1, 4), [2.5, -0.5])
    np.testing.assert_allclose(out, expected, atol=1e-8)


def test_ar_recovers_known_coefficients():
    rng = np.random.default_rng(11)
    phi, c = np.array([0.4, -0.2, 0.15, 0.1, -0.05]), 0.5
    d = np.zeros(3000)
    for k in range(5, len(d)):
        d[k] = c + phi @ d[k - 5:k][::-1] + rng.normal(0, 0.01)
    levels = np.cumsum(d)[:, None]
    ar = E.ArBaseline(5).fit(levels)
    np.testing.assert_allclose(ar.coef[0], phi, atol=0.05)
    assert ar.intercept[0] == pytest.approx(c, abs=0.05)


def test_ar_zero_coefficients_is_persistence():
    ar = E.ArBaseline.from_coefficients(np.zeros((3, 5)), np.zeros(3))
    w = windows(m=6)
    np.testing.assert_array_equal(ar.forecast(w), E.Persistence().forecast(w))


def test_ar_short_training_series_falls_back():
    ar = E.ArBaseline(5).fit(np.arange(12.0).reshape(4, 3))
    assert ar.fallback.all()
    np.testing.assert_array_equal(ar.forecast_levels(np.ones((6, 3)), 2), np.ones((2, 3)))
    with pytest.raises(ValueError, match="at least 6"):
        ar.forecast_levels(np.ones((5, 3)), 2)


def test_ar_context_series_matches_window_history():
    ts = toy_series(3, 90, 4)
    ar = E.ArBaseline(3).fit(ts.values[:60])
    w = D.make_windows(ts, 6, 4)
    with_context = E.ArBaseline.from_coefficients(ar.coef, ar.intercept)
    with_context.context = ts
    np.testing.assert_allclose(with_context.forecast(w), ar.forecast(w), rtol=1e-12)
    short = D.make_windows(ts, 2, 4)
    late = short.subset(np.arange(5, len(short)))  # anchors with at least p + 1 days of series
    assert with_context.forecast(late).shape == (len(late), 4, 3)
