import subprocess
import sys
from pathlib import Path

import pandas as pd
import pytest
import yaml

from stsgt.cli import main
from stsgt.synthetic import write_county_csv, write_state_csv

STATES = ("Michigan", "Ohio", "Indiana", "Illinois", "Wisconsin")
TINY = ["model.m=3", "model.h=2", "model.c_in=4", "model.heads=2", "model.d_qkv=3", "model.num_layers=1",
        "model.blocks_per_layer=1", "model.mlp_hidden=6", "model.head_hidden=5", "train.batch_size=8"]


@pytest.fixture(scope="module")
def raw_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("raw") / "confirmed.csv"
    write_county_csv(path, start="2020-03-01", end="2020-05-31", states=STATES, counties_per_state=2, seed=4)
    return path


def make_config(tmp_path, raw_file, **data):
    cfg = {
        "output_dir": "run",
        "seed": 0,
        "data": {"source": "jhu", "path": str(raw_file), **data},
        "graph": {"threshold": 0.9},
    }
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def run(capsys, verb, config, *extra, tiny=True):
    argv = [verb, "-c", str(config)]
    if tiny:
        for s in TINY:
            argv += ["--set", s]
    code = main([*argv, *extra])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def trained_run(tmp_path, raw_file, capsys):
    cfg = make_config(tmp_path, raw_file)
    for verb, extra in (("prepare", ()), ("build-graph", ()), ("train", ("--max-epochs", "2"))):
        code, _, err = run(capsys, verb, cfg, *extra)
        assert code == 0, err
    return cfg, tmp_path / "run"


def test_prepare_is_idempotent(tmp_path, raw_file, capsys):
    cfg = make_config(tmp_path, raw_file)
    code, out, _ = run(capsys, "prepare", cfg)
    assert code == 0
    assert "T=92 days" in out and "N=5 vertices" in out
    run_dir = tmp_path / "run"
    first = {p.name: p.read_bytes() for p in run_dir.iterdir()}
    run(capsys, "prepare", cfg)
    assert {p.name: p.read_bytes() for p in run_dir.iterdir()} == first


def test_missing_raw_file_exits_with_path(tmp_path, capsys):
    cfg = make_config(tmp_path, tmp_path / "nowhere.csv")
    code, _, err = run(capsys, "prepare", cfg)
    assert code == 1
    assert "nowhere.csv" in err and err.startswith("error [")


def test_state_level_gives_one_vertex_per_county(tmp_path, capsys):
    raw = tmp_path / "mi.csv"
    write_county_csv(raw, start="2020-03-01", end="2020-04-30", states=("Michigan",), seed=1)
    cfg = make_config(tmp_path, raw, level="state", state="Michigan")
    code, out, _ = run(capsys, "prepare", cfg)
    assert code == 0 and "N=83 vertices" in out


def test_zero_threshold_warns_about_empty_graph(tmp_path, raw_file, capsys):
    cfg = make_config(tmp_path, raw_file)
    run(capsys, "prepare", cfg)
    code, out, err = run(capsys, "build-graph", cfg, "--set", "graph.threshold=0")
    assert code == 0
    assert "0 edges" in out and "empty" in err


def test_unknown_config_key_is_reported(tmp_path, raw_file, capsys):
    cfg = make_config(tmp_path, raw_file)
    code, _, err = run(capsys, "prepare", cfg, "--set", "model.depth=3")
    assert code == 1 and "error [config]" in err and "depth" in err


def test_train_writes_one_row_per_epoch(trained_run):
    _, run_dir = trained_run
    report = pd.read_csv(run_dir / "train_report.csv")
    assert list(report.columns) == ["epoch", "train_mae", "val_mae"]
    assert list(report["epoch"]) == [1, 2]
    assert (run_dir / "checkpoint.npz").is_file()


def test_train_with_same_seed_is_reproducible(tmp_path, raw_file, capsys):
    cfg = make_config(tmp_path, raw_file)
    run(capsys, "prepare", cfg)
    run(capsys, "build-graph", cfg)
    reports = []
    for _ in range(2):
        code, _, err = run(capsys, "train", cfg, "--seed", "7", "--max-epochs", "1")
        assert code == 0, err
        reports.append((tmp_path / "run" / "train_report.csv").read_bytes())
    assert reports[0] == reports[1]


def test_resume_continues_epoch_numbering(trained_run, capsys):
    cfg, run_dir = trained_run
    code, _, err = run(capsys, "train", cfg, "--max-epochs", "1", "--resume", str(run_dir / "checkpoint.npz"))
    assert code == 0, err
    assert list(pd.read_csv(run_dir / "train_report.csv")["epoch"]) == [3]


def test_train_rejects_mismatched_graph(trained_run, capsys):
    cfg, run_dir = trained_run
    code, _, err = run(capsys, "evaluate", cfg, "--set", "model.m=4")
    assert code == 1 and "m" in err


def test_evaluate_with_baselines(trained_run, capsys):
    cfg, run_dir = trained_run
    code, out, err = run(capsys, "evaluate", cfg, "--baselines")
    assert code == 0, err
    metrics = pd.read_csv(run_dir / "metrics.csv")
    assert sorted(metrics["algorithm"].unique()) == ["ARIMA(5,1,0)", "Persistence", "STSGT"]
    assert len(metrics) == 3 * 3
    assert "2 Days Mean" in out
    assert (run_dir / "metrics.txt").read_text().strip() == out.split("wrote")[0].strip()


def test_forecast_and_export_plot(trained_run, capsys):
    cfg, run_dir = trained_run
    code, _, err = run(capsys, "forecast", cfg, "--anchor", "2020-05-20")
    assert code == 0, err
    fc = pd.read_csv(run_dir / "forecast.csv")
    assert fc.shape == (2, 1 + 5)
    assert list(fc["date"]) == ["2020-05-21", "2020-05-22"]

    code, _, _ = run(capsys, "export-plot", cfg, "--vertices", "Ohio,Michigan")
    assert code == 0
    plot = pd.read_csv(run_dir / "plot_data.csv")
    assert list(plot.columns) == ["date", "vertex", "series", "value"]
    assert list(plot["vertex"].unique()) == ["Ohio", "Michigan"]
    assert set(plot["series"]) == {"truth", "forecast"}

    code, _, err = run(capsys, "export-plot", cfg, "--vertices", "Atlantis")
    assert code == 1 and "Atlantis" in err and "Michigan" in err


def test_export_plot_drops_zero_truth_days(trained_run, capsys):
    cfg, run_dir = trained_run
    run(capsys, "forecast", cfg, "--anchor", "2020-05-20")
    truth = pd.read_csv(run_dir / "forecast.truth.csv")
    truth.iloc[0, 1:] = 0
    truth.to_csv(run_dir / "forecast.truth.csv", index=False)
    run(capsys, "export-plot", cfg, "--drop-zero-days")
    plot = pd.read_csv(run_dir / "plot_data.csv")
    assert "2020-05-21" not in set(plot["date"])
    assert "2020-05-22" in set(plot["date"])


def test_rolling_forecast(trained_run, capsys):
    cfg, run_dir = trained_run
    code, _, err = run(capsys, "forecast", cfg, "--anchor", "2020-05-10", "--rolling-until", "2020-05-19",
                       "--step", "2")
    assert code == 0, err
    fc = pd.read_csv(run_dir / "forecast.csv")
    assert len(fc) == 10 and fc["date"].iloc[0] == "2020-05-12"


def test_forecast_anchor_too_early(trained_run, capsys):
    cfg, _ = trained_run
    code, _, err = run(capsys, "forecast", cfg, "--anchor", "2020-03-02")
    assert code == 1 and "history" in err


def test_module_entry_point_help():
    done = subprocess.run([sys.executable, "-m", "stsgt", "--help"], capture_output=True, text=True)
    assert done.returncode == 0
    for verb in ("prepare", "build-graph", "train", "evaluate", "forecast", "export-plot"):
        assert verb in done.stdout


def test_pipeline_counts_on_stand_in_files(tmp_path, capsys):
    """Same layouts and date spans as the public files; the real-data check lives in test_acceptance."""
    jhu, nyt = tmp_path / "confirmed.csv", tmp_path / "us-states.csv"
    write_county_csv(jhu, seed=9)
    write_state_csv(nyt, end="2021-11-30", seed=9)
    configs = Path(__file__).resolve().parents[1] / "configs"
    expected = {"jhu_cases.yaml": (jhu, "T=626", "splits 501/62/63  windows 478/39/40", "N=51"),
                "nyt_cases.yaml": (nyt, "T=623", "splits 498/62/63", "N=51"),
                "jhu_michigan.yaml": (jhu, "T=626", "splits 501/62/63", "N=83")}
    for name, (raw, days, splits, vertices) in expected.items():
        common = ["-c", str(configs / name), "--set", f"data.path={raw}", "-o", str(tmp_path / name)]
        assert main(["prepare", *common]) == 0
        out = capsys.readouterr().out
        assert days in out and splits in out
        assert main(["build-graph", *common]) == 0
        assert capsys.readouterr().out.startswith(vertices + " vertices")


def test_no_clamp_keeps_negative_days(tmp_path, capsys):
    raw = tmp_path / "c.csv"
    write_county_csv(raw, start="2020-03-01", end="2020-06-30", states=STATES, seed=2, corrections=0.2)
    cfg = make_config(tmp_path, raw)
    run(capsys, "prepare", cfg)
    clamped = pd.read_csv(tmp_path / "run" / "daily_series.csv", index_col=0)
    run(capsys, "prepare", cfg, "--no-clamp")
    raw_daily = pd.read_csv(tmp_path / "run" / "daily_series.csv", index_col=0)
    assert (clamped.to_numpy() >= 0).all()
    assert (raw_daily.to_numpy() < 0).any()


def test_forecast_window_dates_with_twelve_day_history(tmp_path, capsys):
    raw = tmp_path / "c.csv"
    write_county_csv(raw, start="2021-01-01", end="2021-11-30", states=STATES, counties_per_state=1, seed=6)
    cfg = make_config(tmp_path, raw)
    twelve = ["--set", "model.m=12", "--set", "model.h=12"]
    for verb, extra in (("prepare", twelve), ("build-graph", twelve), ("train", [*twelve, "--max-epochs", "1"])):
        assert run(capsys, verb, cfg, *extra)[0] == 0
    code, out, _ = run(capsys, "forecast", cfg, *twelve, "--anchor", "2021-11-05")
    assert code == 0
    assert "history 2021-10-25..2021-11-05, forecast 2021-11-06..2021-11-17" in out
