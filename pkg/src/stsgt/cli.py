"""Command-line pipeline: prepare, build-graph, train, evaluate, forecast, export-plot.

Every command reads one YAML run config (see :mod:`stsgt.config`) and works
inside its ``output_dir``; each step reads what the previous one wrote::

    prepare      -> daily_series.csv, coords.csv, manifest.json
    build-graph  -> adjacency.csv
    train        -> checkpoint.npz, train_report.csv, train_timing.csv
    evaluate     -> metrics.csv, metrics.txt
    forecast     -> forecast.csv (+ forecast.truth.csv when the truth is known)
    export-plot  -> plot_data.csv
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import checkpoint as ckpt
from . import data as D
from . import evaluation as E
from . import graph as G
from .config import RunConfig, load_config
from .errors import CheckpointError, InsufficientDataError, MissingInputError, StsgtError
from .model import StsgtModel
from .synthetic import STATE_CENTERS
from .training import single_threaded, train

log = logging.getLogger("stsgt")

SERIES_FILE = "daily_series.csv"
COORDS_FILE = "coords.csv"
MANIFEST_FILE = "manifest.json"
ADJACENCY_FILE = "adjacency.csv"
CHECKPOINT_FILE = "checkpoint.npz"


def _require(path: Path, what: str, module: str = "cli") -> Path:
    if not Path(path).is_file():
        raise MissingInputError(f"{what} not found: {path}", module)
    return Path(path)


def config_hash(cfg: RunConfig) -> str:
    text = json.dumps(cfg.to_dict(), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# shared pipeline pieces (also used by the tests and demos)


def load_series(cfg: RunConfig) -> D.TimeSeries:
    d = cfg.data
    path = _require(d.path, "raw data file", "data")
    if d.source == "jhu":
        ts = D.ingest_county_cumulative(path, d.level, d.state, start=d.start, end=d.end, clamp=d.clamp)
    else:
        ts = D.ingest_state_cumulative(path, d.field, start=d.start, end=d.end, clamp=d.clamp)
        coords = [STATE_CENTERS.get(n, (np.nan, np.nan)) for n in ts.vertex_names]
        ts = D.TimeSeries(ts.dates, ts.vertex_names, ts.values, np.array(coords, dtype=np.float64))
    if d.coords_path is not None:
        names, coords = G.read_coords_csv(_require(d.coords_path, "coordinates file", "graph"))
        lookup = dict(zip(names, coords))
        missing = [n for n in ts.vertex_names if n not in lookup]
        if missing:
            raise MissingInputError(f"{d.coords_path}: no coordinates for {missing}", "graph")
        ts = D.TimeSeries(ts.dates, ts.vertex_names, ts.values, np.array([lookup[n] for n in ts.vertex_names]))
    return ts


def split_spec(cfg: RunConfig) -> D.SplitSpec:
    if cfg.data.val_start is not None:
        return D.SplitSpec.by_dates(cfg.data.val_start, cfg.data.test_start)
    return D.SplitSpec(cfg.data.fractions)


def horizon(cfg: RunConfig) -> tuple[int, int]:
    return int(cfg.model.get("m", 12)), int(cfg.model.get("h", 12))


def prepared_series(cfg: RunConfig) -> D.TimeSeries:
    out = Path(cfg.output_dir)
    series = _require(out / SERIES_FILE, "prepared series (run `prepare` first)")
    ts = D.read_series_csv(series)
    if (out / COORDS_FILE).is_file():
        names, coords = G.read_coords_csv(out / COORDS_FILE)
        if tuple(names) == ts.vertex_names:
            ts = D.TimeSeries(ts.dates, ts.vertex_names, ts.values, coords)
    return ts


def prepared_graph(cfg: RunConfig) -> G.SpatialGraph:
    path = _require(Path(cfg.output_dir) / ADJACENCY_FILE, "adjacency (run `build-graph` first)", "graph")
    return G.read_adjacency_csv(path)


def prepared_dataset(cfg: RunConfig, ts: D.TimeSeries | None = None) -> D.WindowedDataset:
    ts = prepared_series(cfg) if ts is None else ts
    m, h = horizon(cfg)
    return D.build_dataset(ts, m, h, split_spec(cfg), cfg.data.normalization)


# ---------------------------------------------------------------------------
# commands


def cmd_prepare(cfg: RunConfig, args) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ts = load_series(cfg)
    m, h = horizon(cfg)
    pieces = D.chronological_split(ts, split_spec(cfg), min_length=m + h)
    D.write_series_csv(ts, out / SERIES_FILE)
    if ts.coords is not None:
        G.write_coords_csv(ts.vertex_names, ts.coords, out / COORDS_FILE)
    splits = {}
    for name, piece in zip(D.SPLIT_NAMES, pieces):
        splits[name] = {
            "start": piece.start.isoformat(),
            "end": piece.end.isoformat(),
            "days": len(piece),
            "windows": D.window_count(len(piece), m, h),
        }
    manifest = {
        "config_hash": config_hash(cfg),
        "source": cfg.data.source,
        "field": cfg.data.field,
        "level": cfg.data.level,
        "state": cfg.data.state,
        "raw_file": Path(cfg.data.path).name,
        "start": ts.start.isoformat(),
        "end": ts.end.isoformat(),
        "days": len(ts),
        "vertices": ts.num_vertices,
        "m": m,
        "h": h,
        "splits": splits,
    }
    (out / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"T={len(ts)} days ({ts.start}..{ts.end}), N={ts.num_vertices} vertices")
    print("splits " + "/".join(str(s["days"]) for s in splits.values())
          + "  windows " + "/".join(str(s["windows"]) for s in splits.values()))
    print(f"wrote {out / SERIES_FILE}")
    return 0


def cmd_build_graph(cfg: RunConfig, args) -> int:
    ts = prepared_series(cfg)
    if ts.coords is None:
        raise MissingInputError(f"no coordinates in {Path(cfg.output_dir) / COORDS_FILE}", "graph")
    graph = G.build_spatial_adjacency(ts.coords, cfg.graph.threshold, cfg.graph.weight, ts.vertex_names)
    path = Path(cfg.output_dir) / ADJACENCY_FILE
    G.write_adjacency_csv(graph, path)
    print(f"N={graph.num_vertices} vertices, {graph.num_edges} edges, density {graph.density:.4f}")
    if graph.num_edges == 0:
        print(f"warning: no vertex pair within threshold {cfg.graph.threshold}; the spatial graph is empty",
              file=sys.stderr)
    print(f"wrote {path}")
    return 0


def _check_compatible(model: StsgtModel, cfg: RunConfig, ts: D.TimeSeries) -> None:
    m, h = horizon(cfg)
    problems = []
    if model.graph.vertex_names != ts.vertex_names:
        problems.append(f"vertices: checkpoint has {model.config.n}, data has {ts.num_vertices}"
                        if model.config.n != ts.num_vertices else "vertex names differ")
    if (model.config.m, model.config.h) != (m, h):
        problems.append(f"(M, H): checkpoint ({model.config.m}, {model.config.h}), config ({m}, {h})")
    if problems:
        raise CheckpointError("checkpoint incompatible with config: " + "; ".join(problems))


def _checkpoint_path(cfg: RunConfig, args) -> Path:
    path = Path(args.checkpoint) if getattr(args, "checkpoint", None) else Path(cfg.output_dir) / CHECKPOINT_FILE
    return _require(path, "checkpoint", "model")


def cmd_train(cfg: RunConfig, args) -> int:
    out = Path(cfg.output_dir)
    ts = prepared_series(cfg)
    graph = prepared_graph(cfg)
    if graph.vertex_names != ts.vertex_names:
        raise CheckpointError("adjacency vertices differ from the prepared series; rerun build-graph")
    dataset = prepared_dataset(cfg, ts)
    tcfg = cfg.train_config(seed=args.seed, max_epochs=args.max_epochs)
    optimizer_state, start_epoch = None, 1
    if args.resume:
        state = ckpt.load_checkpoint(_require(Path(args.resume), "checkpoint to resume", "model"))
        model = state.model
        _check_compatible(model, cfg, ts)
        optimizer_state = state.optimizer_state
        start_epoch = int(state.meta.get("last_epoch", 0)) + 1
    else:
        model = StsgtModel(cfg.model_config(ts.num_vertices, ts.values.shape[2]), graph, seed=tcfg.seed)
    print(f"training {model.num_parameters()} parameters on {len(dataset.train)} windows "
          f"(val {len(dataset.val)}), up to {tcfg.max_epochs} epochs")

    def progress(rec):
        print(f"epoch {rec.epoch:3d}  train_mae {rec.train_mae:.4f}  val_mae {rec.val_mae:.4f}  ({rec.seconds:.1f}s)",
              flush=True)

    _, report, opt = train(model, dataset, tcfg, optimizer_state, start_epoch, on_epoch=progress)
    meta = {
        "config_hash": config_hash(cfg),
        "seed": tcfg.seed,
        "best_epoch": report.best_epoch,
        "best_val_mae": report.best_val_mae,
        "last_epoch": report.epochs[-1].epoch,
    }
    path = out / CHECKPOINT_FILE
    ckpt.save_checkpoint(path, model, dataset.stats, meta, opt.state_dict())
    report.write_csv(out / "train_report.csv")
    report.write_timing_csv(out / "train_timing.csv")
    print(f"best val MAE {report.best_val_mae:.4f} at epoch {report.best_epoch}")
    print(f"wrote {path}")
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    out = Path(cfg.output_dir)
    state = ckpt.load_checkpoint(_checkpoint_path(cfg, args))
    ts = prepared_series(cfg)
    _check_compatible(state.model, cfg, ts)
    dataset = prepared_dataset(cfg, ts)
    windows = dataset.split(args.split)
    meta = {"split": args.split, "config_hash": config_hash(cfg)}
    with single_threaded():
        reports = [E.evaluate(state.model, windows, meta)]
        if args.baselines:
            reports.append(E.evaluate(E.Persistence(), windows, meta))
            ar = E.ArBaseline(5, context=ts).fit(dataset.splits[0].values)
            reports.append(E.evaluate(ar, windows, meta))
    E.write_metrics_csv(reports, out / "metrics.csv")
    table = E.format_table(reports, all_steps=args.all_steps)
    (out / "metrics.txt").write_text(table + "\n")
    print(table)
    print(f"wrote {out / 'metrics.csv'}")
    return 0


def _stats_for(dataset: D.WindowedDataset, date: np.datetime64) -> D.NormStats:
    for name, piece in zip(D.SPLIT_NAMES, dataset.splits):
        if piece.dates[0] <= date <= piece.dates[-1]:
            return dataset.split(name).stats
    return dataset.test.stats


def _write_frame(path: Path, dates, names, values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *names])
        for date, row in zip(dates, values):
            w.writerow([str(date), *(repr(float(v)) for v in row)])


def cmd_forecast(cfg: RunConfig, args) -> int:
    out = Path(cfg.output_dir)
    state = ckpt.load_checkpoint(_checkpoint_path(cfg, args))
    model = state.model
    ts = prepared_series(cfg)
    _check_compatible(model, cfg, ts)
    dataset = prepared_dataset(cfg, ts)
    m, h = model.config.m, model.config.h
    anchor = np.datetime64(D._as_date(args.anchor), "D")
    last = np.datetime64(D._as_date(args.rolling_until), "D") if args.rolling_until else anchor
    if last < anchor:
        raise ValueError("--rolling-until must not precede --anchor")
    if not 1 <= args.step <= h:
        raise ValueError(f"--step must be within 1..{h}")

    anchors = np.arange(anchor, last + 1)
    histories, stats = [], []
    for a in anchors:
        if a not in ts.dates:
            raise InsufficientDataError(f"anchor {a} outside the prepared series ({ts.start}..{ts.end})")
        i = ts.index_of(a)
        if i + 1 < m:
            raise InsufficientDataError(f"anchor {a} has {i + 1} days of history; M={m} are needed")
        s = _stats_for(dataset, a)
        histories.append(s.apply(ts.values[i + 1 - m: i + 1]))
        stats.append(s)
    with single_threaded():
        preds = np.stack([
            model.predict(hist[None], s, 1)[0] for hist, s in zip(histories, stats)
        ])  # A x H x N

    if len(anchors) == 1:
        dates = anchor + np.arange(1, h + 1)
        values = preds[0]
        print(f"history {anchor - (m - 1)}..{anchor}, forecast {dates[0]}..{dates[-1]}")
    else:
        dates = anchors + args.step
        values = preds[:, args.step - 1]
        print(f"{len(anchors)} rolling day-{args.step} forecasts for {dates[0]}..{dates[-1]}")
    path = Path(args.out) if args.out else out / "forecast.csv"
    _write_frame(path, dates, ts.vertex_names, values)
    known = np.isin(dates, ts.dates)
    if known.any():
        rows = [ts.index_of(d) for d in dates[known]]
        _write_frame(path.with_suffix(".truth.csv"), dates[known], ts.vertex_names, ts.values[rows, :, 0])
    print(f"wrote {path}")
    return 0


def cmd_export_plot(cfg: RunConfig, args) -> int:
    out = Path(cfg.output_dir)
    fpath = _require(Path(args.forecast) if args.forecast else out / "forecast.csv", "forecast file")
    forecast = pd.read_csv(fpath)
    names = list(forecast.columns[1:])
    wanted = [v.strip() for v in args.vertices.split(",") if v.strip()] if args.vertices else names
    unknown = [v for v in wanted if v not in names]
    if unknown:
        raise ValueError(f"unknown vertices {unknown}; valid names: {', '.join(names)}")
    tpath = fpath.with_suffix(".truth.csv")
    truth = pd.read_csv(tpath) if tpath.is_file() else pd.DataFrame(columns=["date", *names])

    f_long = forecast.melt(id_vars="date", value_vars=wanted, var_name="vertex", value_name="forecast")
    t_long = truth.melt(id_vars="date", value_vars=wanted, var_name="vertex", value_name="truth")
    merged = f_long.merge(t_long, on=["date", "vertex"], how="left")
    if args.drop_zero_days:
        merged = merged[~(merged["truth"] == 0)]
    order = {v: i for i, v in enumerate(wanted)}
    merged = merged.sort_values(["vertex", "date"], key=lambda c: c.map(order) if c.name == "vertex" else c,
                                kind="stable")
    rows = []
    for rec in merged.itertuples(index=False):
        if not pd.isna(rec.truth):
            rows.append((rec.date, rec.vertex, "truth", rec.truth))
        rows.append((rec.date, rec.vertex, "forecast", rec.forecast))
    tidy = pd.DataFrame(rows, columns=["date", "vertex", "series", "value"])
    path = Path(args.out) if args.out else out / "plot_data.csv"
    tidy.to_csv(path, index=False)
    print(f"{len(tidy)} rows for {len(wanted)} vertices; wrote {path}")
    return 0


# ---------------------------------------------------------------------------


COMMANDS = {
    "prepare": cmd_prepare,
    "build-graph": cmd_build_graph,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "forecast": cmd_forecast,
    "export-plot": cmd_export_plot,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", required=True, help="YAML run config")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. --set train.lr=0.0005 (repeatable)")
    common.add_argument("-o", "--output-dir", help="override output_dir")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="stsgt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("prepare", parents=[common], help="ingest raw counts, write the daily series and split manifest")
    p.add_argument("--no-clamp", action="store_true", help="keep negative daily counts from reporting corrections")
    sub.add_parser("build-graph", parents=[common], help="threshold coordinates into an adjacency matrix")

    p = sub.add_parser("train", parents=[common], help="fit the model, keep the best validation checkpoint")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--resume", metavar="CHECKPOINT", help="continue from a saved checkpoint and optimizer state")

    p = sub.add_parser("evaluate", parents=[common], help="per-horizon MAE/RMSLE/RMSE on a split")
    p.add_argument("--checkpoint")
    p.add_argument("--split", choices=D.SPLIT_NAMES, default="test")
    p.add_argument("--baselines", action="store_true", help="add persistence and AR(5) on differences")
    p.add_argument("--all-steps", action="store_true", help="print every horizon step, not just Day 1 and the mean")

    p = sub.add_parser("forecast", parents=[common], help="forecast the H days after an anchor date")
    p.add_argument("--checkpoint")
    p.add_argument("--anchor", required=True, help="last history day, YYYY-MM-DD")
    p.add_argument("--rolling-until", help="slide the anchor day by day up to this date")
    p.add_argument("--step", type=int, default=1, help="horizon step kept in rolling mode")
    p.add_argument("--out")

    p = sub.add_parser("export-plot", parents=[common], help="long-format truth/forecast rows for plotting")
    p.add_argument("--forecast")
    p.add_argument("--vertices", default="", help="comma-separated names; empty exports all")
    p.add_argument("--drop-zero-days", action="store_true")
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        if args.output_dir:
            cfg.output_dir = Path(args.output_dir)
        if getattr(args, "no_clamp", False):
            cfg.data.clamp = False
        return COMMANDS[args.command](cfg, args)
    except StsgtError as exc:
        print(f"error [{exc.module}]: {exc}", file=sys.stderr)
    except FileNotFoundError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
    except (ValueError, KeyError) as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
