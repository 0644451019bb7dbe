"""End-to-end run on a synthetic county file.

The public JHU table is not bundled, so this writes a stand-in with the same
wide layout (one row per county, one column per day), then walks through
ingestion, graph construction, training and evaluation against the two
baselines.  A small model and a short schedule keep it to about a minute on
one core.

    python3 demos/01_end_to_end_synthetic.py
"""

import tempfile
from pathlib import Path

import numpy as np

import stsgt
from stsgt.evaluation import format_table
from stsgt.synthetic import write_county_csv

STATES = ("Michigan", "Ohio", "Indiana", "Illinois", "Wisconsin", "Pennsylvania", "Kentucky")

workdir = Path(tempfile.mkdtemp(prefix="stsgt-demo-"))
raw = workdir / "time_series_covid19_confirmed_US.csv"
write_county_csv(raw, start="2020-03-01", end="2021-03-31", states=STATES, counties_per_state=4, seed=3)
print(f"synthetic county file: {raw}")

# One vertex per state: counties are summed, then cumulative counts are differenced.
ts = stsgt.ingest_county_cumulative(raw, "national", states=STATES)
print(f"{ts.num_vertices} states x {len(ts)} days, {ts.start}..{ts.end}")

# Vertices within 30% of the largest pairwise distance are linked.
graph = stsgt.build_spatial_adjacency(ts.coords, threshold=0.3, vertex_names=ts.vertex_names)
print(f"spatial graph: {graph.num_edges} edges, density {graph.density:.2f}")

m, h = 12, 12
dataset = stsgt.build_dataset(ts, m, h, stsgt.SplitSpec((0.8, 0.1, 0.1)))
print(f"windows train/val/test: {len(dataset.train)}/{len(dataset.val)}/{len(dataset.test)}")

config = stsgt.StsgtConfig(m=m, h=h, n=ts.num_vertices, c_in=8, d_qkv=8, mlp_hidden=16, head_hidden=32,
                           num_layers=1, blocks_per_layer=2)
model = stsgt.StsgtModel(config, graph, seed=0)
print(f"model: {model.num_parameters()} parameters")

_, report, _ = stsgt.train(model, dataset, stsgt.TrainConfig(max_epochs=15, lr=3e-3, patience=5),
                           on_epoch=lambda r: print(f"  epoch {r.epoch:2d}  train {r.train_mae:8.2f}  "
                                                    f"val {r.val_mae:8.2f}"))
print(f"best validation MAE {report.best_val_mae:.2f} at epoch {report.best_epoch}")

# The AR baseline is fit on raw training levels and reads its lags from the full series.
ar = stsgt.ArBaseline(5, context=ts).fit(dataset.splits[0].values)
reports = [stsgt.evaluate(model, dataset.test),
           stsgt.evaluate(stsgt.Persistence(), dataset.test),
           stsgt.evaluate(ar, dataset.test)]
print()
print(format_table(reports))

first = dataset.test[0]
pred = model.predict(first.history[None], dataset.test.stats)[0]
state = int(np.argmax(first.target.sum(axis=0)))
print(f"\n{ts.vertex_names[state]}, 12 days after {first.anchor_date}:")
print("  truth   ", np.round(first.target[:, state]).astype(int))
print("  forecast", np.round(pred[:, state]).astype(int))
