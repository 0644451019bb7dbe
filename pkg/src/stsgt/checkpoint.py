"""Checkpoint container.

A checkpoint is an uncompressed ``.npz`` archive (no pickled objects):

``__meta__``
    uint8 array holding UTF-8 JSON: ``format`` ("stsgt-checkpoint"),
    ``version``, ``byte_order`` ("little"), ``dtype`` ("float64"), the model
    config, vertex names, normalisation statistics per split, the list of
    parameter names with shapes, plus free-form run metadata.
``param/<name>``
    little-endian float64 array of the parameter, row-major.
``buffer/adjacency``
    the N x N spatial adjacency the model was built with.
``optim/m/<name>``, ``optim/v/<name>``
    optional optimizer moments; ``meta["optimizer"]["step"]`` holds the count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import NormStats
from .errors import CheckpointError
from .graph import SpatialGraph
from .model import StsgtConfig, StsgtModel

FORMAT = "stsgt-checkpoint"
VERSION = 1
_LE = "<f8"


@dataclass
class Checkpoint:
    model: StsgtModel
    stats: dict[str, NormStats]
    meta: dict = field(default_factory=dict)
    optimizer_state: dict | None = None


def save_checkpoint(path, model: StsgtModel, stats: dict[str, NormStats], meta: dict | None = None,
                    optimizer_state: dict | None = None) -> None:
    arrays: dict[str, np.ndarray] = {}
    for name, p in model.named_parameters():
        arrays[f"param/{name}"] = np.ascontiguousarray(p.data, dtype=_LE)
    arrays["buffer/adjacency"] = np.ascontiguousarray(model.graph.adjacency, dtype=_LE)
    header = {
        "format": FORMAT,
        "version": VERSION,
        "byte_order": "little",
        "dtype": "float64",
        "config": model.config.to_dict(),
        "vertex_names": list(model.graph.vertex_names),
        "norm_stats": {k: s.to_dict() for k, s in stats.items()},
        "params": [{"name": n, "shape": list(p.shape)} for n, p in model.named_parameters()],
        "meta": meta or {},
    }
    if optimizer_state is not None:
        header["optimizer"] = {"step": int(optimizer_state["step"])}
        for name, arr in optimizer_state["m"].items():
            arrays[f"optim/m/{name}"] = np.ascontiguousarray(arr, dtype=_LE)
        for name, arr in optimizer_state["v"].items():
            arrays[f"optim/v/{name}"] = np.ascontiguousarray(arr, dtype=_LE)
    arrays["__meta__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> Checkpoint:
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"{path}: not a readable checkpoint ({exc})") from None
    with archive:
        if "__meta__" not in archive.files:
            raise CheckpointError(f"{path}: missing __meta__ header")
        header = json.loads(archive["__meta__"].tobytes().decode("utf-8"))
        if header.get("format") != FORMAT:
            raise CheckpointError(f"{path}: unknown format {header.get('format')!r}")
        if header.get("version") != VERSION:
            raise CheckpointError(f"{path}: unsupported version {header.get('version')} (expected {VERSION})")
        config = StsgtConfig.from_dict(header["config"])
        graph = SpatialGraph(tuple(header["vertex_names"]), archive["buffer/adjacency"].astype(np.float64))
        model = StsgtModel(config, graph)
        state = {name[len("param/"):]: archive[name].astype(np.float64)
                 for name in archive.files if name.startswith("param/")}
        model.load_state_dict(state)
        optimizer_state = None
        if "optimizer" in header:
            optimizer_state = {
                "step": header["optimizer"]["step"],
                "m": {n[len("optim/m/"):]: archive[n].astype(np.float64) for n in archive.files if n.startswith("optim/m/")},
                "v": {n[len("optim/v/"):]: archive[n].astype(np.float64) for n in archive.files if n.startswith("optim/v/")},
            }
    stats = {k: NormStats.from_dict(v) for k, v in header["norm_stats"].items()}
    return Checkpoint(model, stats, header.get("meta", {}), optimizer_state)
