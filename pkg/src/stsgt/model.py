"""The spatial-temporal synchronous graph transformer.

Shapes follow the convention B (batch), M (history steps), N (vertices),
F (input features), C (model channels), H (horizon).  Inside the layers a
sample is flattened time-major to MN rows, so row ``(t-1)*N + p - 1`` holds
vertex p at step t, matching the synchronous adjacency layout.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import DimensionError
from .graph import SpatialGraph, apply_mask, build_sync_adjacency


@dataclass(frozen=True)
class StsgtConfig:
    m: int = 12
    h: int = 12
    n: int = 51
    f: int = 1
    c_in: int = 16
    num_layers: int = 2
    blocks_per_layer: int = 2
    heads: int = 2
    d_qkv: int = 16
    mlp_hidden: int = 32
    head_hidden: int = 64
    ln_eps: float = 1e-5
    encoding_std: float = 0.02
    per_block_mask: bool = False

    def __post_init__(self):
        for name in ("m", "h", "n", "f", "c_in", "num_layers", "blocks_per_layer",
                     "heads", "d_qkv", "mlp_hidden", "head_hidden"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def sync_size(self) -> int:
        return self.m * self.n

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "StsgtConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)


# ---------------------------------------------------------------------------
# building blocks (pure functions over tensors)


def input_projection(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Positionwise affine map F -> C_in (a width-1 convolution)."""
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"input has {x.shape[-1]} features, projection expects {weight.shape[0]}")
    return ag.matmul(x, weight) + bias


def add_encodings(x: Tensor, temporal: Tensor, spatial: Tensor) -> Tensor:
    """``x + temporal + spatial`` with temporal M x 1 x C and spatial 1 x N x C."""
    return x + temporal + spatial


def attention_head(x: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor) -> tuple[Tensor, Tensor]:
    """Dense scaled dot-product self-attention over the rows of ``x``.

    ``x`` is (..., MN, C) and the projections (..., C, d); leading axes
    broadcast, so stacked per-head weights (heads, C, d) against
    x of shape (B, 1, MN, C) evaluate every head at once.
    Returns the attended values L and the score matrix S.
    """
    q = ag.matmul(x, w_q)
    k = ag.matmul(x, w_k)
    v = ag.matmul(x, w_v)
    scores = ag.attention_scores(q, k, 1.0 / math.sqrt(k.shape[-1]))
    return ag.matmul(scores, v), scores


def gcn_layer(x: Tensor, adjacency: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``relu(A x W + b)`` with ``x`` (..., MN, C'), no normalisation or self-loops."""
    if adjacency.shape[-1] != x.shape[-2]:
        raise DimensionError(f"adjacency {adjacency.shape} does not match signal {x.shape}")
    return ag.relu(ag.matmul(ag.matmul(adjacency, x), weight) + bias)


def output_head(x: Tensor, m: int, n: int, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """(B, MN, C) -> (B, H, N): per-vertex MLP over the flattened history."""
    b, c = x.shape[0], x.shape[-1]
    per_vertex = x.reshape(b, m, n, c).transpose(0, 2, 1, 3).reshape(b, n, m * c)
    hidden = ag.relu(ag.matmul(per_vertex, w1) + b1)
    return (ag.matmul(hidden, w2) + b2).transpose(0, 2, 1)


# ---------------------------------------------------------------------------


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class StsgtModel:
    """Parameter container plus the forward pass.

    ``graph`` supplies the spatial adjacency; its synchronous expansion is a
    constant and only the elementwise mask on top of it is learned.
    """

    def __init__(self, config: StsgtConfig, graph: SpatialGraph, seed: int = 0):
        if graph.num_vertices != config.n:
            raise DimensionError(f"graph has {graph.num_vertices} vertices, config expects {config.n}")
        self.config = config
        self.graph = graph
        self.sync = build_sync_adjacency(graph, config.m)
        self.params: dict[str, Tensor] = {}
        self._init_params(np.random.default_rng(seed))

    # -- parameters ---------------------------------------------------------
    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor(value, requires_grad=True, name=name)

    def _init_params(self, rng: np.random.Generator) -> None:
        cfg = self.config
        c, d, hid = cfg.c_in, cfg.d_qkv, cfg.mlp_hidden
        mn = cfg.sync_size
        self._add("input_proj.W", _uniform(rng, cfg.f, (cfg.f, c)))
        self._add("input_proj.b", np.zeros(c))
        self._add("encoding.temporal", rng.normal(0.0, cfg.encoding_std, (cfg.m, 1, c)))
        self._add("encoding.spatial", rng.normal(0.0, cfg.encoding_std, (1, cfg.n, c)))
        if not cfg.per_block_mask:
            self._add("mask", np.ones((mn, mn)))
        for prefix in self.block_prefixes():
            self._add(f"{prefix}.ln1.gamma", np.ones(c))
            self._add(f"{prefix}.ln1.beta", np.zeros(c))
            for proj in ("W_Q", "W_K", "W_V"):
                self._add(f"{prefix}.attn.{proj}", _uniform(rng, c, (cfg.heads, c, d)))
            self._add(f"{prefix}.attn.merge.W", _uniform(rng, cfg.heads * d, (cfg.heads * d, c)))
            self._add(f"{prefix}.attn.merge.b", np.zeros(c))
            self._add(f"{prefix}.ln2.gamma", np.ones(c))
            self._add(f"{prefix}.ln2.beta", np.zeros(c))
            self._add(f"{prefix}.mlp.W1", _uniform(rng, c, (c, hid)))
            self._add(f"{prefix}.mlp.b1", np.zeros(hid))
            self._add(f"{prefix}.mlp.W2", _uniform(rng, hid, (hid, hid)))
            self._add(f"{prefix}.mlp.b2", np.zeros(hid))
            self._add(f"{prefix}.mlp.W3", _uniform(rng, hid, (hid, c)))
            self._add(f"{prefix}.mlp.b3", np.zeros(c))
            self._add(f"{prefix}.gcn.W", _uniform(rng, c, (c, c)))
            self._add(f"{prefix}.gcn.b", np.zeros(c))
            if cfg.per_block_mask:
                self._add(f"{prefix}.mask", np.ones((mn, mn)))
        self._add("head.W1", _uniform(rng, cfg.m * c, (cfg.m * c, cfg.head_hidden)))
        self._add("head.b1", np.zeros(cfg.head_hidden))
        self._add("head.W2", _uniform(rng, cfg.head_hidden, (cfg.head_hidden, cfg.h)))
        self._add("head.b2", np.zeros(cfg.h))

    def block_prefixes(self) -> list[str]:
        return [f"layers.{i}.blocks.{j}" for i in range(self.config.num_layers)
                for j in range(self.config.blocks_per_layer)]

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def named_parameters(self):
        return self.params.items()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = sorted(set(self.params) - set(state))
        unexpected = sorted(set(state) - set(self.params))
        mismatched = [
            f"{k}: checkpoint {np.shape(state[k])} vs model {self.params[k].shape}"
            for k in self.params if k in state and np.shape(state[k]) != self.params[k].shape
        ]
        if missing or unexpected or mismatched:
            raise DimensionError(
                "state does not fit model: "
                + "; ".join(filter(None, [
                    f"missing {missing}" if missing else "",
                    f"unexpected {unexpected}" if unexpected else "",
                    "; ".join(mismatched),
                ]))
            )
        for k, p in self.params.items():
            p.data = np.array(state[k], dtype=np.float64)

    # -- forward --------------------------------------------------------------
    def masked_adjacency(self, prefix: str | None = None) -> Tensor:
        mask = self.params[f"{prefix}.mask"] if self.config.per_block_mask else self.params["mask"]
        return apply_mask(self.sync, mask)

    def stst_block(self, x: Tensor, prefix: str, record: list | None = None) -> Tensor:
        """Pre-norm attention and MLP sublayers, each wrapped in a residual."""
        p, cfg = self.params, self.config
        b, mn, c = x.shape
        h = ag.layer_norm(x, p[f"{prefix}.ln1.gamma"], p[f"{prefix}.ln1.beta"], cfg.ln_eps)
        values, scores = attention_head(
            h.reshape(b, 1, mn, c), p[f"{prefix}.attn.W_Q"], p[f"{prefix}.attn.W_K"], p[f"{prefix}.attn.W_V"]
        )
        if record is not None:
            record.append(scores.data)
        merged = values.transpose(0, 2, 1, 3).reshape(b, mn, cfg.heads * cfg.d_qkv)
        x = x + (ag.matmul(merged, p[f"{prefix}.attn.merge.W"]) + p[f"{prefix}.attn.merge.b"])
        u = ag.layer_norm(x, p[f"{prefix}.ln2.gamma"], p[f"{prefix}.ln2.beta"], cfg.ln_eps)
        u = ag.relu(ag.matmul(u, p[f"{prefix}.mlp.W1"]) + p[f"{prefix}.mlp.b1"])
        u = ag.relu(ag.matmul(u, p[f"{prefix}.mlp.W2"]) + p[f"{prefix}.mlp.b2"])
        u = ag.matmul(u, p[f"{prefix}.mlp.W3"]) + p[f"{prefix}.mlp.b3"]
        return x + u

    def forward(self, x, record_attention: list | None = None) -> Tensor:
        """(B, M, N, F) normalised history -> (B, H, N) normalised forecast.

        ``record_attention`` collects every score array (B, heads, MN, MN).
        """
        cfg, p = self.config, self.params
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 4 or x.shape[1:] != (cfg.m, cfg.n, cfg.f):
            raise DimensionError(f"expected input (B, {cfg.m}, {cfg.n}, {cfg.f}), got {x.shape}")
        b = x.shape[0]
        z = input_projection(x, p["input_proj.W"], p["input_proj.b"])
        z = add_encodings(z, p["encoding.temporal"], p["encoding.spatial"])
        z = z.reshape(b, cfg.sync_size, cfg.c_in)
        shared = None if cfg.per_block_mask else self.masked_adjacency()
        for prefix in self.block_prefixes():
            adjacency = self.masked_adjacency(prefix) if cfg.per_block_mask else shared
            y = self.stst_block(z, prefix, record_attention)
            z = z + gcn_layer(y, adjacency, p[f"{prefix}.gcn.W"], p[f"{prefix}.gcn.b"])
        return output_head(z, cfg.m, cfg.n, p["head.W1"], p["head.b1"], p["head.W2"], p["head.b2"])

    __call__ = forward

    def predict(self, history: np.ndarray, stats, batch_size: int = 16) -> np.ndarray:
        """Raw-unit forecasts (S, H, N) for normalised histories (S, M, N, F)."""
        outs = []
        with ag.no_grad():
            for start in range(0, history.shape[0], batch_size):
                outs.append(self.forward(history[start:start + batch_size]).data)
        pred = np.concatenate(outs, axis=0) if outs else np.zeros((0, self.config.h, self.config.n))
        return stats.inverse(pred)


__all__ = [
    "StsgtConfig",
    "StsgtModel",
    "add_encodings",
    "attention_head",
    "gcn_layer",
    "input_projection",
    "output_head",
]
