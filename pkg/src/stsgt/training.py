"""Adam, early stopping and the training loop."""

from __future__ import annotations

import contextlib
import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import WindowedDataset, WindowSet
from .errors import TrainingDivergedError
from .model import StsgtModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 100
    clip_norm: float = 5.0
    patience: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    deterministic: bool = True

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ValueError("batch_size, patience and max_epochs must be >= 1")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")


class Adam:
    """Bias-corrected adaptive moment estimation with a fixed learning rate."""

    def __init__(self, params: dict[str, Tensor], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        return {"step": self.step_count,
                "m": {k: a.copy() for k, a in self.m.items()},
                "v": {k: a.copy() for k, a in self.v.items()}}

    def load_state_dict(self, state: dict) -> None:
        self.step_count = int(state["step"])
        for k in self.params:
            self.m[k] = np.array(state["m"][k], dtype=np.float64)
            self.v[k] = np.array(state["v"][k], dtype=np.float64)


class EarlyStopping:
    def __init__(self, patience: int):
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, value: float, epoch: int) -> bool:
        """Record one epoch's score; True when it is a new best."""
        if value < self.best:
            self.best, self.best_epoch, self.bad_epochs = value, epoch, 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_mae: float
    val_mae: float
    seconds: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mae: float = float("inf")
    stopped_early: bool = False

    def write_csv(self, path) -> None:
        """Loss history; wall-clock lives in :meth:`write_timing_csv` so this file is reproducible."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_mae", "val_mae"])
            for r in self.epochs:
                w.writerow([r.epoch, repr(r.train_mae), repr(r.val_mae)])

    def write_timing_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_mae", "val_mae", "seconds"])
            for r in self.epochs:
                w.writerow([r.epoch, repr(r.train_mae), repr(r.val_mae), f"{r.seconds:.3f}"])


@contextlib.contextmanager
def single_threaded(enabled: bool = True):
    """Pin BLAS to one thread so reductions happen in a fixed order."""
    if not enabled:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        yield
        return
    with threadpool_limits(limits=1):
        yield


def denormalize(pred: Tensor, stats) -> Tensor:
    return pred * stats.std + stats.mean


def split_mae(model: StsgtModel, windows: WindowSet, batch_size: int = 16) -> float:
    """MAE in raw units over every horizon step, vertex and window."""
    pred = model.predict(windows.history, windows.stats, batch_size)
    return float(np.mean(np.abs(pred - windows.target)))


def _param_summary(model: StsgtModel) -> str:
    norms = sorted(((float(np.linalg.norm(p.data)), n) for n, p in model.named_parameters()), reverse=True)
    return ", ".join(f"{n}={v:.3g}" for v, n in norms[:5])


def train_step(model: StsgtModel, opt: Adam, x: np.ndarray, y: np.ndarray, stats, clip_norm: float) -> tuple[float, float]:
    """One optimisation step; returns (loss, pre-clip grad norm)."""
    model.zero_grad()
    pred = denormalize(model.forward(x), stats)
    loss = ag.mean_abs_error_loss(pred, Tensor(y))
    value = float(loss.data)
    if not np.isfinite(value):
        raise TrainingDivergedError(f"non-finite loss {value}")
    loss.backward()
    norm = ag.clip_global_norm(model.parameters(), clip_norm)
    opt.step()
    return value, norm


def train(
    model: StsgtModel,
    dataset: WindowedDataset,
    cfg: TrainConfig = TrainConfig(),
    optimizer_state: dict | None = None,
    start_epoch: int = 1,
    on_epoch=None,
) -> tuple[dict[str, np.ndarray], TrainReport, Adam]:
    """Fit ``model`` on the train windows, selecting on validation MAE.

    The best parameters are restored into ``model`` before returning and
    also returned as a state dict.
    """
    if len(dataset.train) == 0 or len(dataset.val) == 0:
        raise ValueError("train and validation splits must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    if optimizer_state is not None:
        opt.load_state_dict(optimizer_state)
    stopper = EarlyStopping(cfg.patience)
    report = TrainReport()
    best_state = model.state_dict()
    train_set, stats = dataset.train, dataset.train.stats

    with single_threaded(cfg.deterministic):
        for epoch in range(start_epoch, start_epoch + cfg.max_epochs):
            t0 = time.perf_counter()
            order = rng.permutation(len(train_set))
            total = 0.0
            for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
                idx = order[start:start + cfg.batch_size]
                try:
                    loss, _ = train_step(model, opt, train_set.history[idx], train_set.target[idx],
                                         stats, cfg.clip_norm)
                except TrainingDivergedError as exc:
                    raise TrainingDivergedError(
                        f"{exc} at epoch {epoch}, batch {bi}; largest parameter norms: {_param_summary(model)}"
                    ) from None
                total += loss * len(idx)
            train_mae = total / len(order)
            val_mae = split_mae(model, dataset.val, cfg.batch_size)
            record = EpochRecord(epoch, train_mae, val_mae, time.perf_counter() - t0)
            report.epochs.append(record)
            if stopper.update(val_mae, epoch):
                best_state = model.state_dict()
            log.info("epoch %d train_mae %.4f val_mae %.4f (%.1fs)", epoch, train_mae, val_mae, record.seconds)
            if on_epoch is not None:
                on_epoch(record)
            if stopper.should_stop:
                report.stopped_early = True
                break

    model.load_state_dict(best_state)
    report.best_epoch, report.best_val_mae = stopper.best_epoch, stopper.best
    return best_state, report, opt
