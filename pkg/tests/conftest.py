import numpy as np
import pytest

from stsgt import autograd as ag
from stsgt.autograd import Tensor
from stsgt.graph import SpatialGraph, build_spatial_adjacency
from stsgt.model import StsgtConfig, StsgtModel


def numeric_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        up = f()
        x[i] = old - eps
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * eps)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-wise relative error, symmetric in its arguments."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def tiny_graph(n: int, seed: int = 0) -> SpatialGraph:
    rng = np.random.default_rng(seed)
    return build_spatial_adjacency(rng.uniform(0, 1, (n, 2)), threshold=0.7,
                                   vertex_names=[f"v{i}" for i in range(n)])


def tiny_model(m=3, n=4, c_in=4, heads=2, d_qkv=3, h=2, seed=0, **kw) -> StsgtModel:
    cfg = StsgtConfig(m=m, h=h, n=n, c_in=c_in, heads=heads, d_qkv=d_qkv, mlp_hidden=2 * c_in,
                      head_hidden=5, num_layers=kw.pop("num_layers", 1), blocks_per_layer=kw.pop("blocks_per_layer", 2),
                      **kw)
    return StsgtModel(cfg, tiny_graph(n, seed), seed=seed)


def check_op(build, *shapes, seed=0, avoid_kinks=False, tol=1e-4):
    """Finite-difference check of every input of ``build(*tensors) -> Tensor``.

    The scalar loss is a fixed random projection of the output, so every
    output entry contributes with a different weight.
    """
    rng = np.random.default_rng(seed)
    arrays = []
    for s in shapes:
        a = rng.normal(size=s)
        if avoid_kinks:
            a = np.where(np.abs(a) < 1e-2, 0.5, a)
        arrays.append(a)
    probe = None

    def loss_value():
        out = build(*[Tensor(a) for a in arrays]).data
        return float(np.sum(out * probe))

    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = build(*tensors)
    probe = rng.normal(size=out.shape)
    out.backward(probe)
    for t, a in zip(tensors, arrays):
        num = numeric_grad(loss_value, a)
        assert rel_error(t.grad, num) < tol


def model_loss(model, x, y):
    return ag.mean_abs_error_loss(model.forward(x), Tensor(y))


def full_model_gradcheck(seed: int, picks: int = 20, eps: float = 1e-6) -> float:
    """Worst per-entry relative error over ``picks`` random parameter entries."""
    rng = np.random.default_rng(seed)
    model = tiny_model(seed=seed)
    # perturb the mask and encodings away from their neutral start
    for name in ("mask", "encoding.temporal", "encoding.spatial"):
        model.params[name].data = model.params[name].data + rng.normal(0, 0.3, model.params[name].shape)
    x = rng.normal(size=(3, 3, 4, 1))
    y = rng.normal(size=(3, 2, 4)) * 3
    model.zero_grad()
    model_loss(model, x, y).backward()
    names = sorted(model.params)
    worst = 0.0
    for _ in range(picks):
        name = names[rng.integers(len(names))]
        p = model.params[name]
        idx = tuple(rng.integers(s) for s in p.shape)
        analytic = p.grad[idx]
        old = p.data[idx]
        p.data[idx] = old + eps
        with ag.no_grad():
            up = model_loss(model, x, y).item()
        p.data[idx] = old - eps
        with ag.no_grad():
            down = model_loss(model, x, y).item()
        p.data[idx] = old
        numeric = (up - down) / (2 * eps)
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria record their verdict here; printed at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
