import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from stsgt import autograd as ag
from stsgt.autograd import Tensor
from stsgt.errors import DimensionError

from conftest import check_op


# -- finite-difference oracles per op ---------------------------------------


@pytest.mark.parametrize("seed", range(3))
def test_matmul_gradient(seed):
    check_op(ag.matmul, (3, 4), (4, 2), seed=seed)


def test_batched_matmul_gradient_with_broadcast():
    check_op(ag.matmul, (2, 1, 3, 4), (5, 4, 2), seed=1)


@pytest.mark.parametrize("op", [ag.add, ag.sub, ag.mul])
def test_broadcasting_elementwise_gradients(op):
    check_op(op, (3, 4), (4,), seed=2)
    check_op(op, (2, 1, 4), (3, 1), seed=3)


def test_hadamard_gradient():
    check_op(ag.hadamard, (4, 5), (4, 5))


def test_relu_and_abs_gradients_away_from_kinks():
    check_op(ag.relu, (6, 5), avoid_kinks=True)
    check_op(ag.tabs, (6, 5), avoid_kinks=True)


def test_reduction_and_shape_gradients():
    check_op(lambda x: ag.tsum(x, axis=1), (3, 4, 2))
    check_op(lambda x: ag.mean(x, axis=(0, 2), keepdims=True), (3, 4, 2))
    check_op(lambda x: ag.reshape(x, (6, 4)), (3, 4, 2))
    check_op(lambda x: ag.transpose(x, (2, 0, 1)), (3, 4, 2))


def test_softmax_gradient():
    check_op(ag.row_softmax, (4, 6))
    check_op(ag.row_softmax, (2, 3, 5), seed=4)


def test_attention_scores_gradient():
    check_op(lambda q, k: ag.attention_scores(q, k, 0.37), (2, 5, 3), (2, 5, 3))


def test_attention_scores_equal_composed_ops(rng):
    q, k = rng.normal(size=(3, 6, 4)), rng.normal(size=(3, 6, 4))
    fused = ag.attention_scores(Tensor(q), Tensor(k), 0.5).data
    composed = ag.row_softmax(ag.matmul(Tensor(q), ag.transpose(Tensor(k), (0, 2, 1))) * 0.5).data
    np.testing.assert_allclose(fused, composed, atol=1e-14)


def test_layer_norm_gradient():
    check_op(lambda x, g, b: ag.layer_norm(x, g, b), (5, 16), (16,), (16,))
    check_op(lambda x, g, b: ag.layer_norm(x, g, b), (2, 3, 4), (4,), (4,), seed=5)


def test_mae_loss_gradient():
    check_op(ag.mean_abs_error_loss, (4, 3), (4, 3), avoid_kinks=True)


def test_three_op_chain_gradient():
    check_op(lambda a, b, c: ag.relu(ag.matmul(a, b)) * c, (3, 4), (4, 5), (3, 5), avoid_kinks=True)


def test_twenty_random_instances_per_op():
    ops = [
        (ag.matmul, [(3, 4), (4, 2)]),
        (ag.row_softmax, [(3, 5)]),
        (lambda x, g, b: ag.layer_norm(x, g, b), [(4, 6), (6,), (6,)]),
        (ag.hadamard, [(3, 3), (3, 3)]),
        (lambda q, k: ag.attention_scores(q, k, 0.5), [(4, 3), (4, 3)]),
    ]
    for op, shapes in ops:
        for seed in range(20):
            check_op(op, *shapes, seed=100 + seed)


# -- worked examples -------------------------------------------------------


def test_matmul_examples():
    x = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(ag.matmul(Tensor(np.eye(2)), Tensor(x)).data, x)
    out = ag.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
    np.testing.assert_array_equal(out.data, [[3.0], [7.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        ag.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_softmax_examples():
    np.testing.assert_allclose(ag.row_softmax(Tensor(np.zeros((1, 4)))).data, [[0.25] * 4])
    e = math.e
    np.testing.assert_allclose(ag.row_softmax(Tensor([[1.0, 0.0]])).data, [[e / (e + 1), 1 / (e + 1)]], rtol=1e-15)
    big = ag.row_softmax(Tensor([[1e4, 0.0, -3.0]])).data
    assert np.all(np.isfinite(big))
    assert abs(big.sum() - 1.0) < 1e-12


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=3, max_side=6),
                  elements=st.floats(-50, 50)))
def test_softmax_rows_sum_to_one_and_positive(x):
    s = ag.row_softmax(Tensor(x)).data
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(s > 0)


def test_layer_norm_examples():
    x = Tensor(np.full((2, 5), 3.0))
    out = ag.layer_norm(x, Tensor(np.ones(5)), Tensor(np.zeros(5)))
    np.testing.assert_array_equal(out.data, np.zeros((2, 5)))
    beta = np.arange(5.0)
    out = ag.layer_norm(Tensor(np.random.default_rng(0).normal(size=(3, 5))), Tensor(np.zeros(5)), Tensor(beta))
    np.testing.assert_array_equal(out.data, np.broadcast_to(beta, (3, 5)))


def test_elementwise_examples():
    np.testing.assert_array_equal(ag.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])
    x = np.random.default_rng(1).normal(size=(3, 3))
    np.testing.assert_array_equal(ag.hadamard(Tensor(x), Tensor(np.ones((3, 3)))).data, x)
    assert ag.mean_abs_error_loss(Tensor([1.0, 3.0]), Tensor([2.0, 5.0])).item() == 1.5
    with pytest.raises(DimensionError):
        ag.hadamard(Tensor(np.ones(3)), Tensor(np.ones(4)))
    with pytest.raises(DimensionError):
        ag.reshape(Tensor(np.ones(6)), (4, 2))


def test_kinks_use_zero_subgradient():
    x = Tensor([0.0, 1.0, -1.0], requires_grad=True)
    ag.tsum(ag.relu(x)).backward()
    np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])
    y = Tensor([0.0, 2.0, -2.0], requires_grad=True)
    ag.tsum(ag.tabs(y)).backward()
    np.testing.assert_array_equal(y.grad, [0.0, 1.0, -1.0])


# -- clipping ----------------------------------------------------------------


def _with_grad(values):
    t = Tensor(np.zeros(len(values)), requires_grad=True)
    t.grad = np.array(values, dtype=np.float64)
    return t


def test_clip_global_norm_examples():
    t = _with_grad([3.0, 4.0])
    assert ag.clip_global_norm([t], 5.0) == 5.0
    np.testing.assert_array_equal(t.grad, [3.0, 4.0])

    t = _with_grad([6.0, 8.0])
    ag.clip_global_norm([t], 5.0)
    np.testing.assert_allclose(t.grad, [3.0, 4.0], rtol=1e-15)

    a, b = _with_grad([6.0, 0.0]), _with_grad([0.0, 8.0])
    assert ag.clip_global_norm([a, b], 5.0) == pytest.approx(10.0)
    np.testing.assert_allclose(a.grad, [3.0, 0.0])
    np.testing.assert_allclose(b.grad, [0.0, 4.0])
    assert ag.global_grad_norm([a, b]) == pytest.approx(5.0, abs=1e-12)


# -- graph bookkeeping -------------------------------------------------------


def test_untracked_tensors_get_no_grad_and_tracked_all_populated():
    w = Tensor(np.ones((2, 2)), requires_grad=True)
    c = Tensor(np.ones((2, 2)))
    ag.tsum(ag.matmul(w, c)).backward()
    assert w.grad is not None and w.grad.shape == w.shape
    assert c.grad is None


def test_disjoint_backward_leaves_other_grads_untouched():
    a = Tensor(np.ones(3), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    other = Tensor(np.ones(3), requires_grad=True)
    other.grad = np.full(3, 7.0)
    ag.tsum(ag.hadamard(a, b)).backward()
    np.testing.assert_array_equal(other.grad, [7.0, 7.0, 7.0])


def test_shared_subexpression_accumulates():
    x = Tensor([2.0, -1.0], requires_grad=True)
    y = x * x + x  # d/dx = 2x + 1
    ag.tsum(y).backward()
    np.testing.assert_array_equal(x.grad, [5.0, -1.0])


def test_trace_visits_each_op_once_in_dependency_order():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    h = ag.relu(x)
    out = ag.tsum(h * h + h)
    trace = ag.computation_trace(out)
    ids = [id(e.output) for e in trace]
    assert len(ids) == len(set(ids))
    position = {i: k for k, i in enumerate(ids)}
    for entry in trace:
        for parent in entry.inputs:
            if id(parent) in position:
                assert position[id(parent)] < position[id(entry.output)]
    assert trace[-1].output is out


def test_no_grad_builds_no_graph():
    w = Tensor(np.ones(3), requires_grad=True)
    with ag.no_grad():
        out = w * 2.0
    assert not out.requires_grad


def test_deep_chain_does_not_recurse():
    x = Tensor(np.ones(2), requires_grad=True)
    y = x
    for _ in range(5000):
        y = y + 0.0
    ag.tsum(y).backward()
    np.testing.assert_array_equal(x.grad, [1.0, 1.0])
