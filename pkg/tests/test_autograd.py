import numpy as np
import pytest

from oracles import finite_difference, relative_error
from evlink import autograd as ag
from evlink.autograd import Tensor, backprop


def check_op(build, shapes, seed=0, positive=False):
    rng = np.random.default_rng(seed)
    arrays = {f"a{i}": rng.uniform(0.2 if positive else -1, 1, s) for i, s in enumerate(shapes)}
    params = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
    grads = backprop(build(*params.values()), params)
    fd = finite_difference(lambda: build(*[Tensor(a) for a in arrays.values()]).item(), arrays)
    for k in arrays:
        assert relative_error(grads[k], fd[k]) < 1e-6, k


def test_add_mul_broadcast():
    check_op(lambda a, b: ((a + b) * a * 3.0 - b).sum(), [(3, 4), (4,)])


def test_matmul():
    check_op(lambda a, b: ag.square(a @ b).sum(), [(3, 5), (5, 2)])


def test_pointwise():
    check_op(lambda a: (ag.exp(a) + ag.sigmoid(a) + ag.softplus(a * 4.0)).sum(), [(6,)])
    check_op(lambda a: ag.log(a).sum(), [(6,)], positive=True)


def test_reductions_and_index():
    check_op(lambda a: ag.square(a.mean(axis=0)).sum() + a[np.array([0, 2]), np.array([1, 1])].sum(), [(3, 4)])


def test_softmax_heads():
    check_op(lambda a: (ag.log_softmax(a) * np.arange(12.0).reshape(3, 4)).sum(), [(3, 4)])
    check_op(lambda a: (ag.softmax(a) * np.arange(12.0).reshape(3, 4)).sum(), [(3, 4)])


def test_pair_distance():
    check_op(lambda a, b: ag.square(1.5 - ag.pair_distance(a, b)).sum(), [(4, 3), (4, 3)])


def test_pair_distance_zero_gradient_at_coincidence():
    a = Tensor(np.ones((1, 3)), requires_grad=True)
    b = Tensor(np.ones((1, 3)))
    g = backprop(ag.pair_distance(a, b).sum(), {"a": a})
    assert np.all(g["a"] == 0)


def test_conv2d():
    check_op(lambda x, w, b: ag.square(ag.conv2d(x, w, b)).sum(), [(2, 3, 5, 6), (4, 3, 3, 3), (4,)])


def test_conv2d_matches_direct_loop(rng):
    x = rng.normal(size=(1, 2, 4, 5))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    out = ag.conv2d(Tensor(x), Tensor(w), Tensor(b)).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    for o in range(3):
        for i in range(4):
            for j in range(5):
                ref = b[o] + sum(
                    w[o, c, di, dj] * xp[0, c, i + di, j + dj] for c in range(2) for di in range(3) for dj in range(3)
                )
                assert out[0, o, i, j] == pytest.approx(ref, abs=1e-12)


def test_maxpool():
    check_op(lambda x: ag.square(ag.maxpool2(x)).sum(), [(2, 2, 4, 6)])
    check_op(lambda x: ag.maxpool2(x).sum(), [(1, 1, 5, 5)])


def test_relu_chain():
    check_op(lambda x, w: ag.relu(x @ w).sum(), [(4, 3), (3, 5)], seed=3)


def test_shared_subexpression_accumulates():
    a = Tensor(np.array([2.0]), requires_grad=True)
    y = a * a
    z = (y + y * a).sum()
    g = backprop(z, {"a": a})
    assert g["a"][0] == pytest.approx(2 * 2 + 3 * 4)


def test_disconnected_parameter_flagged():
    a = Tensor(np.ones(2), requires_grad=True)
    b = Tensor(np.ones(2), requires_grad=True)
    g = backprop((a * 2.0).sum(), {"a": a, "b": b})
    assert g.disconnected == ["b"]
    assert np.all(g["b"] == 0)
