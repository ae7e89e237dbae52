"""Gradient checks for every tape operation against central differences."""

import numpy as np
import pytest

from chronorec import autograd as ag
from chronorec.autograd import Tensor

from helpers import max_rel_error, numeric_grad

RNG = np.random.default_rng(20240811)


def check_op(build, *shapes, h=1e-6, tol=1e-7):
    """``build(*tensors) -> Tensor``; verifies grads of a random scalar
    projection of the output for every input."""
    arrays = [RNG.normal(size=s) for s in shapes]
    params = [ag.parameter(a, name=f"p{i}") for i, a in enumerate(arrays)]
    proj = RNG.normal(size=build(*params).data.shape)

    def scalar():
        return float((build(*params).data * proj).sum())

    out = ag.tsum(ag.mul(build(*params), Tensor(proj)))
    ag.backward(out)
    for p, a in zip(params, arrays):
        want = numeric_grad(scalar, p.data, h=h)
        assert p.grad is not None
        assert max_rel_error(p.grad, want) < tol, f"{build.__name__}: {p.name}"


def test_add_broadcast():
    check_op(lambda a, b: ag.add(a, b), (3, 4), (4,))
    check_op(lambda a, b: ag.add(a, b), (2, 3, 4), (3, 1))


def test_mul_broadcast():
    check_op(lambda a, b: ag.mul(a, b), (3, 4), (4,))
    check_op(lambda a, b: ag.mul(a, b), (5, 1, 4), (3, 4))


def test_matmul():
    check_op(lambda x, w: ag.matmul(x, w), (5, 3), (3, 4))
    check_op(lambda x, w: ag.matmul(x, w), (2, 5, 3), (3, 4))


def test_reshape_moveaxis_concat_stack_narrow():
    check_op(lambda a: ag.reshape(a, (6, 2)), (3, 4))
    check_op(lambda a: ag.moveaxis(a, 1, 2), (2, 3, 4))
    check_op(lambda a, b: ag.concat([a, b], axis=-1), (3, 2), (3, 5))
    check_op(lambda a, b: ag.stack([a, b], axis=-1), (3, 2), (3, 2))
    check_op(lambda a: ag.narrow(a, 1, 3), (4, 6))


def test_gather_scatter_rows():
    idx = np.array([2, 0, 2, 1])
    check_op(lambda a: ag.gather_rows(a, idx), (3, 4))
    idx2 = np.array([[0, 1], [2, 2]])
    check_op(lambda a: ag.gather_rows(a, idx2), (3, 4))
    check_op(lambda base, rows: ag.scatter_rows(base, np.array([1, 3]), rows), (5, 2), (2, 2))


def test_reductions():
    check_op(lambda a: ag.tsum(a), (3, 4))
    check_op(lambda a: ag.tsum(a, axis=1), (3, 4))
    check_op(lambda a: ag.tsum(a, axis=-1, keepdims=True), (2, 3, 4))
    check_op(lambda a: ag.tmean(a, axis=0), (6, 2))


@pytest.mark.parametrize("op", [ag.sigmoid, ag.tanh, ag.softplus, ag.exp, ag.cos, ag.sin])
def test_smooth_elementwise(op):
    check_op(lambda a: op(a), (4, 5))


def test_log_positive_domain():
    arrays = np.abs(RNG.normal(size=(4, 3))) + 0.5
    p = ag.parameter(arrays, name="p")
    proj = RNG.normal(size=(4, 3))
    out = ag.tsum(ag.mul(ag.log(p), Tensor(proj)))
    ag.backward(out)
    want = numeric_grad(lambda: float((np.log(p.data) * proj).sum()), p.data)
    assert max_rel_error(p.grad, want) < 1e-7


def test_relu_away_from_kink():
    a = RNG.normal(size=(5, 5))
    a[np.abs(a) < 0.1] += 0.5
    p = ag.parameter(a, name="p")
    out = ag.tsum(ag.relu(p))
    ag.backward(out)
    assert np.array_equal(p.grad, (a > 0).astype(float))


def test_masked_softmax_values_and_grad():
    scores = RNG.normal(size=(4, 6))
    mask = RNG.random((4, 6)) > 0.3
    mask[0] = False          # fully masked row
    mask[1] = [True] + [False] * 5  # singleton
    p = ag.parameter(scores.copy(), name="s")
    alpha = ag.masked_softmax(p, mask)
    assert np.all(alpha.data[~mask] == 0.0)
    assert np.all(alpha.data[0] == 0.0)
    assert alpha.data[1, 0] == 1.0
    sums = alpha.data.sum(axis=-1)
    assert np.allclose(sums[1:], 1.0, atol=1e-12)

    proj = RNG.normal(size=(4, 6))
    out = ag.tsum(ag.mul(alpha, Tensor(proj)))
    ag.backward(out)

    def scalar():
        x = np.where(mask, p.data, -np.inf)
        m = np.max(x, axis=-1, keepdims=True)
        m = np.where(np.isfinite(m), m, 0.0)
        e = np.where(mask, np.exp(x - m), 0.0)
        denom = e.sum(axis=-1, keepdims=True)
        a = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0)
        return float((a * proj).sum())

    want = numeric_grad(scalar, p.data)
    assert max_rel_error(p.grad, want) < 1e-7


def test_no_grad_builds_no_graph():
    p = ag.parameter(RNG.normal(size=(3, 3)), name="p")
    with ag.no_grad():
        out = ag.tsum(ag.sigmoid(ag.matmul(Tensor(RNG.normal(size=(2, 3))), p)))
    assert out._parents == ()
    assert not out.requires_grad


def test_repeated_backward_through_shared_subgraph():
    # Two losses share an intermediate node; per-call accumulation means
    # the second backward must not see residue from the first.
    p = ag.parameter(np.array([1.0, 2.0]), name="p")
    shared = ag.mul(p, p)
    loss_a = ag.tsum(shared)
    loss_b = ag.tsum(ag.mul(shared, 3.0))
    ag.backward(loss_a)
    first = p.grad.copy()
    assert np.allclose(first, 2.0 * p.data)
    ag.backward(loss_b)
    assert np.allclose(p.grad, first + 6.0 * p.data)


def test_backward_requires_scalar():
    p = ag.parameter(np.ones((2, 2)), name="p")
    with pytest.raises(ValueError):
        ag.backward(ag.mul(p, 2.0))


def test_division_and_operator_sugar():
    p = ag.parameter(np.array([2.0, 4.0]), name="p")
    out = ag.tsum((p / 2.0 - 1.0) * 3.0 + (-p))
    ag.backward(out)
    assert np.allclose(p.grad, 3.0 / 2.0 - 1.0)
