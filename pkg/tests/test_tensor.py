import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stiminv.errors import NonFiniteError
from stiminv.nn import Tensor
from stiminv.nn import tensor as T

from helpers import assert_grads_match


def test_scalar_linear_grad():
    w = Tensor([[3.0]], requires_grad=True)
    loss = w * 2.0
    loss.backward()
    assert w.grad[0, 0] == 2.0


def test_squared_error_grad():
    # loss = (w*x - y)^2 with w=1, x=2, y=1  ->  dloss/dw = 2(wx-y)x = 4
    w = Tensor([[1.0]], requires_grad=True)
    loss = T.square(w * 2.0 - 1.0)
    loss.backward()
    assert w.grad[0, 0] == pytest.approx(4.0, abs=1e-12)


def test_softmax_cross_entropy_uniform_logits():
    # At uniform logits the CE gradient per logit is 1/K - onehot.
    K = 5
    logits = Tensor(np.zeros((1, K)), requires_grad=True)
    onehot = np.zeros((1, K))
    onehot[0, 2] = 1.0
    loss = -T.tsum(T.log_softmax(logits) * onehot)
    loss.backward()
    np.testing.assert_allclose(logits.grad, 1.0 / K - onehot, atol=1e-12)


def test_backward_requires_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        (x * 2.0).backward()


def test_matmul_shape_mismatch():
    a = Tensor(np.ones((2, 3)))
    b = Tensor(np.ones((2, 3)))
    with pytest.raises(ValueError):
        T.matmul(a, b)


def test_grad_accumulates_over_reuse():
    x = Tensor([[2.0]], requires_grad=True)
    loss = x * x  # uses x twice
    loss.backward()
    assert x.grad[0, 0] == pytest.approx(4.0)


def test_unused_parameter_has_no_grad():
    x = Tensor([[2.0]], requires_grad=True)
    y = Tensor([[5.0]], requires_grad=True)
    (x * 3.0).backward()
    assert y.grad is None


def test_debug_finite_check():
    T.DEBUG_CHECK_FINITE = True
    try:
        with np.errstate(invalid="ignore"), pytest.raises(NonFiniteError):
            T.log(Tensor([[-1.0]], requires_grad=True))
    finally:
        T.DEBUG_CHECK_FINITE = False


@given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_softmax_rows_sum_to_one(rows, cols, seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(scale=20.0, size=(rows, cols)))
    out = T.softmax(x)
    np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(out.data >= 0)


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_eluplus1_strictly_positive(seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(scale=50.0, size=(3, 4)))
    assert np.all(T.eluplus1(x).data > 0)


def test_logsumexp_matches_naive():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 6))
    out = T.logsumexp(Tensor(x))
    np.testing.assert_allclose(out.data, np.log(np.exp(x).sum(axis=1, keepdims=True)), rtol=1e-12)


def test_take_cols_and_concat_roundtrip():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    perm = np.array([4, 2, 0, 1, 3])
    y = T.take_cols(x, perm)
    inv = np.argsort(perm)
    z = T.take_cols(y, inv)
    np.testing.assert_array_equal(z.data, x.data)
    T.tsum(z * z).backward()
    np.testing.assert_allclose(x.grad, 2.0 * x.data)


@pytest.mark.parametrize("seed", range(8))
def test_random_composition_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    w1 = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b1 = Tensor(rng.normal(size=(1, 4)), requires_grad=True)
    w2 = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    x = rng.normal(size=(5, 3))

    def loss_fn():
        h = T.relu(Tensor(x) @ w1 + b1)
        out = T.sigmoid(h @ w2)
        mix = T.concat_cols([T.exp(out * 0.1), T.log(out + 1.5)])
        return T.tmean(T.square(mix)) + T.tsum(T.logsumexp(h)) * 0.01

    assert_grads_match(loss_fn, [w1, b1, w2])


@pytest.mark.parametrize("seed", range(4))
def test_trig_and_division_match_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(1, 3)) + 3.0, requires_grad=True)

    def loss_fn():
        return T.tmean(T.cos(a) / b + T.sin(a) * T.sqrt(b) - T.pow_const(b, 1.5))

    assert_grads_match(loss_fn, [a, b])


def test_standard_normal_logdensity():
    x = Tensor(np.array([[0.0, 0.0]]))
    out = T.standard_normal_logdensity(x)
    assert out.item() == pytest.approx(-np.log(2 * np.pi), rel=1e-12)
