import numpy as np
import pytest

from stiminv.nn import Adam, Tensor, make_mlp
from stiminv.nn import tensor as T


def test_zero_gradient_leaves_params_unchanged():
    p = Tensor(np.array([[1.0, -2.0]]), requires_grad=True)
    opt = Adam([p])
    p.grad = np.zeros_like(p.data)
    opt.step()
    np.testing.assert_array_equal(p.data, [[1.0, -2.0]])
    assert opt.step_count == 1


@pytest.mark.parametrize("g", [0.37, -1.8, 250.0])
def test_first_step_is_lr_times_sign(g):
    p = Tensor([[5.0]], requires_grad=True)
    opt = Adam([p], lr=1e-3)
    p.grad = np.array([[g]])
    opt.step()
    assert 5.0 - p.data[0, 0] == pytest.approx(1e-3 * np.sign(g), rel=1e-6)


def test_constant_gradient_keeps_unit_update_magnitude():
    p = Tensor([[0.0]], requires_grad=True)
    opt = Adam([p], lr=1e-3)
    prev = 0.0
    for _ in range(2):
        p.grad = np.array([[4.2]])
        opt.step()
        assert prev - p.data[0, 0] == pytest.approx(1e-3, rel=1e-6)
        prev = p.data[0, 0]


def test_shape_mismatch_rejected():
    p = Tensor([[1.0, 2.0]], requires_grad=True)
    opt = Adam([p])
    p.grad = np.zeros((2, 2))
    with pytest.raises(ValueError):
        opt.step()


def test_missing_gradient_rejected():
    p = Tensor([[1.0]], requires_grad=True)
    opt = Adam([p])
    with pytest.raises(ValueError):
        opt.step()


def train_toy(seed):
    rng = np.random.default_rng(seed)
    net = make_mlp(1, 1, hidden_layers=2, hidden_units=4, rng=rng)
    opt = Adam(net.parameters(), lr=1e-3)
    x = rng.normal(size=(16, 1))
    y = np.sin(x)
    for _ in range(50):
        loss = T.tmean(T.square(net.forward(x, training=True) - y))
        loss.backward()
        opt.step()
    return net


def test_fixed_seed_training_is_bit_identical():
    a, b = train_toy(123), train_toy(123)
    for la, lb in zip(a.layers, b.layers):
        np.testing.assert_array_equal(la.weight.data, lb.weight.data)
        np.testing.assert_array_equal(la.bias.data, lb.bias.data)
        if la.batch_norm is not None:
            np.testing.assert_array_equal(la.batch_norm.running_mean, lb.batch_norm.running_mean)
