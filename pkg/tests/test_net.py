import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stiminv.errors import NonFiniteError
from stiminv.nn import BatchNorm, DenseLayer, DenseNet, Tensor, make_mlp
from stiminv.nn import tensor as T

from helpers import assert_grads_match


def single_layer(weight, bias, activation, bn=None):
    return DenseNet([DenseLayer(np.array(weight, dtype=float), np.array(bias, dtype=float), activation, bn)])


def test_identity_net():
    net = single_layer([[1.0]], [0.0], "linear")
    assert net.forward([[3.0]]).data[0, 0] == 3.0


def test_relu_clamps_negative_preactivation():
    net = single_layer([[1.0]], [-2.0], "relu")
    assert net.forward([[1.0]]).data[0, 0] == 0.0


def test_eluplus1_deep_negative_is_tiny_positive():
    net = single_layer([[1.0]], [0.0], "eluplus1")
    out = net.forward([[-20.0]]).data[0, 0]
    assert 0.0 < out <= 1e-6
    assert out == pytest.approx(np.exp(-20.0), rel=1e-12)


def test_dimension_mismatch_raises():
    net = single_layer([[1.0, 2.0], [3.0, 4.0]], [0.0, 0.0], "linear")
    with pytest.raises(ValueError):
        net.forward([[1.0, 2.0, 3.0]])
    with pytest.raises(ValueError):
        DenseNet([
            DenseLayer(np.ones((2, 3)), np.zeros(3), "linear"),
            DenseLayer(np.ones((4, 1)), np.zeros(1), "linear"),
        ])


def test_nonfinite_activation_detected():
    net = single_layer([[1e308]], [0.0], "linear")
    with np.errstate(over="ignore"), pytest.raises(NonFiniteError):
        net.forward([[1e10]])


class TestBatchNorm:
    def test_identity_on_standardized_input(self):
        bn = BatchNorm(1)
        x = np.array([[-1.0], [1.0]])  # zero mean, unit (biased) variance
        out = bn(Tensor(x), training=True)
        np.testing.assert_allclose(out.data, x, atol=1e-4)

    def test_constant_column_collapses_to_beta(self):
        bn = BatchNorm(2)
        bn.beta = Tensor(np.array([[5.0, -1.0]]), requires_grad=True)
        x = np.full((4, 2), 3.7)
        out = bn(Tensor(x), training=True)
        np.testing.assert_allclose(out.data, np.array([[5.0, -1.0]] * 4), atol=1e-9)

    def test_hand_computed_normalization(self):
        bn = BatchNorm(1, epsilon=1e-12)
        bn.gamma = Tensor(np.array([[2.0]]), requires_grad=True)
        bn.beta = Tensor(np.array([[1.0]]), requires_grad=True)
        out = bn(Tensor(np.array([[1.0], [3.0]])), training=True)
        np.testing.assert_allclose(out.data, np.array([[-1.0], [3.0]]), atol=1e-6)

    def test_training_output_statistics(self):
        rng = np.random.default_rng(3)
        bn = BatchNorm(3)
        bn.gamma = Tensor(np.array([[2.0, 1.0, 0.5]]), requires_grad=True)
        bn.beta = Tensor(np.array([[1.0, -2.0, 0.0]]), requires_grad=True)
        out = bn(Tensor(rng.normal(size=(256, 3), scale=4.0)), training=True)
        np.testing.assert_allclose(out.data.mean(axis=0), [1.0, -2.0, 0.0], atol=1e-9)
        np.testing.assert_allclose(out.data.var(axis=0), [4.0, 1.0, 0.25], atol=1e-3)

    def test_running_statistics_update_rule(self):
        bn = BatchNorm(1, momentum=0.9)
        x = np.array([[1.0], [3.0]])
        bn(Tensor(x), training=True)
        assert bn.running_mean[0, 0] == pytest.approx(0.9 * 0.0 + 0.1 * 2.0)
        assert bn.running_var[0, 0] == pytest.approx(0.9 * 1.0 + 0.1 * 1.0)

    def test_inference_uses_running_statistics(self):
        bn = BatchNorm(1)
        bn.running_mean = np.array([[10.0]])
        bn.running_var = np.array([[4.0]])
        out = bn(Tensor(np.array([[12.0]])), training=False)
        assert out.data[0, 0] == pytest.approx(2.0 / np.sqrt(4.0 + bn.epsilon))

    def test_batch_of_one_rejected_in_training(self):
        bn = BatchNorm(1)
        with pytest.raises(ValueError):
            bn(Tensor(np.array([[1.0]])), training=True)

    def test_gradients_flow_through_batch_statistics(self):
        rng = np.random.default_rng(7)
        bn = BatchNorm(2)
        x = rng.normal(size=(5, 2))

        def loss_fn():
            return T.tmean(T.square(bn(Tensor(x), training=True) - 1.3))

        assert_grads_match(loss_fn, bn.parameters())


def test_make_mlp_structure():
    rng = np.random.default_rng(0)
    net = make_mlp(2, 3, hidden_layers=4, hidden_units=10, rng=rng)
    assert net.in_dim == 2 and net.out_dim == 3
    assert len(net.layers) == 5
    assert all(layer.activation == "relu" for layer in net.layers[:-1])
    assert net.layers[-1].activation == "linear"
    assert net.layers[-1].batch_norm is None
    assert all(layer.batch_norm is not None for layer in net.layers[:-1])
    out = net.forward(rng.normal(size=(6, 2)), training=True)
    assert out.data.shape == (6, 3)


def test_he_uniform_bounds():
    rng = np.random.default_rng(1)
    net = make_mlp(9, 1, hidden_layers=1, hidden_units=50, rng=rng)
    w = net.layers[0].weight.data
    limit = np.sqrt(6.0 / 9)
    assert np.all(np.abs(w) <= limit)
    assert np.abs(w).max() > 0.5 * limit


def test_serialization_roundtrip_is_exact():
    rng = np.random.default_rng(5)
    net = make_mlp(3, 2, hidden_layers=2, hidden_units=4, rng=rng)
    net.forward(rng.normal(size=(8, 3)), training=True)  # move running stats
    blob = json.dumps(net.to_dict())
    restored = DenseNet.from_dict(json.loads(blob))
    x = rng.normal(size=(5, 3))
    np.testing.assert_array_equal(net.forward(x).data, restored.forward(x).data)
    for a, b in zip(net.layers, restored.layers):
        np.testing.assert_array_equal(a.weight.data, b.weight.data)
        if a.batch_norm is not None:
            np.testing.assert_array_equal(a.batch_norm.running_var, b.batch_norm.running_var)


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_mlp_forward_is_finite_and_deterministic(seed):
    rng = np.random.default_rng(seed)
    net = make_mlp(2, 2, hidden_layers=2, hidden_units=5, rng=rng)
    x = rng.normal(size=(4, 2), scale=3.0)
    a = net.forward(x, training=False).data
    b = net.forward(x, training=False).data
    np.testing.assert_array_equal(a, b)
    assert np.all(np.isfinite(a))
