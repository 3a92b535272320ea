"""Dense networks with optional per-layer batch normalization.

A ``DenseNet`` is a plain stack of affine layers, each tagged with one of
four activations (relu / linear / softmax / eluplus1) and optionally
preceded by batch normalization (applied to the pre-activation).  The
whole object is a value: deep-copyable, serializable to a JSON-friendly
dict, and safe to move between threads.
"""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteError
from . import tensor as T
from .tensor import Tensor

ACTIVATIONS = ("linear", "relu", "softmax", "eluplus1")

BN_MOMENTUM = 0.99
BN_EPSILON = 1e-5


def apply_activation(z: Tensor, activation: str) -> Tensor:
    if activation == "linear":
        return z
    if activation == "relu":
        return T.relu(z)
    if activation == "softmax":
        return T.softmax(z)
    if activation == "eluplus1":
        return T.eluplus1(z)
    raise ValueError(f"unknown activation {activation!r}")


class BatchNorm:
    """Per-feature batch normalization with running statistics.

    Training mode normalizes with batch statistics (batch size >= 2
    required) and updates the running buffers by
    ``running = momentum * running + (1 - momentum) * batch``.
    Inference mode uses the frozen running statistics.
    """

    def __init__(self, dim: int, momentum: float = BN_MOMENTUM, epsilon: float = BN_EPSILON):
        self.gamma = Tensor(np.ones((1, dim)), requires_grad=True)
        self.beta = Tensor(np.zeros((1, dim)), requires_grad=True)
        self.running_mean = np.zeros((1, dim))
        self.running_var = np.ones((1, dim))
        self.momentum = momentum
        self.epsilon = epsilon

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if training:
            if x.data.shape[0] < 2:
                raise ValueError("batch normalization requires batch size >= 2 in training mode")
            out, mu, var = T.batchnorm_train(x, self.gamma, self.beta, self.epsilon)
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mu
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
            return out
        scale = 1.0 / np.sqrt(self.running_var + self.epsilon)
        xhat = (x - self.running_mean) * scale
        return self.gamma * xhat + self.beta

    def parameters(self) -> list[Tensor]:
        return [self.gamma, self.beta]

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma.data.reshape(-1).tolist(),
            "beta": self.beta.data.reshape(-1).tolist(),
            "running_mean": self.running_mean.reshape(-1).tolist(),
            "running_var": self.running_var.reshape(-1).tolist(),
            "momentum": self.momentum,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BatchNorm":
        dim = len(d["gamma"])
        bn = cls(dim, momentum=d["momentum"], epsilon=d["epsilon"])
        bn.gamma = Tensor(np.array(d["gamma"]).reshape(1, dim), requires_grad=True)
        bn.beta = Tensor(np.array(d["beta"]).reshape(1, dim), requires_grad=True)
        bn.running_mean = np.array(d["running_mean"]).reshape(1, dim)
        bn.running_var = np.array(d["running_var"]).reshape(1, dim)
        return bn


class DenseLayer:
    def __init__(self, weight: np.ndarray, bias: np.ndarray, activation: str,
                 batch_norm: BatchNorm | None = None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.weight = Tensor(weight, requires_grad=True)
        self.bias = Tensor(bias.reshape(1, -1), requires_grad=True)
        self.activation = activation
        self.batch_norm = batch_norm

    @property
    def in_dim(self) -> int:
        return self.weight.data.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.data.shape[1]

    def parameters(self) -> list[Tensor]:
        params = [self.weight, self.bias]
        if self.batch_norm is not None:
            params += self.batch_norm.parameters()
        return params


class DenseNet:
    """A feed-forward stack of :class:`DenseLayer`."""

    def __init__(self, layers: list[DenseLayer]):
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(
                    f"layer dimensions do not compose: {prev.out_dim} -> {nxt.in_dim}"
                )
        self.layers = layers

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def forward(self, x, training: bool = False) -> Tensor:
        h = T.as_tensor(x)
        if h.data.shape[1] != self.in_dim:
            raise ValueError(
                f"input has {h.data.shape[1]} features, net expects {self.in_dim}"
            )
        for layer in self.layers:
            z = h @ layer.weight + layer.bias
            if layer.batch_norm is not None:
                z = layer.batch_norm(z, training)
            h = apply_activation(z, layer.activation)
        if not np.all(np.isfinite(h.data)):
            raise NonFiniteError("non-finite activation detected in dense net output")
        return h

    __call__ = forward

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def to_dict(self) -> dict:
        return {
            "layers": [
                {
                    "in_dim": layer.in_dim,
                    "out_dim": layer.out_dim,
                    "activation": layer.activation,
                    "weight": layer.weight.data.reshape(-1).tolist(),
                    "bias": layer.bias.data.reshape(-1).tolist(),
                    "batch_norm": layer.batch_norm.to_dict() if layer.batch_norm else None,
                }
                for layer in self.layers
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNet":
        layers = []
        for spec in d["layers"]:
            weight = np.array(spec["weight"]).reshape(spec["in_dim"], spec["out_dim"])
            bias = np.array(spec["bias"])
            bn = BatchNorm.from_dict(spec["batch_norm"]) if spec["batch_norm"] else None
            layers.append(DenseLayer(weight, bias, spec["activation"], bn))
        return cls(layers)


def he_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def make_mlp(
    in_dim: int,
    out_dim: int,
    hidden_layers: int,
    hidden_units: int,
    rng: np.random.Generator,
    out_activation: str = "linear",
    batch_norm: bool = True,
) -> DenseNet:
    """ReLU MLP with He-uniform init; batch norm on hidden pre-activations."""
    dims = [in_dim] + [hidden_units] * hidden_layers + [out_dim]
    layers = []
    for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        hidden = i < hidden_layers
        layers.append(
            DenseLayer(
                he_uniform(rng, d_in, d_out),
                np.zeros(d_out),
                "relu" if hidden else out_activation,
                BatchNorm(d_out) if (hidden and batch_norm) else None,
            )
        )
    return DenseNet(layers)
