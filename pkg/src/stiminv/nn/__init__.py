from . import tensor
from .net import ACTIVATIONS, BatchNorm, DenseLayer, DenseNet, he_uniform, make_mlp
from .optim import Adam
from .tensor import Tensor

__all__ = [
    "ACTIVATIONS",
    "Adam",
    "BatchNorm",
    "DenseLayer",
    "DenseNet",
    "Tensor",
    "he_uniform",
    "make_mlp",
    "tensor",
]
