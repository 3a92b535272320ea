"""Adam optimizer (bias-corrected moments)."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Adam:
    """Adam over a fixed parameter list.

    Defaults follow the usual recommendation (beta1=0.9, beta2=0.999,
    epsilon=1e-8); only the learning rate is treated as experiment-level
    configuration.
    """

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        """Apply one update from the gradients stored on the parameters.

        Gradients are consumed (reset to None).  A parameter with no
        recorded gradient is an error: it means the loss graph never saw
        it.
        """
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                raise ValueError("parameter has no gradient: not part of the recorded graph")
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {p.data.shape}")
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * (g * g)
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
