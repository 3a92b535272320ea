"""Naive inversion: fit a forward model, then invert it numerically.

Phase 1 fits a forward network theta -> r by mean squared error.  Phase
2 freezes it and trains an inverse network f to minimize the composite
residual ||g_hat(f(r)) - r||^2, with gradients flowing through the
frozen forward net (inference mode, so its running statistics stay
untouched).  For diagnostics the frozen estimate can be replaced by the
true forward mapping (``forward_oracle``), isolating the error
introduced by inverting an *estimated* model.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from ..datasets import Dataset
from ..nn import Adam, DenseNet, make_mlp
from ..nn import tensor as T
from ..nn.tensor import Tensor
from ..train_loop import TrainSettings, TrainingHistory, run_epochs


@dataclass
class NIConfig(TrainSettings):
    forward_layers: int = 5
    inverse_layers: int = 5


class NIModel:
    method = "ni"

    def __init__(self, forward_net: DenseNet | None, inverse_net: DenseNet, config: NIConfig,
                 uses_oracle: bool = False):
        self.forward_net = forward_net  # None when trained against the true mapping
        self.inverse_net = inverse_net
        self.config = config
        self.uses_oracle = uses_oracle
        self.history: TrainingHistory | None = None

    def predict(self, responses: np.ndarray) -> np.ndarray:
        responses = np.atleast_2d(np.asarray(responses, dtype=np.float64))
        return self.inverse_net.forward(responses, training=False).data

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "method": self.method,
            "config": asdict(self.config),
            "uses_oracle": self.uses_oracle,
            "forward_net": self.forward_net.to_dict() if self.forward_net else None,
            "inverse_net": self.inverse_net.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NIModel":
        fwd = DenseNet.from_dict(d["forward_net"]) if d["forward_net"] else None
        return cls(fwd, DenseNet.from_dict(d["inverse_net"]), NIConfig(**d["config"]),
                   uses_oracle=d.get("uses_oracle", False))


def train_ni(
    dataset: Dataset,
    config: NIConfig,
    val: Dataset,
    seed: int,
    forward_oracle: Callable[[Tensor], Tensor] | None = None,
) -> NIModel:
    if dataset.n_samples == 0 or val.n_samples == 0:
        raise ValueError("train and validation sets must be nonempty")
    rng = np.random.default_rng(seed)
    n, m = dataset.theta_dim, dataset.response_dim

    if forward_oracle is None:
        forward_net = make_mlp(n, m, config.forward_layers, config.hidden_units, rng,
                               batch_norm=config.batch_norm)
        fwd_opt = Adam(forward_net.parameters(), lr=config.lr)

        def fwd_step(idx):
            pred = forward_net.forward(Tensor(dataset.thetas[idx]), training=True)
            loss = T.tmean(T.tsum(T.square(pred - dataset.responses[idx]), axis=1))
            loss.backward()
            fwd_opt.step()
            return loss.item()

        def fwd_validate():
            pred = forward_net.forward(Tensor(val.thetas), training=False)
            return T.tmean(T.tsum(T.square(pred - val.responses), axis=1)).item()

        fwd_history = run_epochs(dataset.n_samples, config, rng, fwd_step, fwd_validate)
        compose = lambda t: forward_net.forward(t, training=False)  # frozen: inference mode
    else:
        forward_net = None
        fwd_history = None
        compose = forward_oracle

    inverse_net = make_mlp(m, n, config.inverse_layers, config.hidden_units, rng,
                           batch_norm=config.batch_norm)
    inv_opt = Adam(inverse_net.parameters(), lr=config.lr)

    def inv_step(idx):
        r = dataset.responses[idx]
        theta_hat = inverse_net.forward(Tensor(r), training=True)
        loss = T.tmean(T.tsum(T.square(compose(theta_hat) - r), axis=1))
        loss.backward()
        inv_opt.step()
        return loss.item()

    def inv_validate():
        theta_hat = inverse_net.forward(Tensor(val.responses), training=False)
        return T.tmean(T.tsum(T.square(compose(theta_hat) - val.responses), axis=1)).item()

    inv_history = run_epochs(dataset.n_samples, config, rng, inv_step, inv_validate)
    if fwd_history is not None:
        inv_history.extra["forward_phase"] = fwd_history.to_dict()

    model = NIModel(forward_net, inverse_net, config, uses_oracle=forward_oracle is not None)
    model.history = inv_history
    return model
