"""Mixture density network over p(theta | r), diagonal Gaussian components.

A shared ReLU trunk feeds three linear heads: mixing logits (softmax-
normalized downstream), component means, and component variances passed
through ELU(x)+1 and floored at ``var_floor`` for numerical stability.
The conditional mode is approximated by the mean of the most likely
component (exact ties resolved to the lowest component index).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..datasets import Dataset
from ..nn import Adam, BatchNorm, DenseLayer, DenseNet, he_uniform
from ..nn import tensor as T
from ..nn.tensor import Tensor
from ..train_loop import TrainSettings, TrainingHistory, run_epochs

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class MDNConfig(TrainSettings):
    n_components: int = 2
    hidden_layers: int = 5
    var_floor: float = 1e-4

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")


def _make_trunk(in_dim, layers, units, rng, batch_norm=True):
    dense = [
        DenseLayer(he_uniform(rng, d_in, units), np.zeros(units), "relu",
                   BatchNorm(units) if batch_norm else None)
        for d_in in [in_dim] + [units] * (layers - 1)
    ]
    return DenseNet(dense)


def _linear_head(in_dim, out_dim, rng):
    return DenseNet([DenseLayer(he_uniform(rng, in_dim, out_dim), np.zeros(out_dim), "linear")])


class MDNModel:
    method = "mdn"

    def __init__(self, trunk, head_logits, head_means, head_vars, theta_dim: int,
                 config: MDNConfig):
        self.trunk = trunk
        self.head_logits = head_logits
        self.head_means = head_means
        self.head_vars = head_vars
        self.theta_dim = theta_dim
        self.config = config
        self.history: TrainingHistory | None = None

    @property
    def n_components(self) -> int:
        return self.config.n_components

    def mixture_params(self, responses, training: bool = False):
        """Returns (logits (B,K), means (B,K*n), variances (B,K*n)) tensors."""
        h = self.trunk.forward(T.as_tensor(responses), training=training)
        logits = self.head_logits.forward(h, training=training)
        means = self.head_means.forward(h, training=training)
        variances = T.clip_min(
            T.eluplus1(self.head_vars.forward(h, training=training)), self.config.var_floor
        )
        return logits, means, variances

    def mixture_weights(self, responses) -> np.ndarray:
        logits, _, _ = self.mixture_params(responses)
        return T.softmax(logits).data

    def predict(self, responses: np.ndarray) -> np.ndarray:
        """Conditional mode: mean of the most likely component."""
        responses = np.atleast_2d(np.asarray(responses, dtype=np.float64))
        logits, means, _ = self.mixture_params(responses)
        best = np.argmax(logits.data, axis=1)  # first max wins exact ties
        mu = means.data.reshape(len(responses), self.n_components, self.theta_dim)
        return mu[np.arange(len(responses)), best]

    def log_prob(self, thetas, responses, training: bool = False):
        """Row-wise log p(theta | r) as a (B, 1) tensor."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        B, n = thetas.shape
        K = self.n_components
        logits, means, variances = self.mixture_params(responses, training=training)
        theta_tiled = np.tile(thetas, (1, K))
        diff = means - theta_tiled
        # per-dimension Gaussian log-densities, then per-component sums
        terms = (T.log(variances) + _LOG_2PI) * -0.5 - T.square(diff) / (variances * 2.0)
        pick = np.kron(np.eye(K), np.ones((n, 1)))  # (K*n, K) block indicator
        comp_logdens = terms @ pick
        return T.logsumexp(T.log_softmax(logits) + comp_logdens)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "method": self.method,
            "config": asdict(self.config),
            "theta_dim": self.theta_dim,
            "trunk": self.trunk.to_dict(),
            "head_logits": self.head_logits.to_dict(),
            "head_means": self.head_means.to_dict(),
            "head_vars": self.head_vars.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MDNModel":
        return cls(
            DenseNet.from_dict(d["trunk"]),
            DenseNet.from_dict(d["head_logits"]),
            DenseNet.from_dict(d["head_means"]),
            DenseNet.from_dict(d["head_vars"]),
            d["theta_dim"],
            MDNConfig(**d["config"]),
        )


def mdn_nll(model: MDNModel, thetas, responses, training: bool = False):
    return -T.tmean(model.log_prob(thetas, responses, training=training))


def train_mdn(dataset: Dataset, config: MDNConfig, val: Dataset, seed: int) -> MDNModel:
    if dataset.n_samples == 0 or val.n_samples == 0:
        raise ValueError("train and validation sets must be nonempty")
    rng = np.random.default_rng(seed)
    n, m, K = dataset.theta_dim, dataset.response_dim, config.n_components
    trunk = _make_trunk(m, config.hidden_layers, config.hidden_units, rng,
                        batch_norm=config.batch_norm)
    model = MDNModel(
        trunk,
        _linear_head(config.hidden_units, K, rng),
        _linear_head(config.hidden_units, K * n, rng),
        _linear_head(config.hidden_units, K * n, rng),
        theta_dim=n,
        config=config,
    )
    params = (
        trunk.parameters()
        + model.head_logits.parameters()
        + model.head_means.parameters()
        + model.head_vars.parameters()
    )
    opt = Adam(params, lr=config.lr)

    def train_step(idx):
        loss = mdn_nll(model, dataset.thetas[idx], dataset.responses[idx], training=True)
        loss.backward()
        opt.step()
        return loss.item()

    def validate():
        return mdn_nll(model, val.thetas, val.responses, training=False).item()

    model.history = run_epochs(dataset.n_samples, config, rng, train_step, validate)
    return model
