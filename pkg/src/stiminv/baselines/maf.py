"""Masked autoregressive flow over the joint (theta, r) density.

The flow stack is: an initial random permutation, then per flow a MADE
block followed by a batch-normalization flow, with the input order
reversed between flows.  The base density is a standard Gaussian.  Each
MADE block computes shift/log-scale pairs under sequential degree masks,
so the density direction x -> u is a single pass while sampling inverts
one coordinate at a time.

The pseudoinverse is obtained by gradient ascent of log p(theta, r) over
theta at fixed r (Adam, domain-clipped steps, several uniform restarts;
the best final log-density wins).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..datasets import Dataset
from ..errors import DivergenceError
from ..forward_models import Ball, Box, domain_from_dict
from ..nn import Adam, he_uniform
from ..nn import tensor as T
from ..nn.tensor import Tensor
from ..train_loop import TrainSettings, TrainingHistory, run_epochs


@dataclass
class MAFConfig(TrainSettings):
    n_flows: int = 3
    made_hidden_layers: int = 2
    mode_search_steps: int = 500
    mode_search_restarts: int = 16
    mode_search_lr: float = 1e-3


class MadeBlock:
    """Masked autoencoder emitting per-coordinate shift and log-scale."""

    def __init__(self, dim: int, hidden_units: int, hidden_layers: int,
                 rng: np.random.Generator | None, weights=None):
        if dim < 2:
            raise ValueError("autoregressive masking needs at least 2 dimensions")
        self.dim = dim
        self.hidden_units = hidden_units
        self.hidden_layers = hidden_layers
        in_deg = np.arange(1, dim + 1)
        hid_deg = (np.arange(hidden_units) % (dim - 1)) + 1
        out_deg = np.concatenate([in_deg, in_deg])  # shift block then log-scale block
        self.masks = (
            [(hid_deg[None, :] >= in_deg[:, None]).astype(float)]
            + [(hid_deg[None, :] >= hid_deg[:, None]).astype(float)] * (hidden_layers - 1)
            + [(out_deg[None, :] > hid_deg[:, None]).astype(float)]
        )
        if weights is None:
            dims = [dim] + [hidden_units] * hidden_layers + [2 * dim]
            weights = [
                (he_uniform(rng, a, b), np.zeros(b)) for a, b in zip(dims[:-1], dims[1:])
            ]
        self.weights = [Tensor(w, requires_grad=True) for w, _ in weights]
        self.biases = [Tensor(np.reshape(b, (1, -1)), requires_grad=True) for _, b in weights]

    def parameters(self):
        return self.weights + self.biases

    def _net(self, x: Tensor) -> tuple[Tensor, Tensor]:
        h = x
        last = len(self.masks) - 1
        for i, mask in enumerate(self.masks):
            h = h @ (self.weights[i] * mask) + self.biases[i]
            if i < last:
                h = T.relu(h)
        shift = T.take_cols(h, np.arange(self.dim))
        log_scale = T.take_cols(h, np.arange(self.dim, 2 * self.dim))
        return shift, log_scale

    def forward(self, x: Tensor, training: bool) -> tuple[Tensor, Tensor]:
        shift, log_scale = self._net(x)
        u = (x - shift) * T.exp(-log_scale)
        return u, T.tsum(log_scale, axis=1) * -1.0

    def inverse(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Sequential inversion; returns (x, per-row log|det dx/du|)."""
        x = np.zeros_like(u)
        for i in range(self.dim):
            shift, log_scale = self._net(Tensor(x))
            x[:, i] = u[:, i] * np.exp(log_scale.data[:, i]) + shift.data[:, i]
        shift, log_scale = self._net(Tensor(x))
        return x, log_scale.data.sum(axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": "made",
            "dim": self.dim,
            "hidden_units": self.hidden_units,
            "hidden_layers": self.hidden_layers,
            "weights": [w.data.tolist() for w in self.weights],
            "biases": [b.data.reshape(-1).tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MadeBlock":
        weights = [
            (np.array(w), np.array(b)) for w, b in zip(d["weights"], d["biases"])
        ]
        return cls(d["dim"], d["hidden_units"], d["hidden_layers"], rng=None, weights=weights)


class BatchNormFlow:
    """Invertible per-feature normalization with a log-det contribution."""

    def __init__(self, dim: int, momentum: float = 0.99, epsilon: float = 1e-5):
        self.log_gamma = Tensor(np.zeros((1, dim)), requires_grad=True)
        self.beta = Tensor(np.zeros((1, dim)), requires_grad=True)
        self.running_mean = np.zeros((1, dim))
        self.running_var = np.ones((1, dim))
        self.momentum = momentum
        self.epsilon = epsilon

    def parameters(self):
        return [self.log_gamma, self.beta]

    def forward(self, x: Tensor, training: bool) -> tuple[Tensor, Tensor]:
        if training:
            if x.data.shape[0] < 2:
                raise ValueError("batch-norm flow needs batch size >= 2 in training mode")
            mu = T.tmean(x, axis=0)
            var = T.tmean(T.square(x - mu), axis=0) + self.epsilon
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mu.data
            self.running_var = (
                self.momentum * self.running_var + (1 - self.momentum) * (var.data - self.epsilon)
            )
            xhat = (x - mu) / T.sqrt(var)
            logdet = T.tsum(self.log_gamma - T.log(var) * 0.5)
        else:
            var = self.running_var + self.epsilon
            xhat = (x - self.running_mean) / np.sqrt(var)
            logdet = T.tsum(self.log_gamma) - 0.5 * float(np.log(var).sum())
        return T.exp(self.log_gamma) * xhat + self.beta, logdet

    def inverse(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        var = self.running_var + self.epsilon
        xhat = (y - self.beta.data) / np.exp(self.log_gamma.data)
        x = xhat * np.sqrt(var) + self.running_mean
        logdet = float((0.5 * np.log(var) - self.log_gamma.data).sum())
        return x, np.full(len(y), logdet)

    def to_dict(self) -> dict:
        return {
            "kind": "bnflow",
            "log_gamma": self.log_gamma.data.reshape(-1).tolist(),
            "beta": self.beta.data.reshape(-1).tolist(),
            "running_mean": self.running_mean.reshape(-1).tolist(),
            "running_var": self.running_var.reshape(-1).tolist(),
            "momentum": self.momentum,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BatchNormFlow":
        dim = len(d["log_gamma"])
        bn = cls(dim, d["momentum"], d["epsilon"])
        bn.log_gamma = Tensor(np.array(d["log_gamma"]).reshape(1, -1), requires_grad=True)
        bn.beta = Tensor(np.array(d["beta"]).reshape(1, -1), requires_grad=True)
        bn.running_mean = np.array(d["running_mean"]).reshape(1, -1)
        bn.running_var = np.array(d["running_var"]).reshape(1, -1)
        return bn


class PermuteFlow:
    def __init__(self, perm: np.ndarray):
        self.perm = np.asarray(perm, dtype=np.intp)
        self.inv_perm = np.argsort(self.perm)

    def parameters(self):
        return []

    def forward(self, x: Tensor, training: bool) -> tuple[Tensor, Tensor]:
        return T.take_cols(x, self.perm), Tensor(np.zeros((1, 1)))

    def inverse(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return y[:, self.inv_perm], np.zeros(len(y))

    def to_dict(self) -> dict:
        return {"kind": "permute", "perm": self.perm.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PermuteFlow":
        return cls(np.array(d["perm"]))


_FLOW_KINDS = {"made": MadeBlock, "bnflow": BatchNormFlow, "permute": PermuteFlow}


class MAFModel:
    method = "maf"

    def __init__(self, flows: list, theta_dim: int, response_dim: int, config: MAFConfig,
                 domain: Box | Ball | None = None, seed: int = 0):
        self.flows = flows
        self.theta_dim = theta_dim
        self.response_dim = response_dim
        self.config = config
        self.domain = domain
        self.seed = seed
        self.history: TrainingHistory | None = None

    @property
    def dim(self) -> int:
        return self.theta_dim + self.response_dim

    def parameters(self):
        return [p for flow in self.flows for p in flow.parameters()]

    def log_prob(self, x, training: bool = False) -> Tensor:
        """Row-wise log-density of joint points, shape (B, 1)."""
        z = T.as_tensor(x)
        total = Tensor(np.zeros((1, 1)))
        for flow in self.flows:
            z, logdet = flow.forward(z, training)
            total = total + logdet
        return T.standard_normal_logdensity(z) + total

    def transform(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Density-direction map x -> z with per-row log|det dz/dx|."""
        z = Tensor(np.atleast_2d(x))
        total = np.zeros(len(z.data))
        for flow in self.flows:
            z, logdet = flow.forward(z, training=False)
            total = total + logdet.data.reshape(-1)
        return z.data, total

    def inverse_transform(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Sampling-direction map z -> x with per-row log|det dx/dz|."""
        x = np.atleast_2d(np.asarray(z, dtype=np.float64)).copy()
        total = np.zeros(len(x))
        for flow in reversed(self.flows):
            x, logdet = flow.inverse(x)
            total = total + logdet
        return x, total

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.dim))
        return self.inverse_transform(z)[0]

    def predict(self, responses: np.ndarray) -> np.ndarray:
        responses = np.atleast_2d(np.asarray(responses, dtype=np.float64))
        rng = np.random.default_rng(self.seed + 0x5EED)
        return maf_mode_search(
            self, responses, self.config.mode_search_restarts, rng=rng
        )

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "method": self.method,
            "config": asdict(self.config),
            "theta_dim": self.theta_dim,
            "response_dim": self.response_dim,
            "seed": self.seed,
            "domain": self.domain.to_dict() if self.domain else None,
            "flows": [flow.to_dict() for flow in self.flows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MAFModel":
        flows = [_FLOW_KINDS[f["kind"]].from_dict(f) for f in d["flows"]]
        domain = domain_from_dict(d["domain"]) if d["domain"] else None
        return cls(flows, d["theta_dim"], d["response_dim"], MAFConfig(**d["config"]),
                   domain=domain, seed=d.get("seed", 0))


def maf_nll(model: MAFModel, x, training: bool = False) -> Tensor:
    return -T.tmean(model.log_prob(x, training=training))


def maf_mode_search(
    model: MAFModel,
    responses: np.ndarray,
    restarts: int,
    rng: np.random.Generator,
    steps: int | None = None,
    lr: float | None = None,
) -> np.ndarray:
    """Gradient ascent of log p(theta, r) over theta at fixed r.

    Runs ``restarts`` uniformly initialized ascents per response (all in
    one batch), clips iterates to the parameter domain each step, and
    returns the per-response argmax over restarts.
    """
    if model.domain is None:
        raise ValueError("mode search needs the parameter domain; none was recorded")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    steps = model.config.mode_search_steps if steps is None else steps
    lr = model.config.mode_search_lr if lr is None else lr
    responses = np.atleast_2d(np.asarray(responses, dtype=np.float64))
    q = len(responses)
    theta = Tensor(model.domain.sample(rng, q * restarts), requires_grad=True)
    r_tile = np.repeat(responses, restarts, axis=0)
    opt = Adam([theta], lr=lr)
    for _ in range(steps):
        joint = T.concat_cols([theta, Tensor(r_tile)])
        loss = -T.tsum(model.log_prob(joint, training=False))  # rows are independent
        loss.backward()
        opt.step()
        theta.data = model.domain.clip(theta.data)
    final = model.log_prob(np.concatenate([theta.data, r_tile], axis=1)).data.reshape(
        q, restarts
    )
    if not np.all(np.any(np.isfinite(final), axis=1)):
        raise DivergenceError("all mode-search restarts ended non-finite")
    best = np.nanargmax(np.where(np.isfinite(final), final, -np.inf), axis=1)
    return theta.data.reshape(q, restarts, model.theta_dim)[np.arange(q), best]


def train_maf(
    dataset: Dataset,
    config: MAFConfig,
    val: Dataset,
    seed: int,
    domain: Box | Ball | None = None,
) -> MAFModel:
    if dataset.n_samples == 0 or val.n_samples == 0:
        raise ValueError("train and validation sets must be nonempty")
    rng = np.random.default_rng(seed)
    n, m = dataset.theta_dim, dataset.response_dim
    dim = n + m
    flows: list = [PermuteFlow(rng.permutation(dim))]
    for k in range(config.n_flows):
        flows.append(MadeBlock(dim, config.hidden_units, config.made_hidden_layers, rng))
        flows.append(BatchNormFlow(dim))
        if k < config.n_flows - 1:
            flows.append(PermuteFlow(np.arange(dim)[::-1]))
    model = MAFModel(flows, n, m, config, domain=domain, seed=seed)
    opt = Adam(model.parameters(), lr=config.lr)
    x_train = np.concatenate([dataset.thetas, dataset.responses], axis=1)
    x_val = np.concatenate([val.thetas, val.responses], axis=1)

    def train_step(idx):
        loss = maf_nll(model, x_train[idx], training=True)
        loss.backward()
        opt.step()
        return loss.item()

    def validate():
        return maf_nll(model, x_val, training=False).item()

    model.history = run_epochs(dataset.n_samples, config, rng, train_step, validate)
    return model
