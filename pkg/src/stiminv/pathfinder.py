"""Joint estimation of a pseudoinverse and a restricted-domain weight map.

Two networks are trained together: a regressor f mapping responses back
to parameters, and a scalar weight network over parameters.  Each batch
the raw weight outputs are projected onto the scaled simplex (weights
nonnegative, batch mean one) and the loss

    (1/B) sum_i w_i ||f(r_i) - theta_i||^2  +  beta * (N/B) * sum_i w_i^2

is minimized by Adam.  Driving weights to zero off some restricted
domain lets the regressor fit a single branch of a many-to-one mapping,
while the quadratic weight penalty (which shrinks as more points carry
weight) pushes that domain to be as large as possible.

The regularizer's N/B factor keeps the penalty's strength relative to
the data term independent of the batch size; with full batches the loss
reduces to the plain dataset objective.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .datasets import Dataset
from .nn import Adam, DenseNet, make_mlp
from .nn import tensor as T
from .nn.tensor import Tensor
from .simplex import GRAD_MODES, simplex_project, simplex_project_op
from .train_loop import TrainSettings, TrainingHistory, run_epochs


@dataclass
class PathfinderConfig(TrainSettings):
    beta: float = 1e-4
    regressor_layers: int = 5
    weight_layers: int = 5
    projection_grad: str = "active_set"

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not 0 < self.convergence_rel_tol < 1:
            raise ValueError("convergence_rel_tol must lie in (0, 1)")
        if self.projection_grad not in GRAD_MODES:
            raise ValueError(f"projection_grad must be one of {GRAD_MODES}")


class PathfinderModel:
    """Trained regressor + weight network pair."""

    method = "pf"

    def __init__(self, regressor: DenseNet, weight_net: DenseNet, config: PathfinderConfig):
        self.regressor = regressor
        self.weight_net = weight_net
        self.config = config
        self.history: TrainingHistory | None = None

    def predict(self, responses: np.ndarray) -> np.ndarray:
        """Pseudoinverse estimates; inference mode (running statistics)."""
        responses = np.atleast_2d(np.asarray(responses, dtype=np.float64))
        return self.regressor.forward(responses, training=False).data

    def projected_weights(self, thetas: np.ndarray) -> np.ndarray:
        """Weight-net outputs projected over the given set as one batch."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        raw = self.weight_net.forward(thetas, training=False).data.reshape(-1)
        return simplex_project(raw)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "method": self.method,
            "config": asdict(self.config),
            "regressor": self.regressor.to_dict(),
            "weight_net": self.weight_net.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PathfinderModel":
        return cls(
            DenseNet.from_dict(d["regressor"]),
            DenseNet.from_dict(d["weight_net"]),
            PathfinderConfig(**d["config"]),
        )


def pathfinder_batch_loss(
    model: PathfinderModel,
    thetas: np.ndarray,
    responses: np.ndarray,
    beta: float,
    reg_scale: float = 1.0,
    training: bool = True,
) -> tuple[Tensor, np.ndarray]:
    """Objective over one batch; returns (loss tensor, projected weights)."""
    th = Tensor(thetas)
    pred = model.regressor.forward(Tensor(responses), training=training)
    raw_w = model.weight_net.forward(th, training=training)
    w = simplex_project_op(raw_w, grad_mode=model.config.projection_grad)
    sq_residual = T.tsum(T.square(pred - th), axis=1)
    data_term = T.tmean(w * sq_residual)
    reg_term = T.tsum(T.square(w)) * (beta * reg_scale)
    return data_term + reg_term, w.data.reshape(-1)


def train_pathfinder(
    dataset: Dataset, config: PathfinderConfig, val: Dataset, seed: int
) -> PathfinderModel:
    """Fit the regressor/weight-net pair on a training split.

    The stopping rule tracks the same weighted objective on the
    validation set (projected over the validation batch, inference-mode
    statistics).
    """
    if dataset.n_samples == 0 or val.n_samples == 0:
        raise ValueError("train and validation sets must be nonempty")
    rng = np.random.default_rng(seed)
    n, m = dataset.theta_dim, dataset.response_dim
    model = PathfinderModel(
        regressor=make_mlp(m, n, config.regressor_layers, config.hidden_units, rng,
                           batch_norm=config.batch_norm),
        weight_net=make_mlp(n, 1, config.weight_layers, config.hidden_units, rng,
                            batch_norm=config.batch_norm),
        config=config,
    )
    opt = Adam(model.regressor.parameters() + model.weight_net.parameters(), lr=config.lr)
    n_train = dataset.n_samples
    epoch_weights: list[np.ndarray] = []
    weight_stats = {"w_min": [], "w_mean": [], "w_max": [], "dataset_w_mean": []}

    def train_step(idx: np.ndarray) -> float:
        loss, w = pathfinder_batch_loss(
            model, dataset.thetas[idx], dataset.responses[idx],
            config.beta, reg_scale=n_train / len(idx),
        )
        loss.backward()
        opt.step()
        epoch_weights.append(w)
        return loss.item()

    def validate() -> float:
        loss, _ = pathfinder_batch_loss(
            model, val.thetas, val.responses, config.beta, reg_scale=1.0, training=False
        )
        return loss.item()

    def on_epoch_end(history: TrainingHistory) -> None:
        w = np.concatenate(epoch_weights)
        epoch_weights.clear()
        weight_stats["w_min"].append(float(w.min()))
        weight_stats["w_mean"].append(float(w.mean()))
        weight_stats["w_max"].append(float(w.max()))
        # Eq.-level constraint holds per batch; monitor it over the whole
        # dataset as well (single projection, inference mode).
        weight_stats["dataset_w_mean"].append(
            float(model.projected_weights(dataset.thetas).mean())
        )

    history = run_epochs(n_train, config, rng, train_step, validate, on_epoch_end)
    history.extra["weight_stats"] = weight_stats
    model.history = history
    return model
