"""Shared training-loop machinery for the four inverters.

All methods train the same way: Adam over shuffled mini-batches until
the relative change of the validation loss stays below a tolerance, or
a hard epoch cap.  Full batches are used for small datasets; a trailing
batch of one sample is folded into its predecessor so batch
normalization always sees at least two rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DivergenceError


@dataclass
class TrainSettings:
    """Knobs shared by every training run."""

    hidden_units: int = 10
    lr: float = 1e-3
    batch_size: int | None = None  # None: full batch for N <= 50, else 32
    batch_norm: bool = True  # pre-activation batch norm on hidden layers
    max_epochs: int = 2000
    min_epochs: int = 30
    convergence_rel_tol: float = 1e-3  # 0.1% relative change in validation loss
    convergence_patience: int = 5  # consecutive epochs below tol required

    def resolve_batch_size(self, n_train: int) -> int:
        if self.batch_size is not None:
            return max(2, min(self.batch_size, n_train))
        return n_train if n_train <= 50 else 32


@dataclass
class TrainingHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    converged: bool = False
    epochs: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "converged": self.converged,
            "epochs": self.epochs,
            **self.extra,
        }


def batch_slices(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled batch index arrays; a trailing singleton joins the
    previous batch."""
    order = rng.permutation(n)
    batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


def run_epochs(
    n_train: int,
    settings: TrainSettings,
    rng: np.random.Generator,
    train_step: Callable[[np.ndarray], float],
    validate: Callable[[], float],
    on_epoch_end: Callable[[TrainingHistory], None] | None = None,
) -> TrainingHistory:
    """Drive training to validation-loss convergence.

    ``train_step`` consumes one batch index array and returns the batch
    loss; ``validate`` returns the current validation loss.  Raises
    :class:`DivergenceError` as soon as either goes non-finite.
    """
    batch_size = settings.resolve_batch_size(n_train)
    history = TrainingHistory()
    streak = 0
    prev_val = None
    for epoch in range(settings.max_epochs):
        epoch_loss = 0.0
        for batch in batch_slices(n_train, batch_size, rng):
            loss = train_step(batch)
            if not np.isfinite(loss):
                raise DivergenceError(f"training loss diverged at epoch {epoch}", epoch=epoch)
            epoch_loss += loss * len(batch)
        history.train_loss.append(epoch_loss / n_train)
        val = validate()
        if not np.isfinite(val):
            raise DivergenceError(f"validation loss diverged at epoch {epoch}", epoch=epoch)
        history.val_loss.append(val)
        history.epochs = epoch + 1
        if on_epoch_end is not None:
            on_epoch_end(history)
        if prev_val is not None:
            rel = abs(val - prev_val) / max(abs(prev_val), 1e-12)
            streak = streak + 1 if rel < settings.convergence_rel_tol else 0
            if epoch + 1 >= settings.min_epochs and streak >= settings.convergence_patience:
                history.converged = True
                break
        prev_val = val
    return history
