"""Euclidean projection onto the scaled simplex {w >= 0, sum(w) = s}.

With s equal to the batch size this enforces the mean-one nonnegative
weight constraint of the weighted-regression objective.  The projection
is the classic sort-and-threshold rule: w = max(v - lam, 0) with the
threshold chosen so the result sums to s.

Two backward variants are provided for the engine op:

* ``active_set`` (default): the projection's generalized Jacobian.  On
  the active set A the map is v |-> v_A - (sum(v_A) - s)/|A|, so the
  Jacobian is I - (1/|A|) 1 1^T restricted to A and zero elsewhere.
* ``straight_through``: passes the output gradient unchanged (ablation).
"""

from __future__ import annotations

import numpy as np

from .nn.tensor import Tensor, _accum, make_op

GRAD_MODES = ("active_set", "straight_through")


def simplex_project(v: np.ndarray, target_sum: float | None = None) -> np.ndarray:
    """Project a vector onto {w : w_i >= 0, sum_i w_i = target_sum}.

    ``target_sum`` defaults to len(v), which makes the mean equal one.
    """
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValueError("cannot project an empty vector")
    s = float(len(v)) if target_sum is None else float(target_sum)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, len(v) + 1)
    candidates = u - (css - s) / j
    rho = int(np.nonzero(candidates > 0)[0][-1])
    lam = (css[rho] - s) / (rho + 1.0)
    return np.maximum(v - lam, 0.0)


def simplex_project_op(v: Tensor, target_sum: float | None = None,
                       grad_mode: str = "active_set") -> Tensor:
    """Engine op projecting a (B, 1) column onto the scaled simplex."""
    if grad_mode not in GRAD_MODES:
        raise ValueError(f"grad_mode must be one of {GRAD_MODES}")
    if v.data.shape[1] != 1:
        raise ValueError("projection expects a (B, 1) column of raw weights")
    w = simplex_project(v.data.reshape(-1), target_sum).reshape(-1, 1)
    active = w.reshape(-1) > 0

    def backward(g):
        if not v.requires_grad:
            return
        if grad_mode == "straight_through":
            _accum(v, g)
            return
        ga = np.zeros_like(g)
        if active.any():
            ga[active] = g[active] - g[active].mean()
        _accum(v, ga)

    return make_op(w, (v,), backward)
