"""Diagnostic studies: the regularizer sweep, the maximization-bias
Monte Carlo, and the naive-inversion oracle comparison.

Each helper returns plain rows ready for CSV emission; the CLI owns the
file writing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import NIConfig, train_ni
from .datasets import sample_dataset
from .errors import DivergenceError, NonFiniteError
from .evaluation import SplitSpec, derive_seed, nmae, split_by_response
from .forward_models import ForwardModel
from .pathfinder import PathfinderConfig, train_pathfinder


def maximization_bias_mc(n: int, bins: int, reps: int, seed: int) -> float:
    """Monte-Carlo estimate of E[max_i n_i] for n uniform draws into
    equiprobable bins."""
    if bins < 1 or reps < 1:
        raise ValueError("bins and reps must be >= 1")
    if bins == 1:
        return float(n)
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(n, np.full(bins, 1.0 / bins), size=reps)
    return float(counts.max(axis=1).mean())


def bias_scaling_rows(ns: list[int], bins: int, reps: int, seed: int) -> list[dict]:
    """For each n: the MC estimate and the normalized excess
    (E[max] - n/bins) / sqrt(n), which the square-root law predicts to be
    n-independent."""
    rows = []
    for i, n in enumerate(ns):
        estimate = maximization_bias_mc(n, bins, reps, derive_seed(seed, 90, i))
        rows.append(
            {
                "n": n,
                "bins": bins,
                "reps": reps,
                "estimate": estimate,
                "normalized_excess": (estimate - n / bins) / np.sqrt(n),
            }
        )
    return rows


def pseudoinverse_residual(
    predictor, model: ForwardModel, grid_points: int = 201
) -> float:
    """Mean squared response residual E_r ||g(f(r)) - r||^2 over a dense
    grid of achievable responses (scalar-response models only)."""
    if model.response_dim != 1:
        raise ValueError("residual grid is defined for scalar-response models")
    if model.noise_sigma != 0:
        raise ValueError("residual check expects a noiseless model")
    # achievable response range estimated from a large noiseless sample
    rng = np.random.default_rng(0)
    achievable = model.eval(model.domain.sample(rng, 20_000))
    grid = np.linspace(achievable.min(), achievable.max(), grid_points).reshape(-1, 1)
    theta_hat = model.domain.clip(np.atleast_2d(predictor.predict(grid)))
    return float(np.mean(np.sum((model.eval(theta_hat) - grid) ** 2, axis=1)))


@dataclass
class SweepRow:
    beta: float
    seed: int
    residual: float | None
    error: str | None = None


def theorem1_sweep(
    model: ForwardModel,
    betas: list[float],
    n: int,
    seeds: list[int],
    base_config: dict | None = None,
    grid_points: int = 201,
) -> tuple[list[SweepRow], dict[float, float]]:
    """Train the weighted-regression inverter per (beta, seed) on
    noiseless data and measure the pseudoinverse residual.

    Returns all rows plus the per-beta median residual over seeds.
    Divergence at one point is recorded, not fatal.
    """
    if model.noise_sigma != 0:
        raise ValueError("theorem-1 sweep requires the noise-free model")
    base = dict(base_config or {})
    rows: list[SweepRow] = []
    for si, seed in enumerate(seeds):
        dataset = sample_dataset(model, n, derive_seed(seed, 70, 0))
        val = sample_dataset(model, max(8, n // 5), derive_seed(seed, 70, 1))
        for bi, beta in enumerate(betas):
            config = PathfinderConfig(**{**base, "beta": beta})
            try:
                pf = train_pathfinder(dataset, config, val, derive_seed(seed, 70, 2 + bi))
                rows.append(
                    SweepRow(beta, seed, pseudoinverse_residual(pf, model, grid_points))
                )
            except (DivergenceError, NonFiniteError) as exc:
                rows.append(SweepRow(beta, seed, None, error=str(exc)))
    medians = {}
    for beta in betas:
        vals = [r.residual for r in rows if r.beta == beta and r.residual is not None]
        if vals:
            medians[beta] = float(np.median(vals))
    return rows, medians


def ni_forward_comparison(
    model: ForwardModel,
    sizes: list[int],
    seeds: list[int],
    base_config: dict | None = None,
    split_spec: SplitSpec | None = None,
) -> list[dict]:
    """Test NMAE of naive inversion with the estimated forward model vs
    the true forward mapping substituted in the inversion phase.

    Same dataset and split per (size, seed); rows carry both variants.
    """
    base = dict(base_config or {})
    split_spec = split_spec or SplitSpec()
    rows = []
    for si, size in enumerate(sizes):
        for seed in seeds:
            dataset = sample_dataset(model, size, derive_seed(seed, 80, si, 0))
            split = split_by_response(
                dataset,
                SplitSpec(
                    split_spec.fractions,
                    split_spec.response_tolerance,
                    derive_seed(seed, 80, si, 1),
                ),
            )
            train_seed = derive_seed(seed, 80, si, 2)
            for variant, oracle in (("estimated", None), ("oracle", model.eval_tensor)):
                config = NIConfig(**base)
                try:
                    ni = train_ni(split.train, config, split.val, train_seed,
                                  forward_oracle=oracle)
                    score = nmae(ni, split.test_responses, model).mean
                    rows.append(
                        {"size": size, "seed": seed, "variant": variant,
                         "nmae": score, "error": None}
                    )
                except (DivergenceError, NonFiniteError) as exc:
                    rows.append(
                        {"size": size, "seed": seed, "variant": variant,
                         "nmae": None, "error": str(exc)}
                    )
    return rows
