"""Response-based splitting, NMAE scoring, grid search, and benchmarking.

Splitting operates on *distinct responses*, not on rows: responses are
clustered by single-linkage under a sup-norm tolerance, clusters are
partitioned into train/validation/test, and every (theta, r) pair whose
response falls in a validation or test cluster is removed from the
training data.  The test split keeps responses only, since the task is
to produce stimuli for given responses.

NMAE is evaluated against the forward-model oracle: predictions are
clipped into the parameter domain, pushed through the noiseless forward
mapping, and the absolute response error per dimension is normalized by
that dimension's response range (percent scale).
"""

from __future__ import annotations

import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .datasets import Dataset, sample_dataset
from .errors import DivergenceError, NonFiniteError
from .forward_models import ForwardModel, get_model
from .methods import METHOD_ORDER, make_config, train_method

Z_99 = statistics.NormalDist().inv_cdf(0.995)  # two-sided 99% normal quantile


# ---------------------------------------------------------------------- #
# splitting

@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)
    response_tolerance: float = 0.0  # sup-norm radius for "the same response"
    seed: int = 0

    def __post_init__(self):
        if abs(sum(self.fractions) - 1.0) > 1e-9 or any(f < 0 for f in self.fractions):
            raise ValueError("fractions must be nonnegative and sum to 1")
        if self.response_tolerance < 0:
            raise ValueError("response_tolerance must be >= 0")


def cluster_responses(responses: np.ndarray, tolerance: float) -> np.ndarray:
    """Single-linkage cluster labels under sup-norm ``tolerance``.

    Transitive closure guarantees that two responses within tolerance can
    never land in different clusters, which is what makes the post-hoc
    leakage check exact.
    """
    n = len(responses)
    labels = np.full(n, -1, dtype=int)
    if tolerance == 0.0:
        _, labels = np.unique(responses, axis=0, return_inverse=True)
        return labels
    adjacent = (
        np.abs(responses[:, None, :] - responses[None, :, :]).max(axis=2) <= tolerance
    )
    current = 0
    for i in range(n):
        if labels[i] >= 0:
            continue
        stack = [i]
        labels[i] = current
        while stack:
            j = stack.pop()
            for k in np.nonzero(adjacent[j] & (labels < 0))[0]:
                labels[k] = current
                stack.append(k)
        current += 1
    return labels


def _apportion(n_clusters: int, fractions) -> list[int]:
    """Largest-remainder allocation; ties favor earlier splits."""
    raw = [f * n_clusters for f in fractions]
    counts = [int(np.floor(x)) for x in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in range(n_clusters - sum(counts)):
        counts[order[i % len(order)]] += 1
    return counts


@dataclass
class SplitResult:
    train: Dataset
    val: Dataset
    test_responses: np.ndarray  # one representative per test cluster
    val_responses: np.ndarray  # one representative per validation cluster
    labels: np.ndarray  # cluster label per original row
    assignment: dict  # cluster label -> "train" | "val" | "test"


def split_by_response(dataset: Dataset, spec: SplitSpec) -> SplitResult:
    """Partition distinct responses; drop all preimages of val/test ones."""
    if dataset.n_samples == 0:
        raise ValueError("cannot split an empty dataset")
    labels = cluster_responses(dataset.responses, spec.response_tolerance)
    n_clusters = labels.max() + 1
    counts = _apportion(n_clusters, spec.fractions)
    for count, frac, name in zip(counts, spec.fractions, ("train", "val", "test")):
        if frac > 0 and count == 0:
            raise ValueError(
                f"{name} split received zero response clusters "
                f"({n_clusters} clusters, fractions {spec.fractions})"
            )
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(n_clusters)
    split_of = {}
    for pos, cluster in enumerate(perm):
        if pos < counts[0]:
            split_of[int(cluster)] = "train"
        elif pos < counts[0] + counts[1]:
            split_of[int(cluster)] = "val"
        else:
            split_of[int(cluster)] = "test"

    row_split = np.array([split_of[int(c)] for c in labels])
    first_row_of_cluster = np.full(n_clusters, -1, dtype=int)
    for row in range(len(labels) - 1, -1, -1):
        first_row_of_cluster[labels[row]] = row

    def representatives(which: str) -> np.ndarray:
        clusters = sorted(c for c, s in split_of.items() if s == which)
        return dataset.responses[[first_row_of_cluster[c] for c in clusters]]

    return SplitResult(
        train=dataset.subset(row_split == "train"),
        val=dataset.subset(row_split == "val"),
        test_responses=representatives("test"),
        val_responses=representatives("val"),
        labels=labels,
        assignment=split_of,
    )


# ---------------------------------------------------------------------- #
# NMAE

@dataclass
class NMAEResult:
    per_response_dim: list[float]
    mean: float
    max: float
    clipped_count: int  # predictions that had to be clipped into the domain

    def to_dict(self) -> dict:
        return {
            "per_response_dim": self.per_response_dim,
            "mean": self.mean,
            "max": self.max,
            "clipped_count": self.clipped_count,
        }


def nmae(predictor, responses: np.ndarray, model: ForwardModel) -> NMAEResult:
    """Normalized mean absolute error of achieved vs desired responses.

    For each desired response the predicted parameters are clipped into
    the domain and evaluated through the noiseless oracle; per response
    dimension i the score is

        100 / (|R| * (r_max_i - r_min_i)) * sum_R |r_act_i - r_i|.
    """
    responses = np.atleast_2d(np.asarray(responses, dtype=np.float64))
    if len(responses) == 0:
        raise ValueError("empty response list")
    theta_hat = np.atleast_2d(predictor.predict(responses))
    clipped = model.domain.clip(theta_hat)
    clipped_count = int(np.sum(np.any(clipped != theta_hat, axis=1)))
    actual = model.eval(clipped)
    per_dim = []
    for i, (lo, hi) in enumerate(model.response_range):
        err = np.abs(actual[:, i] - responses[:, i]).mean()
        per_dim.append(float(100.0 * err / (hi - lo)))
    return NMAEResult(
        per_response_dim=per_dim,
        mean=float(np.mean(per_dim)),
        max=float(np.max(per_dim)),
        clipped_count=clipped_count,
    )


# ---------------------------------------------------------------------- #
# hyperparameter grid search

@dataclass
class GridSearchResult:
    best_params: dict
    best_model: object
    best_val_nmae: float
    entries: list[dict]  # one per lattice point: params, val_nmae or error


def expand_grid(grid: dict[str, list]) -> list[dict]:
    """Cartesian product in declared key order; first point wins ties."""
    if not grid:
        return [{}]
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in product(*(grid[k] for k in keys))]


def grid_search(
    method: str,
    train: Dataset,
    val: Dataset,
    grid: dict[str, list],
    model: ForwardModel,
    seed: int,
    base_config: dict | None = None,
    val_responses: np.ndarray | None = None,
) -> GridSearchResult:
    """Train one model per lattice point; select by validation NMAE."""
    points = expand_grid(grid)
    if not points:
        raise ValueError("empty hyperparameter grid")
    if val_responses is None:
        val_responses = np.unique(val.responses, axis=0)
    base = dict(base_config or {})
    best = None
    entries = []
    for params in points:
        config = make_config(method, **{**base, **params})
        try:
            candidate = train_method(method, train, config, val, seed, domain=model.domain)
            score = nmae(candidate, val_responses, model).mean
        except (DivergenceError, NonFiniteError) as exc:
            entries.append({"params": params, "val_nmae": None, "error": str(exc)})
            continue
        entries.append({"params": params, "val_nmae": score, "error": None})
        if best is None or score < best[0]:
            best = (score, params, candidate)
    if best is None:
        raise DivergenceError(f"all {len(points)} grid points diverged for method {method!r}")
    return GridSearchResult(
        best_params=best[1], best_model=best[2], best_val_nmae=best[0], entries=entries
    )


# ---------------------------------------------------------------------- #
# multi-trial benchmark

@dataclass
class CellStats:
    model: str
    method: str
    size: int
    mean_nmae: float | None
    ci99_halfwidth: float | None
    n_ok: int
    n_failed: int
    per_trial: list[float | None]
    chosen_params: list[dict]

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "method": self.method,
            "size": self.size,
            "mean_nmae": self.mean_nmae,
            "ci99_halfwidth": self.ci99_halfwidth,
            "n_ok": self.n_ok,
            "n_failed": self.n_failed,
            "per_trial": self.per_trial,
            "chosen_params": self.chosen_params,
        }


@dataclass
class BenchmarkReport:
    master_seed: int
    trials: int
    models: list[str]
    methods: list[str]
    sizes: list[int]
    cells: list[CellStats]
    wall_clock: dict = field(default_factory=dict)  # not part of the deterministic report

    def cell(self, model: str, method: str, size: int) -> CellStats:
        for c in self.cells:
            if (c.model, c.method, c.size) == (model, method, size):
                return c
        raise KeyError((model, method, size))

    def to_dict(self) -> dict:
        # wall-clock stats are deliberately excluded so that reports are
        # byte-identical across runs with the same master seed
        return {
            "schema_version": 1,
            "master_seed": self.master_seed,
            "trials": self.trials,
            "models": self.models,
            "methods": self.methods,
            "sizes": self.sizes,
            "cells": [c.to_dict() for c in self.cells],
        }

    def to_csv(self) -> str:
        lines = ["model,method,size,mean_nmae,ci99_halfwidth,n_ok,n_failed"]
        for c in self.cells:
            mean = "" if c.mean_nmae is None else repr(c.mean_nmae)
            ci = "" if c.ci99_halfwidth is None else repr(c.ci99_halfwidth)
            lines.append(f"{c.model},{c.method},{c.size},{mean},{ci},{c.n_ok},{c.n_failed}")
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        out = []
        for model in self.models:
            out.append(f"### {model}")
            header = "| method | " + " | ".join(f"N={s}" for s in self.sizes) + " |"
            out.append(header)
            out.append("|" + "---|" * (len(self.sizes) + 1))
            for method in self.methods:
                row = [method]
                for size in self.sizes:
                    c = self.cell(model, method, size)
                    if c.mean_nmae is None:
                        row.append("failed")
                    elif c.ci99_halfwidth is None:
                        row.append(f"{c.mean_nmae:.1f}%")
                    else:
                        row.append(f"{c.mean_nmae:.1f}% ± {c.ci99_halfwidth:.1f}%")
                out.append("| " + " | ".join(row) + " |")
            out.append("")
        return "\n".join(out)


def derive_seed(master: int, *key: int) -> int:
    """Deterministic child seed from a master seed and an integer key path."""
    return int(np.random.SeedSequence(entropy=master, spawn_key=tuple(key)).generate_state(1)[0])


def _run_trial(job: dict) -> dict:
    """One (model, size, trial): shared dataset and split, all methods."""
    model = get_model(
        job["model"], noise_multiplier=job["noise_multiplier"], ball=job["ball"]
    )
    master = job["master_seed"]
    mi, si, trial = job["model_index"], job["size_index"], job["trial"]
    data_seed = derive_seed(master, mi, si, trial, 0)
    split_seed = derive_seed(master, mi, si, trial, 1)
    dataset = sample_dataset(model, job["size"], data_seed)
    spec = SplitSpec(
        fractions=tuple(job["split_fractions"]),
        response_tolerance=job["response_tolerance"],
        seed=split_seed,
    )
    started = time.perf_counter()
    out = {"key": (job["model"], job["size"], trial), "methods": {}, "error": None}
    try:
        split = split_by_response(dataset, spec)
    except ValueError as exc:
        out["error"] = f"split failed: {exc}"
        out["wall_time"] = time.perf_counter() - started
        return out
    for k, method in enumerate(job["methods"]):
        t0 = time.perf_counter()
        train_seed = derive_seed(master, mi, si, trial, 2 + METHOD_ORDER.index(method))
        try:
            result = grid_search(
                method,
                split.train,
                split.val,
                job["grids"][method],
                model,
                train_seed,
                base_config=job["base_configs"].get(method),
                val_responses=split.val_responses,
            )
            score = nmae(result.best_model, split.test_responses, model)
            out["methods"][method] = {
                "nmae_mean": score.mean,
                "per_dim": score.per_response_dim,
                "clipped": score.clipped_count,
                "chosen": result.best_params,
                "error": None,
                "wall_time": time.perf_counter() - t0,
            }
        except (DivergenceError, NonFiniteError, ValueError) as exc:
            out["methods"][method] = {
                "nmae_mean": None,
                "per_dim": None,
                "clipped": None,
                "chosen": None,
                "error": f"{type(exc).__name__}: {exc}",
                "wall_time": time.perf_counter() - t0,
            }
    out["wall_time"] = time.perf_counter() - started
    return out


def run_benchmark(
    models: list[dict | str],
    methods: list[str],
    sizes: list[int],
    trials: int,
    seed: int,
    split_spec: SplitSpec | None = None,
    grids: dict[str, dict] | None = None,
    base_configs: dict[str, dict] | None = None,
    jobs: int = 1,
) -> BenchmarkReport:
    """Mean NMAE with 99% confidence intervals per (model, method, size).

    Within a trial every method sees the same dataset and split, so the
    per-trial comparison between methods is paired.  Trials are
    independent jobs; results are reduced in deterministic order no
    matter the execution order.
    """
    if trials < 2:
        raise ValueError("trials must be >= 2 for confidence intervals")
    model_specs = [{"name": m} if isinstance(m, str) else dict(m) for m in models]
    for spec in model_specs:
        spec.setdefault("noise_multiplier", 1.0)
        spec.setdefault("ball", True)
    split_spec = split_spec or SplitSpec()
    grids = grids or {}
    base_configs = base_configs or {}
    jobs_list = []
    for mi, mspec in enumerate(model_specs):
        for si, size in enumerate(sizes):
            for trial in range(trials):
                jobs_list.append(
                    {
                        "model": mspec["name"],
                        "noise_multiplier": mspec["noise_multiplier"],
                        "ball": mspec["ball"],
                        "model_index": mi,
                        "size_index": si,
                        "size": size,
                        "trial": trial,
                        "master_seed": seed,
                        "methods": list(methods),
                        "grids": {m: grids.get(m, {}) for m in methods},
                        "base_configs": base_configs,
                        "split_fractions": list(split_spec.fractions),
                        "response_tolerance": split_spec.response_tolerance,
                    }
                )
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            raw = list(pool.map(_run_trial, jobs_list))
    else:
        raw = [_run_trial(j) for j in jobs_list]
    by_key = {r["key"]: r for r in raw}

    cells = []
    wall_clock: dict[str, dict] = {}
    for mspec in model_specs:
        for size in sizes:
            for method in methods:
                scores: list[float | None] = []
                chosen: list[dict] = []
                times: list[float] = []
                n_failed = 0
                for trial in range(trials):
                    r = by_key[(mspec["name"], size, trial)]
                    entry = r["methods"].get(method) if r["error"] is None else None
                    if entry is None or entry["nmae_mean"] is None:
                        scores.append(None)
                        n_failed += 1
                        continue
                    scores.append(entry["nmae_mean"])
                    chosen.append(entry["chosen"])
                    times.append(entry["wall_time"])
                ok = [s for s in scores if s is not None]
                mean = float(np.mean(ok)) if ok else None
                ci = (
                    float(Z_99 * np.std(ok, ddof=1) / np.sqrt(len(ok)))
                    if len(ok) >= 2
                    else None
                )
                cells.append(
                    CellStats(
                        model=mspec["name"],
                        method=method,
                        size=size,
                        mean_nmae=mean,
                        ci99_halfwidth=ci,
                        n_ok=len(ok),
                        n_failed=n_failed,
                        per_trial=scores,
                        chosen_params=chosen,
                    )
                )
                if times:
                    wall_clock[f"{mspec['name']}/{method}/N={size}"] = {
                        "mean_s": float(np.mean(times)),
                        "max_s": float(np.max(times)),
                    }
    return BenchmarkReport(
        master_seed=seed,
        trials=trials,
        models=[m["name"] for m in model_specs],
        methods=list(methods),
        sizes=list(sizes),
        cells=cells,
        wall_clock=wall_clock,
    )
