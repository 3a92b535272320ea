"""Stimulus-response datasets: sampling, CSV export and import.

The on-disk format is a CSV with header ``theta_0..theta_{n-1},
r_0..r_{m-1}`` plus a JSON sidecar (same stem, ``.json``) recording the
generating model, seed, noise level, and sampling domain.  Floats are
written with ``repr`` so a round trip is bit-exact.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .forward_models import ForwardModel


@dataclass
class Dataset:
    thetas: np.ndarray  # (N, n)
    responses: np.ndarray  # (N, m)
    model_name: str
    seed: int

    def __post_init__(self):
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=np.float64))
        self.responses = np.atleast_2d(np.asarray(self.responses, dtype=np.float64))
        if self.thetas.shape[0] != self.responses.shape[0]:
            raise ValueError("thetas and responses must have the same number of rows")

    @property
    def n_samples(self) -> int:
        return self.thetas.shape[0]

    @property
    def theta_dim(self) -> int:
        return self.thetas.shape[1]

    @property
    def response_dim(self) -> int:
        return self.responses.shape[1]

    def subset(self, index) -> "Dataset":
        return Dataset(self.thetas[index], self.responses[index], self.model_name, self.seed)


def sample_dataset(model: ForwardModel, n: int, seed: int) -> Dataset:
    """Draw n i.i.d. parameters from the model domain and noisy responses.

    Responses are the noiseless oracle values plus isotropic Gaussian
    noise with the model's ``noise_sigma``.
    """
    if n < 1:
        raise ValueError("dataset size must be >= 1")
    rng = np.random.default_rng(seed)
    thetas = model.domain.sample(rng, n)
    responses = model.eval(thetas)
    if model.noise_sigma > 0:
        responses = responses + model.noise_sigma * rng.standard_normal(responses.shape)
    return Dataset(thetas, responses, model.name, seed)


def _header(theta_dim: int, response_dim: int) -> list[str]:
    return [f"theta_{i}" for i in range(theta_dim)] + [f"r_{j}" for j in range(response_dim)]


def save_dataset(dataset: Dataset, csv_path: str | Path, model: ForwardModel | None = None) -> Path:
    """Write the CSV and its JSON sidecar; returns the CSV path."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_header(dataset.theta_dim, dataset.response_dim))
        for th, r in zip(dataset.thetas, dataset.responses):
            writer.writerow([repr(float(v)) for v in th] + [repr(float(v)) for v in r])
    sidecar = {
        "model_name": dataset.model_name,
        "seed": dataset.seed,
        "n_samples": dataset.n_samples,
        "theta_dim": dataset.theta_dim,
        "response_dim": dataset.response_dim,
        "noise_sigma": model.noise_sigma if model else None,
        "domain": model.domain.to_dict() if model else None,
    }
    csv_path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True, indent=2))
    return csv_path


def load_dataset(csv_path: str | Path) -> Dataset:
    """Read a dataset CSV (and sidecar, if present).

    Raises :class:`DataFormatError` naming the offending line for any
    malformed content.
    """
    csv_path = Path(csv_path)
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{csv_path}: empty file") from None
        header = [h.strip() for h in header]
        theta_dim = sum(1 for h in header if h.startswith("theta_"))
        response_dim = sum(1 for h in header if h.startswith("r_"))
        if theta_dim == 0 or response_dim == 0 or theta_dim + response_dim != len(header):
            raise DataFormatError(
                f"{csv_path}: line 1: header must be theta_0..theta_n,r_0..r_m, got {header}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{csv_path}: line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise DataFormatError(f"{csv_path}: line {lineno}: {exc}") from None
    if not rows:
        raise DataFormatError(f"{csv_path}: no data rows")
    data = np.array(rows)
    model_name, seed = "unknown", -1
    sidecar_path = csv_path.with_suffix(".json")
    if sidecar_path.exists():
        sidecar = json.loads(sidecar_path.read_text())
        model_name = sidecar.get("model_name", model_name)
        seed = sidecar.get("seed", seed)
    return Dataset(data[:, :theta_dim], data[:, theta_dim:], model_name, seed)
