"""Uniform dispatch over the four inverters.

Every trained model exposes ``method`` (tag), ``predict(responses) ->
thetas`` and ``to_dict``/``from_dict``; this module maps tags to config
classes, training entry points, and the versioned JSON model format.
"""

from __future__ import annotations

import json
from pathlib import Path

from .baselines import (
    MAFConfig,
    MAFModel,
    MDNConfig,
    MDNModel,
    NIConfig,
    NIModel,
    train_maf,
    train_mdn,
    train_ni,
)
from .datasets import Dataset
from .errors import DataFormatError
from .forward_models import Ball, Box
from .pathfinder import PathfinderConfig, PathfinderModel, train_pathfinder

METHOD_ORDER = ("pf", "mdn", "maf", "ni")

CONFIG_CLASSES = {
    "pf": PathfinderConfig,
    "mdn": MDNConfig,
    "maf": MAFConfig,
    "ni": NIConfig,
}

MODEL_CLASSES = {
    "pf": PathfinderModel,
    "mdn": MDNModel,
    "maf": MAFModel,
    "ni": NIModel,
}


def make_config(method: str, **kwargs):
    if method not in CONFIG_CLASSES:
        raise KeyError(f"unknown method {method!r}; known: {', '.join(METHOD_ORDER)}")
    return CONFIG_CLASSES[method](**kwargs)


def train_method(method: str, dataset: Dataset, config, val: Dataset, seed: int,
                 domain: Box | Ball | None = None):
    if method == "pf":
        return train_pathfinder(dataset, config, val, seed)
    if method == "mdn":
        return train_mdn(dataset, config, val, seed)
    if method == "maf":
        return train_maf(dataset, config, val, seed, domain=domain)
    if method == "ni":
        return train_ni(dataset, config, val, seed)
    raise KeyError(f"unknown method {method!r}; known: {', '.join(METHOD_ORDER)}")


def save_model(model, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.to_dict(), sort_keys=True))
    return path


def load_model(path: str | Path):
    blob = json.loads(Path(path).read_text())
    method = blob.get("method")
    if method not in MODEL_CLASSES:
        raise DataFormatError(f"{path}: unknown or missing method tag {method!r}")
    if blob.get("schema_version") != 1:
        raise DataFormatError(f"{path}: unsupported schema_version {blob.get('schema_version')!r}")
    return MODEL_CLASSES[method].from_dict(blob)
