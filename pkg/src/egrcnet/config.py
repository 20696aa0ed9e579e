"""Flat key-value run configuration files and the run manifest.

A config file is a flat YAML mapping. Dataset keys (``name``, ``features``,
``labels``, ``graph``, ``num_clusters``, ``output_dir``, ``dae_checkpoint``,
``data_dir``) sit next to every :class:`TrainConfig` field. Unknown keys are
rejected. Relative data paths resolve against ``data_dir`` (default: the
current directory). Bare names such as ``acm`` refer to the bundled configs.
"""
from __future__ import annotations

import json
import os
import platform
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np
import torch
import yaml

from . import __version__
from .errors import FormatError, ParameterError
from .trainer import TrainConfig

DATASET_KEYS = ("name", "features", "labels", "graph", "num_clusters", "output_dir", "dae_checkpoint", "data_dir")
_TUPLE_FIELDS = ("lambdas", "dims", "e0_hidden")
_BOOL_FIELDS = ("graph_refinement", "jeffreys")
_INT_FIELDS = ("epochs", "pretrain_epochs", "pretrain_batch_size", "refine_interval", "tau", "knn_k", "seed", "kmeans_n_init")
_FLOAT_FIELDS = ("pretrain_lr", "learning_rate")


@dataclass
class RunConfig:
    train: TrainConfig
    features: str
    num_clusters: Optional[int] = None
    labels: Optional[str] = None
    graph: Optional[str] = None
    name: Optional[str] = None
    output_dir: str = "runs/default"
    dae_checkpoint: Optional[str] = None
    source: Optional[str] = None

    @property
    def dae_path(self):
        return self.dae_checkpoint or os.path.join(self.output_dir, "dae.ckpt")

    def load_bundle(self):
        from .graphio import load_dataset

        return load_dataset(self.features, self.labels, self.graph, self.num_clusters, self.name)


def bundled_configs():
    root = resources.files("egrcnet") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def _read_mapping(path_or_name):
    if not os.path.isfile(path_or_name) and path_or_name in bundled_configs():
        text = (resources.files("egrcnet") / "configs" / f"{path_or_name}.yaml").read_text()
    elif os.path.isfile(path_or_name):
        with open(path_or_name, encoding="utf-8") as fh:
            text = fh.read()
    else:
        raise FormatError(f"no such config file: {path_or_name}")
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise FormatError(f"{path_or_name}: {exc}") from None
    if not isinstance(data, dict):
        raise FormatError(f"{path_or_name}: expected a flat key-value mapping")
    for k, v in data.items():
        if isinstance(v, dict):
            raise FormatError(f"{path_or_name}: key {k!r} is nested; configs are flat")
    return data


def _coerce(key, value):
    try:
        if key in _TUPLE_FIELDS:
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split()]
            return tuple(float(v) if key == "lambdas" else int(v) for v in (value or ()))
        if key in _BOOL_FIELDS:
            if isinstance(value, str):
                if value.lower() not in ("true", "false", "yes", "no", "1", "0"):
                    raise ValueError(value)
                return value.lower() in ("true", "yes", "1")
            return bool(value)
        if key in _INT_FIELDS:
            return int(value)
        if key in _FLOAT_FIELDS:
            return float(value)
        if key == "rho":
            return None if value in (None, "", "none", "null") else float(value)
        return value
    except (TypeError, ValueError):
        raise ParameterError(f"bad value for {key!r}: {value!r}") from None


def load_config(path_or_name, overrides=None, data_dir=None) -> RunConfig:
    data = _read_mapping(path_or_name)
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = set(DATASET_KEYS) | set(TrainConfig.field_names())
    unknown = sorted(set(data) - known)
    if unknown:
        raise ParameterError(f"unknown config keys: {', '.join(unknown)}")
    if "features" not in data:
        raise ParameterError("config must name a features file")
    base = data_dir or data.get("data_dir") or os.getcwd()

    def resolve(key):
        p = data.get(key)
        return None if p is None else os.path.join(base, str(p))

    train_kw = {k: _coerce(k, v) for k, v in data.items() if k in TrainConfig.field_names()}
    return RunConfig(
        train=TrainConfig(**train_kw),
        features=resolve("features"),
        labels=resolve("labels"),
        graph=resolve("graph"),
        num_clusters=None if data.get("num_clusters") is None else int(data["num_clusters"]),
        name=data.get("name"),
        output_dir=str(data.get("output_dir", "runs/default")),
        dae_checkpoint=data.get("dae_checkpoint"),
        source=str(path_or_name),
    )


@dataclass
class RunManifest:
    config: dict
    dataset: dict
    output_dir: str
    seed: int
    version: str = __version__
    platform: dict = field(default_factory=lambda: {
        "python": platform.python_version(),
        "torch": torch.__version__,
        "numpy": np.__version__,
        "machine": platform.machine(),
    })

    @classmethod
    def from_run(cls, run: RunConfig):
        dataset = {k: getattr(run, k) for k in ("name", "features", "labels", "graph", "num_clusters")}
        return cls(run.train.to_dict(), dataset, run.output_dir, run.train.seed)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
            fh.write("\n")
