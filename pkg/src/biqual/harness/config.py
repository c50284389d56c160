"""YAML run configuration.

Example::

    dataset:
      kind: blobs          # or csv (path, label_column, features)
      n_samples: 2000
      classes: 2
      dim: 10
      separation: 3.0
    grid:
      p_values: [0.05, 0.25]
      noise: ["CAR(0)", "CAR(0.45)", "AR(0.1,0.5)", "NAR(0.3,4)"]
      methods: [trusted-only, naive-union, GLC-forward, IRBL, DIW, MTL, TrAdaBoost]
      mtl_lambdas: [0.5]
      seeds: [0, 1, 2]
      test_fraction: 0.3
      tradaboost_rounds: 10
    train: {learning_rate: 1.0, max_iters: 500, tolerance: 1.0e-6, l2_penalty: 1.0e-4}
    kmm: {bandwidth: median-heuristic, weight_cap: 10, slack: 0.01}
    run: {timeout: 300, diagonal_loading: false, trusted_weight: 1.0, dump_weights: false}
"""

from __future__ import annotations

from pathlib import Path

import yaml

from ..corruption import CorruptionSpec
from ..learner import TrainConfig
from ..reweighting import KmmConfig
from .grid import ExperimentGrid, expand_methods, load_clean

KNOWN_SECTIONS = {"dataset", "grid", "train", "kmm", "run"}


class ConfigError(ValueError):
    pass


def read_config(path) -> dict:
    path = Path(path)
    try:
        cfg = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(cfg) - KNOWN_SECTIONS
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    ds = cfg.get("dataset", {})
    if ds.get("kind") == "csv" and "path" in ds:
        # relative dataset paths resolve against the config file
        ds["path"] = str((path.parent / ds["path"]).resolve())
    return cfg


def build_grid(cfg: dict, seed_base: int = 0) -> ExperimentGrid:
    try:
        g = dict(cfg.get("grid", {}))
        run = dict(cfg.get("run", {}))
        grid = ExperimentGrid(
            dataset=dict(cfg.get("dataset", {"kind": "blobs"})),
            p_values=tuple(float(p) for p in g["p_values"]),
            noise=tuple(CorruptionSpec.parse(n) for n in g["noise"]),
            methods=expand_methods(g["methods"], g.get("mtl_lambdas", [0.5])),
            seeds=tuple(int(s) for s in g["seeds"]),
            test_fraction=float(g.get("test_fraction", 0.3)),
            train=TrainConfig(**cfg.get("train", {})),
            kmm=KmmConfig(**cfg.get("kmm", {})),
            tradaboost_rounds=int(g.get("tradaboost_rounds", 10)),
            trusted_weight=float(run.get("trusted_weight", 1.0)),
            diagonal_loading=bool(run.get("diagonal_loading", False)),
            timeout=float(run.get("timeout", 300.0)),
            seed_base=seed_base,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid configuration: {e}") from e
    try:
        probe = load_clean(grid.dataset, seed_base + grid.seeds[0])
    except (OSError, ValueError) as e:
        raise ConfigError(f"dataset not loadable: {e}") from e
    if "TrAdaBoost" in grid.methods and probe.class_count != 2:
        raise ConfigError(f"TrAdaBoost needs a binary dataset, got K={probe.class_count}")
    return grid


def load_grid(path, seed_base: int = 0) -> tuple[ExperimentGrid, dict]:
    cfg = read_config(path)
    return build_grid(cfg, seed_base), cfg
