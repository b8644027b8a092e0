"""Experiment recipe parsing.

Recipes are JSON with sections graph / data / train / protocol and an
optional output section. Parsing is strict: unknown keys anywhere are
errors, so a typo can never silently fall back to a default. Defaults are
applied only to fields that document one.
"""

from __future__ import annotations

import json
from pathlib import Path

from . import data, graphs, mlp
from .decavg import DataConfig, ExperimentConfig
from .errors import ConfigError

_GRAPH_KEYS = {
    "ba": {"kind", "node_count", "seed", "m"},
    "er_gnp": {"kind", "node_count", "seed", "p"},
    "er_gnm": {"kind", "node_count", "seed", "edge_count"},
    "sbm": {"kind", "node_count", "seed", "block_sizes", "p_intra", "p_inter"},
}


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing mandatory field {where}.{key}" if where
                          else f"missing mandatory field {key}")
    return section[key]


def graph_spec_from_dict(section: dict, default_seed: int | None = None) -> graphs.GraphSpec:
    if not isinstance(section, dict):
        raise ConfigError("graph section must be an object")
    kind = _require(section, "kind", "graph")
    if kind not in _GRAPH_KEYS:
        raise ConfigError(f"graph.kind must be one of {sorted(_GRAPH_KEYS)}, got {kind!r}")
    _check_keys(section, _GRAPH_KEYS[kind], "graph")
    node_count = int(_require(section, "node_count", "graph"))
    seed = section.get("seed", default_seed)
    if seed is None:
        raise ConfigError("missing mandatory field graph.seed")
    return graphs.GraphSpec(
        kind=kind,
        node_count=node_count,
        seed=int(seed),
        m=int(section["m"]) if "m" in section else None,
        p=float(section["p"]) if "p" in section else None,
        edge_count=int(section["edge_count"]) if "edge_count" in section else None,
        block_sizes=tuple(section["block_sizes"]) if "block_sizes" in section else None,
        p_intra=float(section["p_intra"]) if "p_intra" in section else None,
        p_inter=float(section["p_inter"]) if "p_inter" in section else None,
    )


def _strategy_from_dict(section: dict):
    if not isinstance(section, dict):
        raise ConfigError("data.strategy must be an object")
    kind = _require(section, "kind", "data.strategy")
    if kind == "centrality":
        _check_keys(section, {"kind", "metric", "focus", "fraction",
                              "g1_classes", "g2_classes"}, "data.strategy")
        return data.CentralityFocus(
            metric=_require(section, "metric", "data.strategy"),
            focus=_require(section, "focus", "data.strategy"),
            fraction=float(_require(section, "fraction", "data.strategy")),
            g1_classes=tuple(_require(section, "g1_classes", "data.strategy")),
            g2_classes=tuple(_require(section, "g2_classes", "data.strategy")),
        )
    if kind == "community":
        _check_keys(section, {"kind", "community_to_classes", "swap"}, "data.strategy")
        mapping = _require(section, "community_to_classes", "data.strategy")
        swap = section.get("swap")
        return data.CommunityClasses(
            community_to_classes={int(c): tuple(k) for c, k in mapping.items()},
            swap={int(a): int(b) for a, b in swap.items()} if swap is not None else None,
        )
    raise ConfigError(f"data.strategy.kind must be 'centrality' or 'community', got {kind!r}")


def _data_from_dict(section: dict) -> tuple[DataConfig, object]:
    if not isinstance(section, dict):
        raise ConfigError("data section must be an object")
    _check_keys(section, {"source", "images", "labels", "test_images", "test_labels",
                          "train_per_class_per_node", "test_per_class", "noise",
                          "strategy"}, "data")
    strategy = _strategy_from_dict(_require(section, "strategy", "data"))
    dc = DataConfig(
        source=section.get("source", "synthetic"),
        images=section.get("images"),
        labels=section.get("labels"),
        test_images=section.get("test_images"),
        test_labels=section.get("test_labels"),
        train_per_class_per_node=(int(section["train_per_class_per_node"])
                                  if "train_per_class_per_node" in section else None),
        test_per_class=int(section.get("test_per_class", 100)),
        noise=float(section.get("noise", 0.35)),
    )
    return dc, strategy


def _train_from_dict(section: dict) -> mlp.TrainConfig:
    if not isinstance(section, dict):
        raise ConfigError("train section must be an object")
    _check_keys(section, {"learning_rate", "momentum", "local_epochs",
                          "batch_size", "dims"}, "train")
    return mlp.TrainConfig(
        learning_rate=float(section.get("learning_rate", 0.01)),
        momentum=float(section.get("momentum", 0.5)),
        local_epochs=int(section.get("local_epochs", 100)),
        batch_size=int(section.get("batch_size", 32)),
        dims=tuple(section.get("dims", mlp.DEFAULT_DIMS)),
    )


def config_from_dict(payload: dict,
                     master_seed_override: int | None = None) -> ExperimentConfig:
    if not isinstance(payload, dict):
        raise ConfigError("recipe must be a JSON object")
    _check_keys(payload, {"master_seed", "graph", "data", "train",
                          "protocol", "output"}, "recipe")
    if master_seed_override is not None:
        master_seed = int(master_seed_override)
    else:
        master_seed = int(_require(payload, "master_seed", ""))
    if master_seed < 0:
        raise ConfigError(f"master_seed must be nonnegative, got {master_seed}")
    graph_spec = graph_spec_from_dict(_require(payload, "graph", ""),
                                      default_seed=master_seed)
    data_cfg, strategy = _data_from_dict(_require(payload, "data", ""))
    train_cfg = _train_from_dict(payload.get("train", {}))
    protocol = payload.get("protocol", {})
    if not isinstance(protocol, dict):
        raise ConfigError("protocol section must be an object")
    _check_keys(protocol, {"rounds", "eval_every", "shared_init",
                           "reset_momentum"}, "protocol")
    rounds = _require(protocol, "rounds", "protocol")
    output = payload.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("output section must be an object")
    _check_keys(output, {"dir"}, "output")
    return ExperimentConfig(
        master_seed=master_seed,
        graph_spec=graph_spec,
        strategy=strategy,
        data=data_cfg,
        train=train_cfg,
        rounds=int(rounds),
        eval_every=int(protocol.get("eval_every", 1)),
        shared_init=bool(protocol.get("shared_init", False)),
        reset_momentum=bool(protocol.get("reset_momentum", False)),
    )


def _load_json(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read recipe {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def parse_config(path, master_seed_override: int | None = None) -> ExperimentConfig:
    """Load and validate a recipe file."""
    return config_from_dict(_load_json(path), master_seed_override)


def recipe_output_dir(path) -> str | None:
    """The optional output.dir field of a recipe, if present."""
    payload = _load_json(path)
    output = payload.get("output", {})
    return output.get("dir") if isinstance(output, dict) else None


def parse_graph_spec(path) -> graphs.GraphSpec:
    """Load a standalone graph spec file (same schema as the graph section,
    but the seed is mandatory)."""
    return graph_spec_from_dict(_load_json(path))
