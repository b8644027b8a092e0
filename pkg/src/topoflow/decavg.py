"""Decentralized averaging engine.

Synchronous communication rounds over a fixed graph: every node snapshots
its neighborhood's parameters from the end of the previous round, forms the
size- and trust-weighted convex combination, then trains locally. Round 0
is local training only. Given the master seed, runs are bit-reproducible
and independent of node scheduling order.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import data, graphs, mlp, rng
from .errors import ConfigError, NumericsError, ProtocolError


@dataclass
class NodeState:
    """One participant: parameters, optimizer buffers, and its local shard."""

    node_id: int
    params: mlp.MlpParams
    opt_state: mlp.OptimizerState
    local_indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray

    @property
    def dataset_size(self) -> int:
        return len(self.local_indices)


@dataclass
class DataConfig:
    """Where training/evaluation samples come from and how many per node."""

    source: str = "synthetic"
    images: str | None = None
    labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    train_per_class_per_node: int | None = None
    test_per_class: int = 100
    noise: float = 0.35

    def __post_init__(self):
        if self.source not in ("synthetic", "idx"):
            raise ConfigError(f"data source must be 'synthetic' or 'idx', got {self.source!r}")
        if self.source == "idx":
            for name in ("images", "labels", "test_images", "test_labels"):
                if getattr(self, name) is None:
                    raise ConfigError(f"idx source requires data.{name}")
        elif self.train_per_class_per_node is None:
            raise ConfigError("synthetic source requires data.train_per_class_per_node")
        if self.test_per_class <= 0:
            raise ConfigError(f"test_per_class must be positive, got {self.test_per_class}")
        if self.train_per_class_per_node is not None and self.train_per_class_per_node <= 0:
            raise ConfigError("train_per_class_per_node must be positive")


@dataclass
class ExperimentConfig:
    master_seed: int
    graph_spec: graphs.GraphSpec
    strategy: data.CentralityFocus | data.CommunityClasses
    data: DataConfig
    train: mlp.TrainConfig
    rounds: int
    eval_every: int = 1
    shared_init: bool = False
    reset_momentum: bool = False

    def __post_init__(self):
        if self.rounds < 0:
            raise ConfigError(f"rounds must be nonnegative, got {self.rounds}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be positive, got {self.eval_every}")
        if isinstance(self.strategy, data.CommunityClasses) and self.graph_spec.kind != "sbm":
            raise ConfigError("community strategy requires an sbm graph spec")

    def to_echo_dict(self) -> dict:
        """Fully resolved configuration, re-parseable as a recipe file."""
        spec = self.graph_spec
        graph: dict = {"kind": spec.kind, "node_count": spec.node_count, "seed": spec.seed}
        if spec.kind == "ba":
            graph["m"] = spec.m
        elif spec.kind == "er_gnp":
            graph["p"] = spec.p
        elif spec.kind == "er_gnm":
            graph["edge_count"] = spec.edge_count
        else:
            graph.update(block_sizes=list(spec.block_sizes),
                         p_intra=spec.p_intra, p_inter=spec.p_inter)
        if isinstance(self.strategy, data.CentralityFocus):
            strategy = {
                "kind": "centrality",
                "metric": self.strategy.metric,
                "focus": self.strategy.focus,
                "fraction": self.strategy.fraction,
                "g1_classes": list(self.strategy.g1_classes),
                "g2_classes": list(self.strategy.g2_classes),
            }
        else:
            strategy = {
                "kind": "community",
                "community_to_classes": {str(c): list(k) for c, k
                                         in sorted(self.strategy.community_to_classes.items())},
            }
            if self.strategy.swap is not None:
                strategy["swap"] = {str(a): b for a, b in sorted(self.strategy.swap.items())}
        data_section: dict = {
            "source": self.data.source,
            "test_per_class": self.data.test_per_class,
            "strategy": strategy,
        }
        if self.data.train_per_class_per_node is not None:
            data_section["train_per_class_per_node"] = self.data.train_per_class_per_node
        if self.data.source == "idx":
            data_section.update(images=self.data.images, labels=self.data.labels,
                                test_images=self.data.test_images,
                                test_labels=self.data.test_labels)
        else:
            data_section["noise"] = self.data.noise
        return {
            "master_seed": self.master_seed,
            "graph": graph,
            "data": data_section,
            "train": {
                "learning_rate": self.train.learning_rate,
                "momentum": self.train.momentum,
                "local_epochs": self.train.local_epochs,
                "batch_size": self.train.batch_size,
                "dims": list(self.train.dims),
            },
            "protocol": {
                "rounds": self.rounds,
                "eval_every": self.eval_every,
                "shared_init": self.shared_init,
                "reset_momentum": self.reset_momentum,
            },
        }


@dataclass
class ExperimentOutput:
    """Everything a run produces: the accuracy timeline, final confusion
    counts, and the provenance needed to reproduce it."""

    timeline: dict[tuple[int, int], float]
    final_confusions: dict[int, np.ndarray]
    evaluated_rounds: list[int]
    graph: graphs.Graph
    summary: graphs.GraphSummary
    plan: data.PartitionPlan
    config_echo: dict


# ----------------------------------------------------------- aggregation


def aggregate(i: int, snapshots: Mapping[int, tuple[mlp.MlpParams, int]],
              g: graphs.Graph) -> mlp.MlpParams:
    """Convex combination of the closed neighborhood's parameters.

    Coefficients are trust times relative dataset size, normalized over the
    neighborhood so they sum to one. (Normalizing by the trust sum alone
    would shrink the average by the neighborhood size every round.) Fresh
    arrays are always returned.
    """
    members = list(g.neighbors(i)) + [i]
    weights = []
    for j in members:
        if j not in snapshots:
            raise ProtocolError(f"node {i}: missing snapshot for neighbor {j}")
        trust = g.self_weight(i) if j == i else g.weight(i, j)
        weights.append(trust * snapshots[j][1])
    total = float(sum(weights))
    coeffs = [w / total for w in weights]
    layers = []
    for li in range(len(snapshots[i][0].layers)):
        w_acc = coeffs[0] * snapshots[members[0]][0].layers[li][0]
        b_acc = coeffs[0] * snapshots[members[0]][0].layers[li][1]
        for c, j in zip(coeffs[1:], members[1:]):
            w_acc += c * snapshots[j][0].layers[li][0]
            b_acc += c * snapshots[j][0].layers[li][1]
        layers.append((w_acc, b_acc))
    return mlp.MlpParams(layers)


def _train_node(state: NodeState, params: mlp.MlpParams, cfg: ExperimentConfig,
                round_index: int) -> NodeState:
    opt = (mlp.OptimizerState.zeros(params) if cfg.reset_momentum
           else state.opt_state)
    gen = rng.substream(cfg.master_seed, rng.TRAIN, state.node_id, round_index)
    params, opt = mlp.train_local(params, opt, state.features, state.labels,
                                  cfg.train, gen)
    return NodeState(state.node_id, params, opt, state.local_indices,
                     state.features, state.labels)


def run_round(states: Sequence[NodeState], g: graphs.Graph, cfg: ExperimentConfig,
              round_index: int, threads: int = 1,
              node_order: Sequence[int] | None = None) -> list[NodeState]:
    """One synchronous round: snapshot, aggregate, train.

    Every node aggregates from the frozen end-of-previous-round snapshot, so
    no node ever observes another node's current-round parameters and the
    result does not depend on node_order or thread count.
    """
    if round_index < 1:
        raise ConfigError("communication rounds start at 1; round 0 is local-only")
    snapshots = {s.node_id: (s.params, s.dataset_size) for s in states}
    by_id = {s.node_id: s for s in states}
    order = list(node_order) if node_order is not None else sorted(by_id)

    def step(i: int) -> NodeState:
        return _train_node(by_id[i], aggregate(i, snapshots, g), cfg, round_index)

    results: dict[int, NodeState] = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for i, new_state in zip(order, pool.map(step, order)):
                results[i] = new_state
    else:
        for i in order:
            results[i] = step(i)
    return [results[i] for i in sorted(results)]


# ------------------------------------------------------------ run assembly


def _recipients_per_class(cfg: ExperimentConfig) -> dict[int, int]:
    """How many nodes will share each class, before any graph is drawn."""
    n = cfg.graph_spec.node_count
    if isinstance(cfg.strategy, data.CentralityFocus):
        k = min(n, int(np.floor(cfg.strategy.fraction * n + 0.5)))
        out = {c: n for c in cfg.strategy.g1_classes}
        out.update({c: k for c in cfg.strategy.g2_classes})
        return out
    sizes = dict(enumerate(cfg.graph_spec.block_sizes))
    mapping = cfg.strategy.community_to_classes
    if cfg.strategy.swap is not None:
        mapping = data.apply_community_swap(cfg.strategy, cfg.strategy.swap).community_to_classes
    out = {}
    for comm, classes in mapping.items():
        if comm not in sizes:
            raise ConfigError(f"community {comm} has no block in the graph spec")
        for c in classes:
            out[c] = sizes[comm]
    return out


def build_datasets(cfg: ExperimentConfig) -> tuple[data.LabeledDataset,
                                                   data.LabeledDataset,
                                                   tuple[int, ...] | None]:
    """Training corpus, balanced test set, and the evaluation class filter.

    Centrality strategies evaluate on all ten classes; community strategies
    evaluate on the union of the communities' classes.
    """
    if isinstance(cfg.strategy, data.CentralityFocus):
        class_filter = None
    else:
        class_filter = tuple(sorted(
            c for classes in cfg.strategy.community_to_classes.values() for c in classes))
    if cfg.data.source == "idx":
        train_ds = data.load_idx(cfg.data.images, cfg.data.labels, name="train")
        test_full = data.load_idx(cfg.data.test_images, cfg.data.test_labels, name="test")
        gen = rng.substream(cfg.master_seed, rng.DATASET, 2)
        keep = []
        for c, idx in sorted(data.class_indices(test_full).items()):
            take = min(cfg.data.test_per_class, len(idx))
            keep.append(gen.permutation(idx)[:take])
        sel = np.sort(np.concatenate(keep))
        test_ds = data.LabeledDataset(test_full.features[sel], test_full.labels[sel],
                                      name="test")
        return train_ds, test_ds, class_filter
    cap = cfg.data.train_per_class_per_node
    recipients = _recipients_per_class(cfg)
    counts = [recipients.get(c, 0) * cap for c in range(10)]
    train_ds = data.synthetic_dataset(counts, cfg.master_seed, noise=cfg.data.noise,
                                      split=0, name="train")
    test_ds = data.synthetic_dataset(cfg.data.test_per_class, cfg.master_seed,
                                     noise=cfg.data.noise, split=1, name="test")
    return train_ds, test_ds, class_filter


def build_plan(cfg: ExperimentConfig, g: graphs.Graph,
               train_ds: data.LabeledDataset) -> data.PartitionPlan:
    if isinstance(cfg.strategy, data.CentralityFocus):
        return data.build_centrality_partition(g, train_ds, cfg.strategy,
                                               cfg.master_seed,
                                               cfg.data.train_per_class_per_node)
    communities = graphs.block_membership(cfg.graph_spec.block_sizes)
    return data.build_community_partition(communities, train_ds, cfg.strategy,
                                          cfg.master_seed,
                                          cfg.data.train_per_class_per_node)


def _check_finite(states: Sequence[NodeState], round_index: int) -> None:
    for s in states:
        if not s.params.all_finite():
            raise NumericsError(
                f"non-finite parameters on node {s.node_id} at round {round_index}")


def run_experiment(cfg: ExperimentConfig, threads: int = 1,
                   progress: Callable[[int, int], None] | None = None) -> ExperimentOutput:
    """Full pipeline: graph, plan, round-0 local training, then cfg.rounds
    aggregation+training rounds with periodic evaluation."""
    g = graphs.generate(cfg.graph_spec)
    summary = graphs.graph_summary(g)
    train_ds, test_ds, class_filter = build_datasets(cfg)
    plan = build_plan(cfg, g, train_ds)

    states: list[NodeState] = []
    for i in range(g.node_count):
        init_gen = rng.substream(cfg.master_seed, rng.INIT, 0 if cfg.shared_init else i)
        params = mlp.init_mlp(cfg.train.dims, init_gen)
        idx = plan.per_node_indices[i]
        if len(idx) == 0:
            raise ConfigError(f"node {i} received no training samples")
        states.append(NodeState(
            node_id=i,
            params=params,
            opt_state=mlp.OptimizerState.zeros(params),
            local_indices=idx,
            features=train_ds.features[idx],
            labels=train_ds.labels[idx],
        ))

    timeline: dict[tuple[int, int], float] = {}
    evaluated: list[int] = []
    last_eval: dict[int, mlp.EvalResult] = {}

    def eval_round(t: int) -> None:
        for s in states:
            result = mlp.evaluate(s.params, test_ds.features, test_ds.labels,
                                  class_filter=class_filter)
            timeline[(t, s.node_id)] = result.accuracy
            last_eval[s.node_id] = result
        evaluated.append(t)

    # round 0: purely local training from the initial parameters
    states = [_train_node(s, s.params, cfg, 0) for s in states]
    _check_finite(states, 0)
    eval_round(0)
    if progress:
        progress(0, cfg.rounds)

    for t in range(1, cfg.rounds + 1):
        states = run_round(states, g, cfg, t, threads=threads)
        _check_finite(states, t)
        if t % cfg.eval_every == 0 or t == cfg.rounds:
            eval_round(t)
        if progress:
            progress(t, cfg.rounds)

    return ExperimentOutput(
        timeline=timeline,
        final_confusions={i: r.confusion for i, r in last_eval.items()},
        evaluated_rounds=evaluated,
        graph=g,
        summary=summary,
        plan=plan,
        config_echo=cfg.to_echo_dict(),
    )


# ------------------------------------------------------------ output files


def write_timeline_csv(output: ExperimentOutput, path) -> None:
    roles = output.plan.node_roles
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "node", "role", "accuracy"])
        for (t, i) in sorted(output.timeline):
            writer.writerow([t, i, roles[i], repr(output.timeline[(t, i)])])


def write_experiment_output(output: ExperimentOutput, out_dir) -> None:
    """Emit the full artifact set: timeline.csv, per-node confusion files,
    graph.edges, graph.json, plan.json, config.echo.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_timeline_csv(output, out / "timeline.csv")
    for i, conf in sorted(output.final_confusions.items()):
        with open(out / f"confusion_{i}.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            for row in conf:
                writer.writerow([int(x) for x in row])
    graphs.write_edge_list(output.graph, out / "graph.edges")
    graphs.write_summary_json(output.summary, out / "graph.json")
    output.plan.save(out / "plan.json")
    with open(out / "config.echo.json", "w", encoding="utf-8") as fh:
        json.dump(output.config_echo, fh, indent=2, sort_keys=True)
        fh.write("\n")
