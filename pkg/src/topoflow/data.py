"""Corpus loading and per-node data assignment.

Two corpus sources: the classic big-endian IDX image/label container, and a
deterministic synthetic generator used wherever the real files are not
available. Assignment strategies split classes across nodes either by a
centrality focus (a class group reserved for the most or least central
nodes) or by community membership.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import graphs, rng
from .errors import ConfigError, FormatError, ParameterError

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049

CENTRALITY_METRICS = ("degree", "betweenness", "clustering")
FOCUS_MODES = ("highest", "lowest")


@dataclass
class LabeledDataset:
    """Feature matrix (one row per sample, values in [0, 1]) plus labels."""

    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ParameterError("features must be a 2-D array (samples x dims)")
        if len(self.features) != len(self.labels):
            raise ParameterError(
                f"features/labels length mismatch: {len(self.features)} vs {len(self.labels)}")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() > 9):
            raise ParameterError("labels must be class ids in 0..9")
        if len(self.features) and (self.features.min() < 0.0 or self.features.max() > 1.0):
            raise ParameterError("feature values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


def class_indices(ds: LabeledDataset) -> dict[int, np.ndarray]:
    """Sample indices grouped by label, ascending within each class."""
    return {int(c): np.flatnonzero(ds.labels == c) for c in np.unique(ds.labels)}


# ------------------------------------------------------------------- IDX I/O


def _read_idx(path, magic: int, dim_fields: int, what: str):
    raw = Path(path).read_bytes()
    header_len = 4 * (2 + dim_fields)
    if len(raw) < header_len:
        raise FormatError(f"{what}: truncated header in {path}")
    header = struct.unpack(f">{2 + dim_fields}i", raw[:header_len])
    if header[0] != magic:
        raise FormatError(f"{what}: expected magic {magic}, got {header[0]} in {path}")
    count = header[1]
    item = 1
    for d in header[2:]:
        item *= d
    payload = raw[header_len:]
    if len(payload) != count * item:
        raise FormatError(
            f"{what}: payload holds {len(payload)} bytes, header promises {count * item}")
    return header, np.frombuffer(payload, dtype=np.uint8)


def load_idx(images_path, labels_path, name: str = "idx") -> LabeledDataset:
    """Parse an IDX image/label file pair into row-major flattened vectors.

    Byte values are scaled by 1/255. Magic numbers, payload sizes, and the
    image/label count agreement are all checked and reported by field.
    """
    (_, n_images, rows, cols), pixels = _read_idx(images_path, IMAGE_MAGIC, 2, "images")
    (_, n_labels), labels = _read_idx(labels_path, LABEL_MAGIC, 0, "labels")
    if n_images != n_labels:
        raise FormatError(f"count mismatch: images={n_images}, labels={n_labels}")
    if len(labels) and labels.max() > 9:
        raise FormatError(f"labels: class id {labels.max()} outside 0..9")
    features = pixels.reshape(n_images, rows * cols).astype(np.float64) / 255.0
    return LabeledDataset(features, labels.astype(np.int64), name=name)


def write_idx(ds: LabeledDataset, images_path, labels_path, side: int = 28) -> None:
    """Inverse of load_idx, mainly for fixtures and round-trip checks."""
    if ds.feature_dim != side * side:
        raise ParameterError(f"feature dim {ds.feature_dim} is not {side}x{side}")
    pixels = np.clip(np.rint(ds.features * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">iiii", IMAGE_MAGIC, len(ds), side, side))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">ii", LABEL_MAGIC, len(ds)))
        fh.write(ds.labels.astype(np.uint8).tobytes())


# --------------------------------------------------------- synthetic corpus


def _box_blur(img: np.ndarray) -> np.ndarray:
    padded = np.pad(img, 1, mode="edge")
    acc = np.zeros_like(img)
    for dr in range(3):
        for dc in range(3):
            acc += padded[dr:dr + img.shape[0], dc:dc + img.shape[1]]
    return acc / 9.0


def class_prototypes(class_count: int, seed: int, side: int = 28,
                     pool_size: int = 16, strokes_per_class: int = 3) -> np.ndarray:
    """One pattern per class, each a distinct combination of shared strokes.

    Classes are built from a common stroke dictionary so that, like
    handwritten digits, they share low-level features; models trained on
    some classes still produce representations useful for the others.
    """
    gen = rng.substream(seed, rng.DATASET, 0)
    strokes = np.zeros((pool_size, side * side))
    for s in range(pool_size):
        base = gen.random((side, side))
        img = np.where(base > 0.88, gen.uniform(0.6, 1.0, (side, side)), 0.0)
        img = _box_blur(_box_blur(img))
        peak = img.max()
        if peak > 0:
            img = img / peak
        strokes[s] = img.reshape(-1)
    protos = np.zeros((class_count, side * side))
    used: set[tuple[int, ...]] = set()
    for c in range(class_count):
        while True:
            picks = tuple(sorted(int(p) for p in
                                 gen.choice(pool_size, size=strokes_per_class,
                                            replace=False)))
            if picks not in used:
                used.add(picks)
                break
        img = strokes[list(picks)].sum(axis=0)
        protos[c] = img / img.max()
    return protos


def synthetic_dataset(samples_per_class, seed: int, class_count: int = 10,
                      side: int = 28, noise: float = 0.35, split: int = 0,
                      name: str = "synthetic") -> LabeledDataset:
    """Deterministic image-like corpus: noisy amplitude-jittered prototypes.

    samples_per_class may be a single count or one count per class. Samples
    are laid out class-contiguously; partition builders reshuffle per class.
    Different split ids share the class prototypes but draw independent
    noise, which is how train and test sets are kept disjoint.
    """
    if isinstance(samples_per_class, int):
        counts = [samples_per_class] * class_count
    else:
        counts = [int(c) for c in samples_per_class]
        if len(counts) != class_count:
            raise ParameterError(
                f"got {len(counts)} per-class counts for {class_count} classes")
    if any(c < 0 for c in counts):
        raise ParameterError("per-class counts must be nonnegative")
    protos = class_prototypes(class_count, seed, side)
    gen = rng.substream(seed, rng.DATASET, 1, split)
    blocks = []
    labels = []
    for c, count in enumerate(counts):
        amp = gen.uniform(0.7, 1.3, size=(count, 1))
        x = amp * protos[c] + gen.normal(0.0, noise, size=(count, side * side))
        blocks.append(np.clip(x, 0.0, 1.0))
        labels.append(np.full(count, c, dtype=np.int64))
    features = np.concatenate(blocks) if blocks else np.zeros((0, side * side))
    return LabeledDataset(features, np.concatenate(labels) if labels else
                          np.zeros(0, dtype=np.int64), name=name)


# ---------------------------------------------------------------- strategies


@dataclass(frozen=True)
class CentralityFocus:
    """Reserve the g2 class group for the fraction of nodes with extreme
    values of a centrality metric; everyone shares the g1 group."""

    metric: str
    focus: str
    fraction: float
    g1_classes: tuple[int, ...]
    g2_classes: tuple[int, ...]

    def __post_init__(self):
        if self.metric not in CENTRALITY_METRICS:
            raise ConfigError(f"unknown centrality metric {self.metric!r}")
        if self.focus not in FOCUS_MODES:
            raise ConfigError(f"focus must be one of {FOCUS_MODES}, got {self.focus!r}")
        if not (0.0 < self.fraction <= 1.0):
            raise ConfigError(f"fraction must lie in (0, 1], got {self.fraction}")
        object.__setattr__(self, "g1_classes", tuple(int(c) for c in self.g1_classes))
        object.__setattr__(self, "g2_classes", tuple(int(c) for c in self.g2_classes))
        if set(self.g1_classes) & set(self.g2_classes):
            raise ConfigError("g1 and g2 class groups must be disjoint")


@dataclass
class CommunityClasses:
    """Give each community its own class subset, optionally permuted by a
    swap map (community -> community receiving its classes)."""

    community_to_classes: dict[int, tuple[int, ...]]
    swap: dict[int, int] | None = None

    def __post_init__(self):
        self.community_to_classes = {
            int(c): tuple(int(k) for k in classes)
            for c, classes in self.community_to_classes.items()
        }
        seen: dict[int, int] = {}
        for comm, classes in self.community_to_classes.items():
            for k in classes:
                if k in seen:
                    raise ConfigError(
                        f"class {k} assigned to communities {seen[k]} and {comm}")
                seen[k] = comm
        if self.swap is not None:
            self.swap = {int(a): int(b) for a, b in self.swap.items()}


def apply_community_swap(strategy: CommunityClasses,
                         permutation: Mapping[int, int]) -> CommunityClasses:
    """Re-key the community->classes mapping: community c's classes move to
    permutation[c]. The permutation must be a bijection over the strategy's
    community ids."""
    comms = set(strategy.community_to_classes)
    perm = {int(a): int(b) for a, b in permutation.items()}
    if set(perm) != comms or set(perm.values()) != comms:
        raise ConfigError(f"swap must be a bijection over communities {sorted(comms)}")
    moved = {perm[c]: classes for c, classes in strategy.community_to_classes.items()}
    return CommunityClasses(community_to_classes=moved, swap=None)


# ------------------------------------------------------------ node selection


def select_focus_nodes(values: Sequence[float], fraction: float, focus: str,
                       seed: int) -> set[int]:
    """Pick round(fraction * n) node ids with the most extreme values.

    Nodes strictly beyond the boundary value always enter; ties at the
    boundary are filled by uniform sampling without replacement from a
    dedicated random stream, so plans stay reproducible. Rounding is
    half-up, keeping the set nonempty for any positive fraction.
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise ParameterError("values must be nonempty")
    if focus not in FOCUS_MODES:
        raise ParameterError(f"focus must be one of {FOCUS_MODES}, got {focus!r}")
    if not (0.0 < fraction <= 1.0):
        raise ParameterError(f"fraction must lie in (0, 1], got {fraction}")
    n = vals.size
    k = min(n, int(np.floor(fraction * n + 0.5)))
    order_vals = -vals if focus == "highest" else vals
    boundary = np.sort(order_vals)[k - 1]
    strict = np.flatnonzero(order_vals < boundary)
    tied = np.flatnonzero(order_vals == boundary)
    chosen = set(int(i) for i in strict)
    need = k - len(chosen)
    if need:
        gen = rng.substream(seed, rng.FOCUS_TIES)
        fill = gen.choice(np.sort(tied), size=need, replace=False)
        chosen.update(int(i) for i in fill)
    return chosen


# --------------------------------------------------------------- partitioning


@dataclass
class PartitionPlan:
    """Disjoint per-node sample assignments plus role bookkeeping."""

    per_node_indices: dict[int, np.ndarray]
    g2_nodes: frozenset[int]
    node_roles: dict[int, str]
    class_groups: dict

    def to_json_dict(self) -> dict:
        return {
            "per_node_indices": {str(i): [int(x) for x in idx]
                                 for i, idx in sorted(self.per_node_indices.items())},
            "g2_nodes": sorted(int(i) for i in self.g2_nodes),
            "node_roles": {str(i): r for i, r in sorted(self.node_roles.items())},
            "class_groups": self.class_groups,
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "PartitionPlan":
        return cls(
            per_node_indices={int(i): np.asarray(idx, dtype=np.int64)
                              for i, idx in payload["per_node_indices"].items()},
            g2_nodes=frozenset(int(i) for i in payload["g2_nodes"]),
            node_roles={int(i): r for i, r in payload["node_roles"].items()},
            class_groups=payload["class_groups"],
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PartitionPlan":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def _share_class(indices: np.ndarray, recipients: Sequence[int], gen: np.random.Generator,
                 cap: int | None, label: int) -> dict[int, np.ndarray]:
    """Shuffle one class's sample indices and deal equal disjoint chunks.

    Chunk size is floor(count / recipients), optionally capped; the
    remainder is dropped so every recipient holds exactly the same count.
    """
    share = len(indices) // len(recipients)
    if cap is not None:
        share = min(share, cap)
    if share == 0:
        raise ConfigError(
            f"class {label}: {len(indices)} samples cannot cover {len(recipients)} recipients")
    shuffled = gen.permutation(indices)
    return {node: np.sort(shuffled[r * share:(r + 1) * share])
            for r, node in enumerate(sorted(recipients))}


def build_centrality_partition(g: graphs.Graph, ds: LabeledDataset,
                               strategy: CentralityFocus, seed: int,
                               per_class_cap: int | None = None) -> PartitionPlan:
    """Every node gets an equal share of each g1 class; g2 classes go only
    to the focus nodes selected by the strategy's metric."""
    by_class = class_indices(ds)
    for c in strategy.g1_classes + strategy.g2_classes:
        if c not in by_class:
            raise ConfigError(f"class {c} absent from dataset {ds.name!r}")
    if strategy.metric == "degree":
        values = graphs.degree_sequence(g).astype(np.float64)
    elif strategy.metric == "betweenness":
        values = graphs.betweenness_centrality(g)
    else:
        values = graphs.clustering_coefficients(g)
    focus = select_focus_nodes(values, strategy.fraction, strategy.focus, seed)
    all_nodes = list(range(g.node_count))
    assignments: dict[int, list[np.ndarray]] = {i: [] for i in all_nodes}
    for c in strategy.g1_classes:
        gen = rng.substream(seed, rng.PARTITION, c)
        for node, idx in _share_class(by_class[c], all_nodes, gen, per_class_cap, c).items():
            assignments[node].append(idx)
    for c in strategy.g2_classes:
        gen = rng.substream(seed, rng.PARTITION, c)
        for node, idx in _share_class(by_class[c], sorted(focus), gen, per_class_cap, c).items():
            assignments[node].append(idx)
    per_node = {i: np.sort(np.concatenate(chunks)) if chunks else np.zeros(0, dtype=np.int64)
                for i, chunks in assignments.items()}
    roles = {i: ("G2" if i in focus else "G1") for i in all_nodes}
    return PartitionPlan(
        per_node_indices=per_node,
        g2_nodes=frozenset(focus),
        node_roles=roles,
        class_groups={"g1_classes": list(strategy.g1_classes),
                      "g2_classes": list(strategy.g2_classes)},
    )


def build_community_partition(communities: Mapping[int, int], ds: LabeledDataset,
                              strategy: CommunityClasses, seed: int,
                              per_class_cap: int | None = None) -> PartitionPlan:
    """Split each community's classes equally among that community's members.

    Classes mapped to no community are simply never assigned.
    """
    strat = strategy
    if strategy.swap is not None:
        strat = apply_community_swap(strategy, strategy.swap)
    members: dict[int, list[int]] = {}
    for node, comm in communities.items():
        if comm not in strat.community_to_classes:
            raise ConfigError(f"community {comm} of node {node} has no class mapping")
        members.setdefault(int(comm), []).append(int(node))
    by_class = class_indices(ds)
    assignments: dict[int, list[np.ndarray]] = {int(i): [] for i in communities}
    for comm in sorted(members):
        for c in strat.community_to_classes[comm]:
            if c not in by_class:
                raise ConfigError(f"class {c} absent from dataset {ds.name!r}")
            gen = rng.substream(seed, rng.PARTITION, c)
            for node, idx in _share_class(by_class[c], members[comm], gen,
                                          per_class_cap, c).items():
                assignments[node].append(idx)
    per_node = {i: np.sort(np.concatenate(chunks)) if chunks else np.zeros(0, dtype=np.int64)
                for i, chunks in assignments.items()}
    roles = {int(node): f"C{int(comm) + 1}" for node, comm in communities.items()}
    return PartitionPlan(
        per_node_indices=per_node,
        g2_nodes=frozenset(),
        node_roles=roles,
        class_groups={"communities": {str(c): list(k)
                                      for c, k in sorted(strat.community_to_classes.items())}},
    )
