"""Random graph generation and structural metrics.

Generators cover the three topology families used by the experiments:
preferential attachment (BA), uniform random graphs in both G(n, p) and
G(n, M) form, and the stochastic block model. All generators are pure
functions of their parameters and seed.

Metrics cover everything the data-assignment strategies and the result
analysis consume: degree, betweenness (Brandes), local clustering,
Laplacian algebraic connectivity, and BFS path statistics.
"""

from __future__ import annotations

import json
import math
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import rng
from .errors import FormatError, ParameterError

Edge = tuple[int, int]


@dataclass
class Graph:
    """Undirected simple graph over node ids 0..node_count-1.

    Edges are stored canonically: (i, j) with i < j, sorted lexicographically.
    Optional per-edge weights and per-node self-weights default to 1.0; they
    parameterize trust in the aggregation rule but all shipped experiments
    run unweighted.
    """

    node_count: int
    edges: tuple[Edge, ...]
    edge_weights: dict[Edge, float] | None = None
    self_weights: tuple[float, ...] | None = None
    _adj: list[list[int]] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.node_count <= 0:
            raise ParameterError(f"node_count must be positive, got {self.node_count}")
        canon = []
        for i, j in self.edges:
            if i == j:
                raise ParameterError(f"self-loop on node {i}")
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise ParameterError(f"edge ({i}, {j}) outside node range")
            canon.append((i, j) if i < j else (j, i))
        canon.sort()
        for a, b in zip(canon, canon[1:]):
            if a == b:
                raise ParameterError(f"duplicate edge {a}")
        self.edges = tuple(canon)
        if self.edge_weights is not None:
            keyed = {(min(i, j), max(i, j)): w for (i, j), w in self.edge_weights.items()}
            if set(keyed) != set(self.edges):
                raise ParameterError("edge_weights keys must match the edge set exactly")
            if any(w <= 0 for w in keyed.values()):
                raise ParameterError("edge weights must be positive")
            self.edge_weights = keyed
        if self.self_weights is not None:
            self.self_weights = tuple(self.self_weights)
            if len(self.self_weights) != self.node_count:
                raise ParameterError("self_weights must cover every node")
            if any(w <= 0 for w in self.self_weights):
                raise ParameterError("self weights must be positive")

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def adjacency(self) -> list[list[int]]:
        """Neighbor lists, sorted ascending; built once and cached."""
        if self._adj is None:
            adj: list[list[int]] = [[] for _ in range(self.node_count)]
            for i, j in self.edges:
                adj[i].append(j)
                adj[j].append(i)
            for lst in adj:
                lst.sort()
            self._adj = adj
        return self._adj

    def neighbors(self, i: int) -> list[int]:
        return self.adjacency()[i]

    def weight(self, i: int, j: int) -> float:
        """Trust weight of edge (i, j); 1.0 unless explicit weights were set."""
        if self.edge_weights is None:
            return 1.0
        return self.edge_weights[(min(i, j), max(i, j))]

    def self_weight(self, i: int) -> float:
        if self.self_weights is None:
            return 1.0
        return self.self_weights[i]


@dataclass
class GraphSpec:
    """Declarative description of a graph to generate.

    kind is one of "ba" (needs m), "er_gnp" (needs p), "er_gnm" (needs
    edge_count), "sbm" (needs block_sizes, p_intra, p_inter; node_count must
    equal the block total).
    """

    kind: str
    node_count: int
    seed: int
    m: int | None = None
    p: float | None = None
    edge_count: int | None = None
    block_sizes: tuple[int, ...] | None = None
    p_intra: float | None = None
    p_inter: float | None = None

    def __post_init__(self):
        if self.kind not in ("ba", "er_gnp", "er_gnm", "sbm"):
            raise ParameterError(f"unknown graph kind {self.kind!r}")
        if self.node_count <= 0:
            raise ParameterError("node_count must be positive")
        if self.kind == "ba":
            if self.m is None or not (1 <= self.m < self.node_count):
                raise ParameterError(f"ba requires 1 <= m < n, got m={self.m}, n={self.node_count}")
        elif self.kind == "er_gnp":
            if self.p is None or not (0.0 <= self.p <= 1.0):
                raise ParameterError(f"er_gnp requires p in [0, 1], got {self.p}")
        elif self.kind == "er_gnm":
            limit = self.node_count * (self.node_count - 1) // 2
            if self.edge_count is None or not (0 <= self.edge_count <= limit):
                raise ParameterError(
                    f"er_gnm requires 0 <= edge_count <= {limit}, got {self.edge_count}")
        else:
            if not self.block_sizes:
                raise ParameterError("sbm requires a nonempty block_sizes list")
            self.block_sizes = tuple(int(b) for b in self.block_sizes)
            if any(b <= 0 for b in self.block_sizes):
                raise ParameterError("sbm block sizes must be positive")
            if sum(self.block_sizes) != self.node_count:
                raise ParameterError(
                    f"sbm block sizes sum to {sum(self.block_sizes)}, expected {self.node_count}")
            for name, prob in (("p_intra", self.p_intra), ("p_inter", self.p_inter)):
                if prob is None or not (0.0 <= prob <= 1.0):
                    raise ParameterError(f"sbm requires {name} in [0, 1], got {prob}")


def generate(spec: GraphSpec) -> Graph:
    """Materialize a GraphSpec."""
    if spec.kind == "ba":
        return generate_ba(spec.node_count, spec.m, spec.seed)
    if spec.kind == "er_gnp":
        return generate_er_gnp(spec.node_count, spec.p, spec.seed)
    if spec.kind == "er_gnm":
        return generate_er_gnm(spec.node_count, spec.edge_count, spec.seed)
    return generate_sbm(list(spec.block_sizes), spec.p_intra, spec.p_inter, spec.seed)


# ---------------------------------------------------------------- generators


def generate_ba(n: int, m: int, seed: int) -> Graph:
    """Preferential-attachment graph with exactly m * (n - m) edges.

    Starts from m isolated nodes; each of the remaining n - m arrivals
    attaches m distinct edges to existing nodes drawn proportionally to
    current degree (the urn holds one entry per incident edge endpoint,
    duplicates within one arrival are rejected). The very first arrival sees
    an all-zero degree sequence and connects to all m initial nodes.
    """
    if not (1 <= m < n):
        raise ParameterError(f"ba requires 1 <= m < n, got m={m}, n={n}")
    gen = rng.substream(seed, rng.GRAPH)
    edges: list[Edge] = []
    urn: list[int] = []
    for v in range(m, n):
        if not urn:
            targets = list(range(v))
        else:
            picked: set[int] = set()
            while len(picked) < m:
                picked.add(urn[int(gen.integers(len(urn)))])
            targets = sorted(picked)
        for u in targets:
            edges.append((u, v))
        urn.extend(targets)
        urn.extend([v] * m)
    return Graph(n, tuple(edges))


def _all_pairs(n: int) -> np.ndarray:
    iu, ju = np.triu_indices(n, k=1)
    return np.column_stack([iu, ju])


def generate_er_gnp(n: int, p: float, seed: int) -> Graph:
    """G(n, p): every unordered pair included independently with probability p."""
    if not (0.0 <= p <= 1.0):
        raise ParameterError(f"p must lie in [0, 1], got {p}")
    gen = rng.substream(seed, rng.GRAPH)
    pairs = _all_pairs(n)
    mask = gen.random(len(pairs)) < p
    return Graph(n, tuple(map(tuple, pairs[mask])))


def generate_er_gnm(n: int, edge_count: int, seed: int) -> Graph:
    """G(n, M): exactly edge_count distinct edges, uniform over all pairs.

    With edge_count taken from a reference preferential-attachment graph this
    yields its density-matched random counterpart (uniform reshuffle, not
    degree-preserving rewiring).
    """
    limit = n * (n - 1) // 2
    if not (0 <= edge_count <= limit):
        raise ParameterError(f"edge_count must lie in [0, {limit}], got {edge_count}")
    gen = rng.substream(seed, rng.GRAPH)
    pairs = _all_pairs(n)
    chosen = gen.choice(limit, size=edge_count, replace=False)
    return Graph(n, tuple(map(tuple, pairs[chosen])))


def generate_sbm(block_sizes: Sequence[int], p_intra: float, p_inter: float,
                 seed: int) -> Graph:
    """Stochastic block model with block-contiguous node ids.

    Within-block pairs appear with probability p_intra, cross-block pairs
    with p_inter, all independently.
    """
    if not block_sizes:
        raise ParameterError("block_sizes must be nonempty")
    if any(b <= 0 for b in block_sizes):
        raise ParameterError("block sizes must be positive")
    for name, prob in (("p_intra", p_intra), ("p_inter", p_inter)):
        if not (0.0 <= prob <= 1.0):
            raise ParameterError(f"{name} must lie in [0, 1], got {prob}")
    n = int(sum(block_sizes))
    block_of = np.repeat(np.arange(len(block_sizes)), block_sizes)
    gen = rng.substream(seed, rng.GRAPH)
    pairs = _all_pairs(n)
    same = block_of[pairs[:, 0]] == block_of[pairs[:, 1]]
    probs = np.where(same, p_intra, p_inter)
    mask = gen.random(len(pairs)) < probs
    return Graph(n, tuple(map(tuple, pairs[mask])))


def block_membership(block_sizes: Sequence[int]) -> dict[int, int]:
    """Node id -> block index for block-contiguous ids (the SBM layout)."""
    out: dict[int, int] = {}
    node = 0
    for b, size in enumerate(block_sizes):
        for _ in range(size):
            out[node] = b
            node += 1
    return out


# ------------------------------------------------------------------- metrics


def degree_sequence(g: Graph) -> np.ndarray:
    degrees = np.zeros(g.node_count, dtype=np.int64)
    for i, j in g.edges:
        degrees[i] += 1
        degrees[j] += 1
    return degrees


def betweenness_centrality(g: Graph) -> np.ndarray:
    """Brandes accumulation over unweighted shortest paths.

    Normalized by (n-1)(n-2)/2 so values live in [0, 1]; endpoints are not
    counted on their own paths. Graphs with n < 3 have no interior vertices
    and return all zeros.
    """
    n = g.node_count
    bc = np.zeros(n)
    if n < 3:
        return bc
    adj = g.adjacency()
    for s in range(n):
        stack: list[int] = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = np.zeros(n)
        sigma[s] = 1.0
        dist = np.full(n, -1, dtype=np.int64)
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = np.zeros(n)
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
    # each unordered pair was accumulated from both endpoints
    return bc / ((n - 1) * (n - 2))


def clustering_coefficients(g: Graph) -> np.ndarray:
    """Fraction of a node's neighbor pairs that are themselves connected;
    0 for degree < 2."""
    n = g.node_count
    adj = [set(nbrs) for nbrs in g.adjacency()]
    coeffs = np.zeros(n)
    for v in range(n):
        nbrs = sorted(adj[v])
        d = len(nbrs)
        if d < 2:
            continue
        links = 0
        for a_idx in range(d):
            for b_idx in range(a_idx + 1, d):
                if nbrs[b_idx] in adj[nbrs[a_idx]]:
                    links += 1
        coeffs[v] = links / (d * (d - 1) / 2)
    return coeffs


def connected_components(g: Graph) -> list[list[int]]:
    """Components as sorted node lists, largest first (ties by smallest id)."""
    seen = [False] * g.node_count
    adj = g.adjacency()
    comps: list[list[int]] = []
    for s in range(g.node_count):
        if seen[s]:
            continue
        comp = [s]
        seen[s] = True
        queue = deque([s])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    comp.append(w)
                    queue.append(w)
        comps.append(sorted(comp))
    comps.sort(key=lambda c: (-len(c), c[0]))
    return comps


def laplacian_matrix(g: Graph) -> np.ndarray:
    """Unweighted combinatorial Laplacian L = D - A."""
    n = g.node_count
    lap = np.zeros((n, n))
    for i, j in g.edges:
        lap[i, j] -= 1.0
        lap[j, i] -= 1.0
        lap[i, i] += 1.0
        lap[j, j] += 1.0
    return lap


def algebraic_connectivity(g: Graph) -> float:
    """Second-smallest Laplacian eigenvalue (zero iff disconnected).

    Dense symmetric eigendecomposition; fine for the experiment sizes
    (n <= 512), chosen for robustness over speed.
    """
    if g.node_count < 2:
        raise ParameterError("algebraic connectivity needs at least 2 nodes")
    eigvals = np.linalg.eigvalsh(laplacian_matrix(g))
    return float(max(eigvals[1], 0.0))


def _bfs_distances(adj: list[list[int]], source: int, n: int) -> np.ndarray:
    dist = np.full(n, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


@dataclass
class GraphSummary:
    """Headline structural statistics; path statistics cover the largest
    connected component when the graph is disconnected."""

    node_count: int
    edge_count: int
    avg_degree: float
    density: float
    avg_clustering: float
    avg_shortest_path: float
    diameter: int
    algebraic_connectivity: float
    connected: bool

    def to_dict(self) -> dict:
        return {
            "node_count": self.node_count,
            "edge_count": self.edge_count,
            "avg_degree": self.avg_degree,
            "density": self.density,
            "avg_clustering": self.avg_clustering,
            "avg_shortest_path": self.avg_shortest_path,
            "diameter": self.diameter,
            "algebraic_connectivity": self.algebraic_connectivity,
            "connected": self.connected,
        }


def graph_summary(g: Graph) -> GraphSummary:
    n = g.node_count
    comps = connected_components(g)
    largest = comps[0]
    adj = g.adjacency()
    total = 0
    pair_count = 0
    diameter = 0
    for v in largest:
        dist = _bfs_distances(adj, v, n)
        reached = dist[largest]
        total += int(reached.sum())
        pair_count += len(largest) - 1
        diameter = max(diameter, int(reached.max()))
    avg_path = total / pair_count if pair_count else 0.0
    lam2 = algebraic_connectivity(g) if n >= 2 else 0.0
    return GraphSummary(
        node_count=n,
        edge_count=g.edge_count,
        avg_degree=2.0 * g.edge_count / n,
        density=g.edge_count / (n * (n - 1) / 2) if n > 1 else 0.0,
        avg_clustering=float(clustering_coefficients(g).mean()),
        avg_shortest_path=avg_path,
        diameter=diameter,
        algebraic_connectivity=lam2,
        connected=len(comps) == 1,
    )


def critical_p(n: int) -> float:
    """Connectivity phase-transition threshold ln(n)/n for G(n, p)."""
    if n < 2:
        raise ParameterError("critical_p needs n >= 2")
    return math.log(n) / n


# ------------------------------------------------------------------ file I/O


def write_edge_list(g: Graph, path) -> None:
    """Plain edge list: header '# nodes=<n>', then sorted 'i j' lines, i < j."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nodes={g.node_count}\n")
        for i, j in g.edges:
            fh.write(f"{i} {j}\n")


def read_edge_list(path) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        match = re.fullmatch(r"#\s*nodes=(\d+)\s*", header)
        if not match:
            raise FormatError(f"{path}: missing '# nodes=<n>' header")
        n = int(match.group(1))
        edges = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'i j' pair")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-integer node id") from exc
            edges.append((i, j))
    try:
        return Graph(n, tuple(edges))
    except ParameterError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_summary_json(summary: GraphSummary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
