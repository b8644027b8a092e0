"""Post-processing of serialized experiment outputs.

Everything here works from the files a run leaves behind (timeline CSV,
confusion CSVs, plan and edge-list files), never from live training state:
subset mean/std curves, per-community class accuracy, cross-community link
counts, and the neighbor-of-informative-nodes groupings.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import graphs
from .data import PartitionPlan
from .errors import FormatError, ParameterError

Timeline = dict[tuple[int, int], float]


@dataclass
class SubsetCurve:
    """Mean and population std of accuracy over a node subset, per round."""

    rounds: list[int]
    mean: list[float]
    std: list[float]
    subset: str


@dataclass
class CommunityReport:
    per_class_accuracy: np.ndarray     # community x class
    zero_sample_classes: np.ndarray    # same shape, True where no test rows
    external_links: dict[tuple[int, int], int]
    outward_totals: dict[int, int]
    mean_curves: list[SubsetCurve]

    def to_json_dict(self) -> dict:
        return {
            "per_class_accuracy": [[float(v) for v in row]
                                   for row in self.per_class_accuracy],
            "zero_sample_classes": [[bool(v) for v in row]
                                    for row in self.zero_sample_classes],
            "external_links": {f"{a}-{b}": int(c)
                               for (a, b), c in sorted(self.external_links.items())},
            "outward_totals": {str(c): int(v) for c, v in sorted(self.outward_totals.items())},
            "mean_curves": [
                {"subset": c.subset, "rounds": c.rounds, "mean": c.mean, "std": c.std}
                for c in self.mean_curves
            ],
        }


@dataclass
class GroupReport:
    g2_link_count: dict[int, int]
    degree_flag: set[int]

    def to_json_dict(self) -> dict:
        return {
            "g2_link_count": {str(i): int(c) for i, c in sorted(self.g2_link_count.items())},
            "degree_flag": sorted(int(i) for i in self.degree_flag),
        }


def subset_stats(timeline: Timeline, subset: Iterable[int],
                 label: str = "subset") -> SubsetCurve:
    """Per-round arithmetic mean and population std over the given nodes."""
    nodes = sorted(set(int(i) for i in subset))
    if not nodes:
        raise ParameterError("subset must be nonempty")
    rounds = sorted({t for (t, _) in timeline})
    means, stds = [], []
    for t in rounds:
        try:
            vals = np.array([timeline[(t, i)] for i in nodes])
        except KeyError as exc:
            raise ParameterError(f"timeline is missing node {exc.args[0][1]} "
                                 f"at round {t}") from exc
        means.append(float(vals.mean()))
        stds.append(float(vals.std()))
    return SubsetCurve(rounds=rounds, mean=means, std=stds, subset=label)


def community_class_accuracy(confusions: Mapping[int, np.ndarray],
                             communities: Mapping[int, int],
                             class_count: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Average per-class recall (confusion diagonal over row sum) across the
    members of each community.

    Returns (community x class accuracy matrix, flag matrix marking classes
    with zero test samples, which score 0).
    """
    comm_ids = sorted(set(communities.values()))
    acc = np.zeros((len(comm_ids), class_count))
    flags = np.zeros((len(comm_ids), class_count), dtype=bool)
    for row, comm in enumerate(comm_ids):
        members = sorted(i for i, c in communities.items() if c == comm)
        recalls = np.zeros((len(members), class_count))
        for mi, node in enumerate(members):
            conf = np.asarray(confusions[node])
            totals = conf.sum(axis=1)
            empty = totals == 0
            recalls[mi] = np.divide(np.diag(conf), totals,
                                    out=np.zeros(class_count), where=~empty)
            flags[row] |= empty
        acc[row] = recalls.mean(axis=0)
    return acc, flags


def inter_community_edges(g: graphs.Graph, communities: Mapping[int, int]
                          ) -> tuple[dict[tuple[int, int], int], dict[int, int]]:
    """Cross-community edge counts per unordered community pair, plus each
    community's outward total."""
    missing = set(range(g.node_count)) - set(communities)
    if missing:
        raise ParameterError(f"communities must cover all nodes, missing {sorted(missing)}")
    pair_counts: dict[tuple[int, int], int] = {}
    outward: dict[int, int] = {c: 0 for c in sorted(set(communities.values()))}
    for i, j in g.edges:
        ci, cj = communities[i], communities[j]
        if ci == cj:
            continue
        key = (min(ci, cj), max(ci, cj))
        pair_counts[key] = pair_counts.get(key, 0) + 1
        outward[ci] += 1
        outward[cj] += 1
    return pair_counts, outward


def g2_link_histogram(g: graphs.Graph, g2_nodes: Iterable[int]) -> dict[int, int]:
    """For every node outside the informative set, how many of its neighbors
    are inside it."""
    g2 = set(int(i) for i in g2_nodes)
    return {i: sum(1 for w in g.neighbors(i) if w in g2)
            for i in range(g.node_count) if i not in g2}


def degree_percentile_flags(g: graphs.Graph, subset: Iterable[int],
                            q: float) -> set[int]:
    """Members of subset whose degree reaches the q-th empirical quantile
    (nearest-rank) of the subset's own degrees."""
    nodes = sorted(set(int(i) for i in subset))
    if not nodes:
        raise ParameterError("subset must be nonempty")
    if not (0.0 < q < 1.0):
        raise ParameterError(f"q must lie in (0, 1), got {q}")
    degrees = graphs.degree_sequence(g)
    vals = np.sort(degrees[nodes])
    rank = max(1, math.ceil(q * len(vals)))
    threshold = vals[rank - 1]
    return {i for i in nodes if degrees[i] >= threshold}


# --------------------------------------------------------------- file layer


def read_timeline_csv(path) -> tuple[Timeline, dict[int, str]]:
    """Parse a timeline file back into ((round, node) -> accuracy, roles)."""
    timeline: Timeline = {}
    roles: dict[int, str] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["round", "node", "role", "accuracy"]:
            raise FormatError(f"{path}: expected timeline header, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 columns")
            try:
                t, i, acc = int(row[0]), int(row[1]), float(row[3])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            timeline[(t, i)] = acc
            roles[i] = row[2]
    return timeline, roles


def read_confusions(out_dir) -> dict[int, np.ndarray]:
    confusions: dict[int, np.ndarray] = {}
    for path in sorted(Path(out_dir).glob("confusion_*.csv")):
        node = int(path.stem.split("_", 1)[1])
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = [[int(x) for x in row] for row in csv.reader(fh) if row]
        confusions[node] = np.asarray(rows, dtype=np.int64)
    return confusions


def write_subset_stats_csv(curves: Sequence[SubsetCurve], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "mean", "std", "subset"])
        for curve in curves:
            for t, m, s in zip(curve.rounds, curve.mean, curve.std):
                writer.writerow([t, repr(m), repr(s), curve.subset])


def _communities_from_roles(roles: Mapping[int, str]) -> dict[int, int]:
    return {i: int(r[1:]) - 1 for i, r in roles.items() if r.startswith("C")}


def analyze_run_dir(out_dir, subset: str = "g1", percentile: float = 0.9) -> list[Path]:
    """Regenerate the derived artifacts for a finished run directory.

    subset "g1": subset_stats.csv over G1 nodes plus group_report.json.
    subset "community": per-community curves, class accuracy, and link
    counts in subset_stats.csv and community_report.json.
    Returns the paths written. Re-running is byte-idempotent.
    """
    out = Path(out_dir)
    timeline, roles = read_timeline_csv(out / "timeline.csv")
    g = graphs.read_edge_list(out / "graph.edges")
    written: list[Path] = []
    if subset == "g1":
        plan = PartitionPlan.load(out / "plan.json")
        g1_nodes = [i for i, r in roles.items() if r == "G1"]
        curve = subset_stats(timeline, g1_nodes, label="G1 nodes")
        stats_path = out / "subset_stats.csv"
        write_subset_stats_csv([curve], stats_path)
        written.append(stats_path)
        report = GroupReport(
            g2_link_count={i: c for i, c in g2_link_histogram(g, plan.g2_nodes).items()
                           if i in set(g1_nodes)},
            degree_flag=degree_percentile_flags(g, g1_nodes, percentile),
        )
        report_path = out / "group_report.json"
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(report_path)
    elif subset == "community":
        communities = _communities_from_roles(roles)
        if not communities:
            raise ParameterError(f"{out_dir}: no community roles in timeline")
        confusions = read_confusions(out)
        acc, flags = community_class_accuracy(confusions, communities)
        pair_counts, outward = inter_community_edges(g, communities)
        curves = [subset_stats(timeline,
                               [i for i, c in communities.items() if c == comm],
                               label=f"C{comm + 1}")
                  for comm in sorted(set(communities.values()))]
        report = CommunityReport(per_class_accuracy=acc, zero_sample_classes=flags,
                                 external_links=pair_counts, outward_totals=outward,
                                 mean_curves=curves)
        stats_path = out / "subset_stats.csv"
        write_subset_stats_csv(curves, stats_path)
        written.append(stats_path)
        report_path = out / "community_report.json"
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(report_path)
    else:
        raise ParameterError(f"subset must be 'g1' or 'community', got {subset!r}")
    return written
