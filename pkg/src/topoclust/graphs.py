"""Snapshot/dynamic graph data model, loaders and synthetic generators.

A dynamic graph is an ordered sequence of weighted undirected snapshots.
Snapshots keep their own node sets (nodes may appear and disappear over
time), so every snapshot carries its own external-id <-> local-index map.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

_INT_RE = re.compile(r"^[+-]?\d+$")


class GraphError(Exception):
    """Base class for graph construction/loading failures."""


class GraphValidationError(GraphError):
    """Invariant violation: asymmetry, negative weight, self-loop, bad labels."""


class SnapshotSequenceError(GraphError):
    """Missing or non-contiguous snapshot files in a dataset directory."""


class EmptyGraphError(GraphError):
    """Snapshot with no nodes/edges where a non-empty graph is required."""


def _parse_id(token: str):
    return int(token) if _INT_RE.match(token) else token


def _sort_ids(ids):
    # Numeric sort when every id is an int, lexicographic otherwise.
    if all(isinstance(i, int) for i in ids):
        return sorted(ids)
    return sorted(ids, key=str)


@dataclass(frozen=True)
class SnapshotGraph:
    """Weighted undirected graph at one time step.

    Attributes:
        node_ids: ordered external node identifiers.
        weights: symmetric n x n non-negative adjacency with zero diagonal.
        labels: optional per-node ground-truth community ids, aligned with
            node_ids.
    """

    node_ids: tuple
    weights: np.ndarray
    labels: Optional[np.ndarray] = None
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        n = len(self.node_ids)
        if w.shape != (n, n):
            raise GraphValidationError(
                f"weights shape {w.shape} does not match {n} nodes")
        if len(set(self.node_ids)) != n:
            raise GraphValidationError("node ids are not unique")
        if not np.array_equal(w, w.T):
            raise GraphValidationError("weight matrix is not symmetric")
        if np.any(np.diag(w) != 0.0):
            raise GraphValidationError("weight matrix has a nonzero diagonal")
        if np.any(w < 0.0):
            raise GraphValidationError("negative edge weight")
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (n,):
                raise GraphValidationError(
                    f"labels cover {lab.shape[0]} of {n} nodes")
            object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "weights", w)
        w.setflags(write=False)
        object.__setattr__(
            self, "_index", {u: i for i, u in enumerate(self.node_ids)})

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def num_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights)))

    def index_of(self, node_id) -> int:
        return self._index[node_id]

    def edges(self) -> Iterable[tuple]:
        """Yield (u, v, w) once per stored undirected edge (u before v)."""
        iu, iv = np.nonzero(np.triu(self.weights))
        for i, j in zip(iu, iv):
            yield self.node_ids[i], self.node_ids[j], float(self.weights[i, j])

    @staticmethod
    def from_edges(edge_list: Sequence[tuple], nodes=None, labels: Optional[dict] = None,
                   sum_duplicates: bool = True) -> "SnapshotGraph":
        """Build a snapshot from (u, v[, w]) tuples.

        Duplicate undirected edges have their weights summed. Self-loops are
        rejected. `nodes` may list extra isolated nodes; `labels` maps
        external id -> community id and must cover every node when given.
        """
        ids = set(nodes) if nodes else set()
        acc: dict = {}
        for e in edge_list:
            if len(e) == 2:
                u, v, w = e[0], e[1], 1.0
            else:
                u, v, w = e[0], e[1], float(e[2])
            if u == v:
                raise GraphValidationError(f"self-loop on node {u!r}")
            if w < 0:
                raise GraphValidationError(f"negative weight on edge ({u!r}, {v!r})")
            ids.add(u)
            ids.add(v)
            key = (u, v) if str(u) <= str(v) else (v, u)
            if key in acc:
                if not sum_duplicates:
                    raise GraphValidationError(f"duplicate edge {key!r}")
                acc[key] += w
            else:
                acc[key] = w
        node_ids = tuple(_sort_ids(ids))
        index = {u: i for i, u in enumerate(node_ids)}
        n = len(node_ids)
        w = np.zeros((n, n), dtype=np.float64)
        for (u, v), wt in acc.items():
            i, j = index[u], index[v]
            w[i, j] += wt
            w[j, i] += wt
        lab = None
        if labels is not None:
            missing = [u for u in node_ids if u not in labels]
            if missing:
                raise GraphValidationError(
                    f"labels missing for nodes {missing[:5]!r}")
            lab = np.asarray([labels[u] for u in node_ids])
        return SnapshotGraph(node_ids=node_ids, weights=w, labels=lab)


@dataclass(frozen=True)
class DynamicGraph:
    """Ordered sequence of snapshots; index t runs from 0 to num_steps."""

    snapshots: tuple

    def __post_init__(self):
        if len(self.snapshots) < 1:
            raise GraphValidationError("a dynamic graph needs >= 1 snapshot")
        object.__setattr__(self, "snapshots", tuple(self.snapshots))

    def __len__(self) -> int:
        return len(self.snapshots)

    def __getitem__(self, t: int) -> SnapshotGraph:
        return self.snapshots[t]

    @property
    def num_steps(self) -> int:
        """Last time index; snapshots are indexed 0 .. num_steps."""
        return len(self.snapshots) - 1


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetrically normalized adjacency D^{-1/2} (A + I) D^{-1/2}."""

    matrix: np.ndarray


def normalized_adjacency(g: SnapshotGraph) -> NormalizedAdjacency:
    if g.num_nodes == 0:
        raise EmptyGraphError("cannot normalize an empty graph")
    a = g.weights + np.eye(g.num_nodes)
    d = a.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return NormalizedAdjacency(matrix=a * inv_sqrt[:, None] * inv_sqrt[None, :])


def total_edge_weight(g: SnapshotGraph) -> float:
    """Sum over the full symmetric matrix: each undirected edge counts twice.

    This double-count convention is shared with the community-network
    normalization so the normalized community weights are convention-free.
    """
    return float(g.weights.sum())


# ---------------------------------------------------------------------------
# Snapshot file format: snapshot_<t>.tsv with "u v [w]" lines ('#' comments),
# optional labels_<t>.tsv with "u label" lines.
# ---------------------------------------------------------------------------

def _read_edge_file(path: str):
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise GraphValidationError(
                    f"{path}:{lineno}: expected 'u v [w]', got {line!r}")
            u, v = _parse_id(parts[0]), _parse_id(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
            edges.append((u, v, w))
    return edges


def _read_label_file(path: str) -> dict:
    labels = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphValidationError(
                    f"{path}:{lineno}: expected 'u label', got {line!r}")
            labels[_parse_id(parts[0])] = _parse_id(parts[1])
    return labels


def load_dynamic_graph(directory: str) -> DynamicGraph:
    """Load snapshot_<t>.tsv (+ optional labels_<t>.tsv) for contiguous t.

    Raises SnapshotSequenceError when t has gaps or no snapshot exists,
    EmptyGraphError for an empty snapshot file, GraphValidationError for
    malformed lines, negative weights or self-loops.
    """
    indices = []
    for name in os.listdir(directory):
        m = re.match(r"^snapshot_(\d+)\.tsv$", name)
        if m:
            indices.append(int(m.group(1)))
    if not indices:
        raise SnapshotSequenceError(f"no snapshot_<t>.tsv files in {directory}")
    indices.sort()
    if indices[0] != 0 or indices != list(range(len(indices))):
        raise SnapshotSequenceError(
            f"snapshot indices {indices} are not contiguous from 0")
    snaps = []
    for t in indices:
        edge_path = os.path.join(directory, f"snapshot_{t}.tsv")
        edges = _read_edge_file(edge_path)
        if not edges:
            raise EmptyGraphError(f"{edge_path} contains no edges")
        label_path = os.path.join(directory, f"labels_{t}.tsv")
        labels = _read_label_file(label_path) if os.path.exists(label_path) else None
        snaps.append(SnapshotGraph.from_edges(edges, labels=labels))
    return DynamicGraph(snapshots=tuple(snaps))


def save_dynamic_graph(dg: DynamicGraph, directory: str) -> None:
    """Write snapshots (and labels when present) in the loadable format."""
    os.makedirs(directory, exist_ok=True)
    for t, g in enumerate(dg.snapshots):
        with open(os.path.join(directory, f"snapshot_{t}.tsv"), "w",
                  encoding="utf-8") as fh:
            for u, v, w in g.edges():
                fh.write(f"{u}\t{v}\t{float(w)!r}\n")
        if g.labels is not None:
            with open(os.path.join(directory, f"labels_{t}.tsv"), "w",
                      encoding="utf-8") as fh:
                for u, lab in zip(g.node_ids, g.labels):
                    fh.write(f"{u}\t{lab}\n")


# ---------------------------------------------------------------------------
# Synthetic scenario generation.
# ---------------------------------------------------------------------------

def gaussian_partition_graph(k: int, size_mean: float, size_std: float,
                             p_in: float, p_out: float, seed: int) -> SnapshotGraph:
    """Random partition graph: k clusters with normally distributed sizes.

    Cluster sizes are drawn from N(size_mean, size_std^2), rounded, floored
    at 2. Node pairs are connected with probability p_in inside a cluster and
    p_out across clusters; all edges have unit weight. Node labels record the
    generating cluster.
    """
    if k < 2:
        raise GraphValidationError("k must be >= 2")
    if size_mean < 2:
        raise GraphValidationError("size_mean must be >= 2")
    if not (0.0 <= p_out <= p_in <= 1.0):
        raise GraphValidationError("need 0 <= p_out <= p_in <= 1")
    rng = np.random.default_rng(seed)
    sizes = np.maximum(2, np.rint(rng.normal(size_mean, size_std, size=k))).astype(int)
    labels = np.repeat(np.arange(k), sizes)
    n = int(sizes.sum())
    w = np.zeros((n, n), dtype=np.float64)
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, p_in, p_out)
    hit = rng.random(iu.shape[0]) < prob
    w[iu[hit], ju[hit]] = 1.0
    w[ju[hit], iu[hit]] = 1.0
    return SnapshotGraph(node_ids=tuple(range(n)), weights=w, labels=labels)


def perturb_bridge(g: SnapshotGraph, c1, c2, p_add: float, seed: int) -> SnapshotGraph:
    """Copy g, adding each absent (u in c1, v in c2) edge with prob p_add."""
    if g.labels is None:
        raise GraphValidationError("perturb_bridge requires node labels")
    present = set(np.unique(g.labels).tolist())
    for c in (c1, c2):
        if c not in present:
            raise GraphValidationError(f"unknown community label {c!r}")
    if c1 == c2:
        raise GraphValidationError("bridge endpoints must be distinct labels")
    rng = np.random.default_rng(seed)
    w = g.weights.copy()
    idx1 = np.nonzero(g.labels == c1)[0]
    idx2 = np.nonzero(g.labels == c2)[0]
    for i in idx1:
        for j in idx2:
            if w[i, j] == 0.0 and rng.random() < p_add:
                w[i, j] = 1.0
                w[j, i] = 1.0
    return SnapshotGraph(node_ids=g.node_ids, weights=w, labels=g.labels)


def make_bridge_scenario(seed: int, k: int = 5, size_mean: float = 20.0,
                         size_std: float = 1.0, p_in: float = 0.5,
                         p_out: float = 0.001, p_add: float = 0.1,
                         bridge: tuple = (0, 1)) -> DynamicGraph:
    """Three-snapshot scenario: clean, bridge-perturbed, clean again.

    The middle snapshot receives extra edges between two clusters, standing
    in for a transient collaboration that a temporally consistent detector
    should smooth out.
    """
    base = gaussian_partition_graph(k, size_mean, size_std, p_in, p_out, seed)
    middle = perturb_bridge(base, bridge[0], bridge[1], p_add, seed + 1)
    return DynamicGraph(snapshots=(base, middle, base))
