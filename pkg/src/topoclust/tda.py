"""Weight-rank clique filtration and persistent homology of community networks.

Edges enter a descending-weight filtration: level 1 holds the largest
distinct weight, level 2 the next, and so on; a simplex enters at the level
of its minimum-weight edge. Simplices are capped at dimension 2 (vertices,
edges, triangles) because only the dimension-0 and dimension-1 diagrams are
consumed downstream.

Diagram coordinates are re-oriented so birth <= death and live in [0, 1]:
a vertex sits at 0.0, a simplex entering with weight w sits at
1 - w / weight_scale, and essential deaths are capped at 1.0. Community
networks are already normalized to [0, 1] weights, so they use
weight_scale = 1 and diagrams from different snapshots share a scale. The
coordinates stay affine in the edge weights, which is what lets a loss on
diagram points push back on the community network.

Persistence is computed by standard GF(2) boundary-matrix column reduction
over a strict simplex order (level, dimension, vertex tuple); dimension-0
pairing therefore follows the elder rule. Each pair keeps its creator and
destroyer simplices and the community-graph edge they map back to (the
inverse map used for gradient routing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np


class FiltrationError(Exception):
    """Simplex order violates the face-before-coface requirement."""


@dataclass(frozen=True)
class Simplex:
    """A vertex, edge or triangle with its entry level and weight."""

    vertices: tuple
    level: int
    weight: float  # inf for vertices, min face weight for triangles

    @property
    def dim(self) -> int:
        return len(self.vertices) - 1

    def order_key(self):
        return (self.level, self.dim, self.vertices)


@dataclass
class Filtration:
    """Strictly ordered simplices of a weight-rank clique filtration."""

    vertices: tuple
    simplices: list  # all simplices, sorted by order_key
    level_weights: tuple  # distinct edge weights, strictly descending
    weight_scale: float

    @property
    def num_levels(self) -> int:
        return len(self.level_weights)

    def coordinate(self, s: Simplex) -> float:
        """Oriented filtration coordinate in [0, 1]; vertices map to 0."""
        if s.dim == 0:
            return 0.0
        return 1.0 - s.weight / self.weight_scale

    def validate(self) -> None:
        position = {s.vertices: i for i, s in enumerate(self.simplices)}
        keys = [s.order_key() for s in self.simplices]
        if keys != sorted(keys):
            raise FiltrationError("simplices are not in filtration order")
        for i, s in enumerate(self.simplices):
            for f in _faces(s.vertices):
                if f not in position or position[f] >= i:
                    raise FiltrationError(
                        f"face {f} of {s.vertices} missing or out of order")


def _faces(verts: tuple) -> list:
    if len(verts) <= 1:
        return []
    return [tuple(v for k, v in enumerate(verts) if k != i)
            for i in range(len(verts))]


def wrcf_filtration(source, weight_scale: Optional[float] = None) -> Filtration:
    """Build the filtration of a community network or raw weight matrix.

    `source` is either a CommunityNetwork (active communities become the
    vertex set, off-diagonal entries the edges, scale fixed at 1) or a
    symmetric non-negative matrix (all indices are vertices; scale defaults
    to max(1, largest weight)). Zero-weight pairs never enter.
    """
    from .community import CommunityNetwork  # local import, avoids a cycle

    if isinstance(source, CommunityNetwork):
        weights = source.values
        verts = source.active_communities
        if weight_scale is None:
            weight_scale = 1.0
    else:
        weights = np.asarray(source, dtype=np.float64)
        verts = tuple(range(weights.shape[0]))
    if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
        raise ValueError(f"expected a square matrix, got {weights.shape}")
    if not np.allclose(weights, weights.T):
        raise ValueError("weight matrix must be symmetric")

    edges = {}
    for a in range(len(verts)):
        for b in range(a + 1, len(verts)):
            u, v = verts[a], verts[b]
            w = float(weights[u, v])
            if w > 0.0:
                edges[(u, v)] = w
    level_weights = tuple(sorted(set(edges.values()), reverse=True))
    if weight_scale is None:
        weight_scale = max(1.0, level_weights[0]) if level_weights else 1.0
    if level_weights and level_weights[0] > weight_scale:
        raise ValueError(
            f"weight {level_weights[0]} exceeds scale {weight_scale}")
    level_of = {w: i + 1 for i, w in enumerate(level_weights)}

    simplices = [Simplex(vertices=(v,), level=0, weight=math.inf) for v in verts]
    for (u, v), w in edges.items():
        simplices.append(Simplex(vertices=(u, v), level=level_of[w], weight=w))
    # Triangles enter with their minimum-weight (maximum-level) edge; with
    # the dimension cap at 2 they are exactly the 2-faces of every maximal
    # clique of the final threshold graph.
    vs = sorted(verts)
    for a in range(len(vs)):
        for b in range(a + 1, len(vs)):
            if (vs[a], vs[b]) not in edges:
                continue
            for c in range(b + 1, len(vs)):
                e2, e3 = (vs[a], vs[c]), (vs[b], vs[c])
                if e2 in edges and e3 in edges:
                    w = min(edges[(vs[a], vs[b])], edges[e2], edges[e3])
                    simplices.append(Simplex(
                        vertices=(vs[a], vs[b], vs[c]),
                        level=level_of[w], weight=w))
    simplices.sort(key=Simplex.order_key)
    filt = Filtration(vertices=tuple(verts), simplices=simplices,
                      level_weights=level_weights,
                      weight_scale=float(weight_scale))
    filt.validate()
    return filt


# ---------------------------------------------------------------------------
# Boundary matrix and reduction (GF(2), columns as int bitsets).
# ---------------------------------------------------------------------------

class BoundaryMatrix:
    """GF(2) boundary columns in filtration order, with column reduction."""

    def __init__(self, filtration: Filtration):
        self.simplices = filtration.simplices
        position = {}
        self.columns: list[int] = []
        for i, s in enumerate(self.simplices):
            col = 0
            for f in _faces(s.vertices):
                if f not in position:
                    raise FiltrationError(f"face {f} of {s.vertices} missing")
                col ^= 1 << position[f]
            position[s.vertices] = i
            self.columns.append(col)

    def reduce(self):
        """Standard left-to-right reduction.

        Returns (pairs, positives): pairs as (creator index, destroyer
        index), positives as the set of indices whose columns reduced to
        zero (class creators).
        """
        reduced: list[int] = []
        pivot_of: dict[int, int] = {}
        pairs = []
        positives = set()
        for j, col in enumerate(self.columns):
            while col:
                low = col.bit_length() - 1
                if low not in pivot_of:
                    break
                col ^= reduced[pivot_of[low]]
            reduced.append(col)
            if col == 0:
                positives.add(j)
            else:
                low = col.bit_length() - 1
                pivot_of[low] = j
                pairs.append((low, j))
        return pairs, positives


@dataclass
class PersistencePair:
    """One diagram point with its creator/destroyer attribution."""

    dim: int
    creator: Simplex
    destroyer: Optional[Simplex]
    birth: float  # oriented coordinate in [0, 1]
    death: float  # oriented coordinate; essential classes hold the cap
    birth_edge: Optional[tuple]  # None when the creator is a vertex
    death_edge: Optional[tuple]  # attributed edge; None for essential pairs
    is_global_essential: bool = False

    @property
    def essential(self) -> bool:
        return self.destroyer is None

    @property
    def birth_level(self) -> int:
        return self.creator.level

    @property
    def death_level(self) -> Optional[int]:
        return None if self.destroyer is None else self.destroyer.level

    @property
    def birth_value(self) -> float:
        """Birth in raw weight units (0 for classes born with the vertices)."""
        return 0.0 if self.creator.dim == 0 else self.creator.weight

    @property
    def death_value(self) -> Optional[float]:
        return None if self.destroyer is None else self.destroyer.weight

    @property
    def persistence(self) -> float:
        return self.death - self.birth


@dataclass
class PersistenceDiagram:
    """Pairs per homology dimension plus the filtration extent (cap)."""

    pairs_by_dim: dict
    extent: float = 1.0
    weight_scale: float = 1.0

    def pairs(self, dim: int) -> list:
        return self.pairs_by_dim.get(dim, [])

    def points(self, dim: int, exclude_global_essential: bool = True) -> np.ndarray:
        """(n, 2) birth/death coordinates for one dimension.

        The single oldest essential component exists in every diagram and
        carries no discriminative signal, so comparisons drop it by default.
        """
        pts = [(p.birth, p.death) for p in self.pairs(dim)
               if not (exclude_global_essential and p.is_global_essential)]
        return np.asarray(pts, dtype=np.float64).reshape(-1, 2)

    def comparison_pairs(self, dim: int, exclude_global_essential: bool = True) -> list:
        return [p for p in self.pairs(dim)
                if not (exclude_global_essential and p.is_global_essential)]


def _attributed_death_edge(destroyer: Simplex, edge_lookup: dict) -> tuple:
    """The edge a death maps back to: the destroyer's last-entering face."""
    if destroyer.dim == 1:
        return destroyer.vertices
    faces = _faces(destroyer.vertices)
    return max(faces, key=lambda f: edge_lookup[f].order_key())


def compute_persistence(filtration: Filtration) -> PersistenceDiagram:
    """Diagram for dimensions 0 and 1 with creator/destroyer tracking.

    Zero-persistence pairs (birth and death at the same level) are dropped.
    Essential deaths are capped at the filtration extent 1.0.
    """
    simplices = filtration.simplices
    pairs_idx, positives = BoundaryMatrix(filtration).reduce()
    edge_lookup = {s.vertices: s for s in simplices if s.dim == 1}

    by_dim: dict[int, list[PersistencePair]] = {0: [], 1: []}
    killed = set()
    for i, j in pairs_idx:
        creator, destroyer = simplices[i], simplices[j]
        killed.add(i)
        if creator.dim > 1:
            continue
        if creator.level == destroyer.level:
            continue
        by_dim[creator.dim].append(PersistencePair(
            dim=creator.dim, creator=creator, destroyer=destroyer,
            birth=filtration.coordinate(creator),
            death=filtration.coordinate(destroyer),
            birth_edge=None if creator.dim == 0 else creator.vertices,
            death_edge=_attributed_death_edge(destroyer, edge_lookup)))
    for j in sorted(positives - killed):
        creator = simplices[j]
        if creator.dim > 1:
            continue
        by_dim[creator.dim].append(PersistencePair(
            dim=creator.dim, creator=creator, destroyer=None,
            birth=filtration.coordinate(creator), death=1.0,
            birth_edge=None if creator.dim == 0 else creator.vertices,
            death_edge=None))
    essential_h0 = [p for p in by_dim[0] if p.essential]
    if essential_h0:
        oldest = min(essential_h0, key=lambda p: p.creator.order_key())
        oldest.is_global_essential = True
    for dim in by_dim:
        by_dim[dim].sort(key=lambda p: (p.creator.order_key(), p.birth))
    return PersistenceDiagram(pairs_by_dim=by_dim, extent=1.0,
                              weight_scale=filtration.weight_scale)


def inverse_map(diagram: PersistenceDiagram) -> list:
    """Per-pair attribution records: (pair, birth edge, death edge).

    Births of dimension-1 classes map to their creating edge; deaths map to
    the merging edge (dimension 0) or to the minimum-weight edge of the
    filling triangle (dimension 1). Essential deaths have no edge.
    """
    records = []
    for dim in sorted(diagram.pairs_by_dim):
        for p in diagram.pairs(dim):
            records.append((p, p.birth_edge, p.death_edge))
    return records


def export_diagram(path: str, diagram: PersistenceDiagram, dim: int) -> None:
    """Lines 'dim birth death creator destroyer'; essential deaths as inf."""

    def fmt_edge(edge, creator=None):
        if edge is not None:
            return f"{edge[0]}-{edge[1]}"
        if creator is not None:
            return f"v{creator.vertices[0]}"
        return "-"

    with open(path, "w", encoding="utf-8") as fh:
        for p in diagram.pairs(dim):
            death = "inf" if p.essential else repr(float(p.death))
            fh.write(f"{p.dim} {float(p.birth)!r} {death} "
                     f"{fmt_edge(p.birth_edge, p.creator)} "
                     f"{fmt_edge(p.death_edge)}\n")


# ---------------------------------------------------------------------------
# Brute-force persistent Betti numbers (test oracle).
# ---------------------------------------------------------------------------

def _rank_gf2(rows: Iterable[int]) -> int:
    basis: dict[int, int] = {}
    rank = 0
    for v in rows:
        while v:
            b = v.bit_length() - 1
            if b not in basis:
                basis[b] = v
                rank += 1
                break
            v ^= basis[b]
    return rank


def _cycle_basis(filtration: Filtration, p: int, level: int) -> list:
    """Basis of Z_p at `level`, as bitsets over global p-simplex positions."""
    p_simplices = [s for s in filtration.simplices if s.dim == p]
    pos_global = {s.vertices: k for k, s in enumerate(p_simplices)}
    if p == 0:
        return [1 << pos_global[s.vertices] for s in p_simplices
                if s.level <= level]
    faces_pos = {s.vertices: k for k, s in enumerate(
        [t for t in filtration.simplices if t.dim == p - 1])}
    pivots: dict[int, tuple] = {}
    kernel = []
    for s in p_simplices:
        if s.level > level:
            continue
        col = 0
        for f in _faces(s.vertices):
            col ^= 1 << faces_pos[f]
        combo = 1 << pos_global[s.vertices]
        while col:
            b = col.bit_length() - 1
            if b not in pivots:
                pivots[b] = (col, combo)
                break
            pc, pcombo = pivots[b]
            col ^= pc
            combo ^= pcombo
        if col == 0:
            kernel.append(combo)
    return kernel


def _boundary_space(filtration: Filtration, p: int, level: int) -> list:
    """Spanning set of B_p at `level` over global p-simplex positions."""
    p_pos = {s.vertices: k for k, s in enumerate(
        [t for t in filtration.simplices if t.dim == p])}
    spans = []
    for s in filtration.simplices:
        if s.dim != p + 1 or s.level > level:
            continue
        col = 0
        for f in _faces(s.vertices):
            col ^= 1 << p_pos[f]
        spans.append(col)
    return spans


def persistent_betti_oracle(filtration: Filtration, i: int, j: int, p: int) -> int:
    """beta_p^{i,j}: classes alive at level i that survive to level j.

    Independent rank computation; beta = rank(Z union B) - rank(B) with
    Z the cycle space at level i and B the boundary space at level j.
    """
    if not (0 <= i <= j <= filtration.num_levels):
        raise ValueError(f"need 0 <= i <= j <= {filtration.num_levels}")
    if p not in (0, 1):
        raise ValueError("oracle supports dimensions 0 and 1")
    z = _cycle_basis(filtration, p, i)
    b = _boundary_space(filtration, p, j)
    return _rank_gf2(z + b) - _rank_gf2(b)


def diagram_from_betti(filtration: Filtration, p: int) -> dict:
    """Reconstruct the level-indexed diagram multiset from Betti numbers.

    Returns {(birth_level, death_level or None): multiplicity} using
    mu_p^{i,j} = (beta^{i,j-1} - beta^{i,j}) - (beta^{i-1,j-1} - beta^{i-1,j})
    for finite pairs and mu_p^{i,inf} = beta^{i,m} - beta^{i-1,m} for
    essential ones (beta^{-1,.} = 0).
    """
    m = filtration.num_levels
    beta = {}
    for i in range(m + 1):
        for j in range(i, m + 1):
            beta[(i, j)] = persistent_betti_oracle(filtration, i, j, p)

    def b(i, j):
        return 0 if i < 0 else beta[(i, j)]

    multiset: dict = {}
    for i in range(m + 1):
        for j in range(i + 1, m + 1):
            mu = (b(i, j - 1) - b(i, j)) - (b(i - 1, j - 1) - b(i - 1, j))
            if mu:
                multiset[(i, j)] = multiset.get((i, j), 0) + mu
        mu_inf = b(i, m) - b(i - 1, m)
        if mu_inf:
            multiset[(i, None)] = multiset.get((i, None), 0) + mu_inf
    return multiset


def diagram_level_multiset(diagram: PersistenceDiagram, p: int) -> dict:
    """{(birth_level, death_level or None): count} from computed pairs."""
    out: dict = {}
    for pair in diagram.pairs(p):
        key = (pair.birth_level, pair.death_level)
        out[key] = out.get(key, 0) + 1
    return out
