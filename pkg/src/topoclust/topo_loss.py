"""Wasserstein distance between persistence diagrams and the temporal loss.

The distance solves the diagonal-augmented assignment problem exactly:
every diagram point may match a point of the other diagram or its own
diagonal projection, diagonal-to-diagonal matches are free, and the optimal
assignment comes from scipy's Hungarian solver. Defaults are p = 1 (earth
mover) with the infinity-norm ground metric.

The temporal loss sums, over interior snapshots t, the distances between
the diagrams at t and at both neighbors, in dimensions 0 and 1; adjacent
pairs with two interior endpoints therefore contribute twice, exactly as
the sliding window is written. Gradients are taken with the matching and
the persistence pairing frozen (both are locally constant almost
everywhere) and routed onto community-network edges through each matched
point's creator/destroyer attribution.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .tda import PersistenceDiagram


class DimensionMismatchError(Exception):
    """Wasserstein distance between diagrams of different dimensions."""


@dataclass
class DiagramSlice:
    """Single-dimension view of a diagram: points plus pair attributions."""

    dim: int
    points: np.ndarray  # (n, 2) birth/death coordinates
    pairs: Optional[list] = None  # aligned PersistencePair refs, if available
    weight_scale: float = 1.0

    @staticmethod
    def from_points(dim: int, points) -> "DiagramSlice":
        return DiagramSlice(dim=dim,
                            points=np.asarray(points, dtype=np.float64).reshape(-1, 2))


def slice_of(diagram: PersistenceDiagram, dim: int,
             exclude_global_essential: bool = True) -> DiagramSlice:
    pairs = diagram.comparison_pairs(dim, exclude_global_essential)
    return DiagramSlice(dim=dim,
                        points=diagram.points(dim, exclude_global_essential),
                        pairs=pairs, weight_scale=diagram.weight_scale)


@dataclass
class DiagramMatching:
    """Optimal augmented matching; index None stands for the diagonal."""

    pairs: list  # (i or None, j or None)
    total_cost: float  # sum of ||x - gamma(x)||_q^p over the assignment
    p: float
    q: float


def _ground_distance(x: np.ndarray, y: np.ndarray, q: float) -> np.ndarray:
    diff = np.abs(x[:, None, :] - y[None, :, :])
    if math.isinf(q):
        return diff.max(axis=2)
    return (diff ** q).sum(axis=2) ** (1.0 / q)


def _diagonal_cost(points: np.ndarray, q: float) -> np.ndarray:
    gap = np.abs(points[:, 1] - points[:, 0])
    if math.isinf(q):
        return gap / 2.0
    return gap * 2.0 ** (1.0 / q - 1.0)


def wasserstein_distance(d1: DiagramSlice, d2: DiagramSlice,
                         p: float = 1.0, q: float = math.inf):
    """Exact p-Wasserstein distance with the q-norm ground metric.

    Returns (distance, DiagramMatching). Both slices must hold the same
    homology dimension. Arguments are ordered canonically before solving,
    so the distance is exactly symmetric even when several assignments are
    optimal up to float rounding.
    """
    if d1.dim != d2.dim:
        raise DimensionMismatchError(f"dimension {d1.dim} vs {d2.dim}")
    if (d2.points.shape[0], d2.points.tobytes()) < \
            (d1.points.shape[0], d1.points.tobytes()):
        dist, matching = wasserstein_distance(d2, d1, p=p, q=q)
        flipped = [(j, i) for i, j in matching.pairs]
        return dist, DiagramMatching(pairs=flipped,
                                     total_cost=matching.total_cost, p=p, q=q)
    n1, n2 = d1.points.shape[0], d2.points.shape[0]
    if n1 == 0 and n2 == 0:
        return 0.0, DiagramMatching(pairs=[], total_cost=0.0, p=p, q=q)
    size = n1 + n2
    cost = np.zeros((size, size))
    if n1 and n2:
        cost[:n1, :n2] = _ground_distance(d1.points, d2.points, q) ** p
    diag1 = _diagonal_cost(d1.points, q) ** p
    diag2 = _diagonal_cost(d2.points, q) ** p
    big = cost[:n1, :n2].sum() + diag1.sum() + diag2.sum() + 1.0
    if n1:
        block = np.full((n1, n1), big)
        np.fill_diagonal(block, diag1)
        cost[:n1, n2:] = block
    if n2:
        block = np.full((n2, n2), big)
        np.fill_diagonal(block, diag2)
        cost[n1:, :n2] = block
    rows, cols = linear_sum_assignment(cost)
    matches = []
    selected = []
    for r, c in zip(rows, cols):
        if r < n1 and c < n2:
            matches.append((int(r), int(c)))
            selected.append(cost[r, c])
        elif r < n1:
            matches.append((int(r), None))
            selected.append(cost[r, c])
        elif c < n2:
            matches.append((None, int(c)))
            selected.append(cost[r, c])
    # Summing in sorted order makes the value independent of the assignment
    # permutation, so the distance is exactly symmetric in its arguments.
    total = float(np.sum(np.sort(selected))) if selected else 0.0
    distance = total ** (1.0 / p) if p != 1.0 else total
    return distance, DiagramMatching(pairs=matches, total_cost=total, p=p, q=q)


# ---------------------------------------------------------------------------
# Sliding-window temporal loss (per-snapshot diagrams, both dimensions).
# ---------------------------------------------------------------------------

@dataclass
class TopoTerm:
    t: int
    neighbor: int
    dim: int
    distance: float
    matching: DiagramMatching
    slice_t: DiagramSlice
    slice_neighbor: DiagramSlice


@dataclass
class TopoLossReport:
    total: float
    terms: list = field(default_factory=list)

    def terms_for(self, t: int) -> list:
        return [term for term in self.terms if term.t == t]


def interior_indices(num_snapshots: int) -> range:
    """Snapshots with both neighbors present."""
    return range(1, num_snapshots - 1)


def topo_loss(diagrams: Sequence[PersistenceDiagram], p: float = 1.0,
              q: float = math.inf, dims=(0, 1),
              exclude_global_essential: bool = True) -> TopoLossReport:
    """Sum of diagram distances between every interior snapshot and its
    neighbors, as written: adjacent interior pairs count twice."""
    n = len(diagrams)
    if n < 3:
        warnings.warn("temporal loss needs at least 3 snapshots; returning 0")
        return TopoLossReport(total=0.0, terms=[])
    report = TopoLossReport(total=0.0)
    for t in interior_indices(n):
        for neighbor in (t - 1, t + 1):
            for dim in dims:
                s_t = slice_of(diagrams[t], dim, exclude_global_essential)
                s_n = slice_of(diagrams[neighbor], dim, exclude_global_essential)
                dist, matching = wasserstein_distance(s_t, s_n, p=p, q=q)
                report.terms.append(TopoTerm(
                    t=t, neighbor=neighbor, dim=dim, distance=dist,
                    matching=matching, slice_t=s_t, slice_neighbor=s_n))
                report.total += dist
    return report


def _matched_point_gradient(x: np.ndarray, y: Optional[np.ndarray],
                            q: float) -> tuple:
    """(d cost / d birth, d cost / d death) for one matched point of ours.

    y=None means the diagonal. Under the infinity norm the active coordinate
    carries the (sub)gradient; exact ties split it equally.
    """
    if not math.isinf(q):
        raise NotImplementedError("gradients implemented for q = inf only")
    if y is None:
        return -0.5, 0.5
    db, dd = x[0] - y[0], x[1] - y[1]
    if db == 0.0 and dd == 0.0:
        return 0.0, 0.0
    if abs(db) > abs(dd):
        return float(np.sign(db)), 0.0
    if abs(dd) > abs(db):
        return 0.0, float(np.sign(dd))
    return float(np.sign(db)) / 2.0, float(np.sign(dd)) / 2.0


def topo_gradient(report: TopoLossReport, t: int, k: int,
                  num_snapshots: Optional[int] = None) -> np.ndarray:
    """d(loss)/d(community matrix of snapshot t), matching frozen.

    Accumulates the matched-point subgradients onto the creator/destroyer
    edges of snapshot t's pairs, leaving the neighbor diagrams as constants.
    When `num_snapshots` is given, a term shared with an interior neighbor
    is counted twice, mirroring its second appearance in the full loss.
    Returns a K x K upper-triangular gradient on the community edge weights.
    """
    terms = report.terms_for(t)
    if not terms:
        return np.zeros((k, k))
    grad = np.zeros((k, k))
    for term in terms:
        if term.matching.p != 1.0:
            raise NotImplementedError("gradients implemented for p = 1 only")
        multiplicity = 1.0
        if num_snapshots is not None and term.neighbor in interior_indices(num_snapshots):
            multiplicity = 2.0
        slice_t = term.slice_t
        if slice_t.pairs is None:
            raise ValueError("gradient needs pair attributions on the slice")
        scale = slice_t.weight_scale
        for i, j in term.matching.pairs:
            if i is None:
                continue
            x = slice_t.points[i]
            y = None if j is None else term.slice_neighbor.points[j]
            gb, gd = _matched_point_gradient(x, y, term.matching.q)
            pair = slice_t.pairs[i]
            # coordinate = 1 - weight / scale, so d coord / d weight = -1/scale
            if gb != 0.0 and pair.birth_edge is not None:
                u, v = pair.birth_edge
                grad[u, v] += -multiplicity * gb / scale
            if gd != 0.0 and pair.death_edge is not None and not pair.essential:
                u, v = pair.death_edge
                grad[u, v] += -multiplicity * gd / scale
    return grad
