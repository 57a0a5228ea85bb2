"""Differentiable community-level network built from the soft assignment.

Pseudo-labels are the row argmaxes of the assignment matrix. Masking every
entry that is not its row's maximum gives the filtered assignment Q_hat;
the community network is then M = Q_hat^T W Q_hat normalized by the total
edge weight (symmetric double-count, matching graphs.total_edge_weight, so
the ratio is convention-independent). The argmax mask is a constant during
differentiation: gradients flow only through the retained assignment values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .graphs import EmptyGraphError, SnapshotGraph
from .mfc import hard_labels


@dataclass
class CommunityNetwork:
    """K x K symmetric non-negative community adjacency (normalized)."""

    matrix: ad.DiffMatrix
    active_communities: tuple

    @property
    def k(self) -> int:
        return self.matrix.rows

    @property
    def values(self) -> np.ndarray:
        return self.matrix.value


def filtered_assignment(q: ad.DiffMatrix):
    """(pseudo-labels, Q_hat) with Q_hat = Q masked to row maxima.

    The mask is built from the current values and enters the graph as a
    constant, so the argmax indicator itself contributes no gradient.
    """
    labels = hard_labels(q.value)
    mask = np.zeros_like(q.value)
    mask[np.arange(q.rows), labels] = 1.0
    q_hat = ad.multiply(q, ad.constant(mask))
    return labels, q_hat


def community_adjacency(q_hat: ad.DiffMatrix, g: SnapshotGraph) -> CommunityNetwork:
    """M = Q_hat^T W Q_hat / sum_ij W_ij, differentiable in Q_hat."""
    if q_hat.rows != g.num_nodes:
        raise ad.ShapeError(
            f"assignment rows {q_hat.rows} vs snapshot nodes {g.num_nodes}")
    total = g.weights.sum()
    if total <= 0.0:
        raise EmptyGraphError("community network of a zero-weight graph")
    w = ad.constant(g.weights)
    m = ad.scale(ad.matmul(ad.transpose(q_hat), ad.matmul(w, q_hat)), 1.0 / total)
    active = tuple(np.nonzero(q_hat.value.sum(axis=0) > 0)[0].tolist())
    return CommunityNetwork(matrix=m, active_communities=active)


def community_gradient(tape: ad.GradientTape, net: CommunityNetwork,
                       dl_dm: np.ndarray, parameters=()) -> None:
    """Backpropagate a loss gradient seeded at the community matrix.

    Runs the tape backward on <dl_dm, M>, which under a locally linear loss
    (the frozen-matching topological loss is affine in M) reproduces the
    chain rule dL/dQ_hat = W Q_hat (dl_dm + dl_dm^T) / sum W and continues
    into the embedding and encoder parameters.
    """
    seed = ad.constant(np.asarray(dl_dm, dtype=np.float64))
    if seed.shape != net.matrix.shape:
        raise ad.ShapeError(
            f"gradient seed {seed.shape} vs community matrix {net.matrix.shape}")
    proxy = ad.reduce_sum(ad.multiply(seed, net.matrix))
    tape.backward(proxy, parameters)


def export_community_network(path: str, net_values: np.ndarray) -> None:
    """Write K and the weighted upper triangle as 'k l weight' rows."""
    k = net_values.shape[0]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{k}\n")
        for i in range(k):
            for j in range(i + 1, k):
                if net_values[i, j] > 0:
                    fh.write(f"{i} {j} {float(net_values[i, j])!r}\n")
