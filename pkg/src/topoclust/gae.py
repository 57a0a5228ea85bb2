"""Graph auto-encoder: one linear graph-convolution layer + inner-product decoder.

Datasets are featureless, so the encoder input defaults to one-hot (identity)
features and the embedding is simply a mixed, re-weighted slice of the
normalized adjacency. The decoder scores node pairs with sigmoid inner
products and is trained against the binarized adjacency with a weighted
binary cross entropy (sparse graphs would otherwise collapse to the all-zero
predictor).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .graphs import EmptyGraphError, SnapshotGraph


@dataclass
class EncoderParams:
    """Trainable encoder weight, input_dim x embed_dim."""

    weight: np.ndarray

    @staticmethod
    def init(input_dim: int, embed_dim: int, seed: int) -> "EncoderParams":
        return EncoderParams(weight=ad.glorot_init(input_dim, embed_dim, seed))


def encode(a_hat: ad.DiffMatrix, features: Optional[ad.DiffMatrix],
           weight: ad.DiffMatrix) -> ad.DiffMatrix:
    """Z = A_hat X W; features=None means identity X (skipped outright)."""
    if features is None:
        return ad.matmul(a_hat, weight)
    return ad.matmul(ad.matmul(a_hat, features), weight)


def decode(z: ad.DiffMatrix) -> ad.DiffMatrix:
    """Pairwise link scores sigmoid(Z Z^T); symmetric, entries in (0, 1)."""
    return ad.sigmoid(ad.matmul(z, ad.transpose(z)))


def positive_class_weight(g: SnapshotGraph) -> float:
    """(n^2 - #positives) / #positives over the binarized adjacency."""
    n = g.num_nodes
    pos = int(np.count_nonzero(g.weights))
    if pos == 0:
        raise EmptyGraphError("reconstruction target has no edges")
    return (n * n - pos) / pos


def reconstruction_loss(g: SnapshotGraph, z: ad.DiffMatrix) -> ad.DiffMatrix:
    """Weighted mean BCE between the binarized adjacency and decode(z)."""
    target = ad.constant((g.weights > 0).astype(np.float64))
    return ad.weighted_bce_loss(decode(z), target, positive_class_weight(g))


def export_embedding(path: str, g: SnapshotGraph, z: np.ndarray) -> None:
    """One row per node: external_id followed by the embedding coordinates."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, u in enumerate(g.node_ids):
            coords = " ".join(repr(float(v)) for v in z[i])
            fh.write(f"{u} {coords}\n")
