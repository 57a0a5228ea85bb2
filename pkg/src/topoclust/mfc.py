"""Matrix factorization clustering trained jointly with the auto-encoder.

The soft assignment is the row-normalized least-squares coefficient matrix
Q = g(Z C+), where C holds trainable cluster centers and C+ is the damped
right pseudo-inverse. Training alternates the closed-form Q (forward pass)
with gradient updates of the encoder and C (backward pass) on the composite
loss  reconstruction + alpha * assignment-MSE.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import gae
from .graphs import SnapshotGraph, normalized_adjacency
from .metrics import kmeans


class TrainingDivergedError(Exception):
    """Loss became non-finite; message carries the epoch index."""


def compute_assignment(z: ad.DiffMatrix, c: ad.DiffMatrix,
                       lam: float = 1e-6) -> ad.DiffMatrix:
    """Q = row-minmax(Z C+), n x K, differentiable end-to-end."""
    pinv = ad.regularized_pinv(c, lam)
    if z.cols != pinv.rows:
        raise ad.ShapeError(f"embedding dim {z.cols} vs centers dim {pinv.rows}")
    return ad.row_minmax(ad.matmul(z, pinv))


def clustering_loss(z: ad.DiffMatrix, q: ad.DiffMatrix,
                    c: ad.DiffMatrix) -> ad.DiffMatrix:
    """MSE between the embedding and its reconstruction Q C from the centers."""
    return ad.mse_loss(z, ad.matmul(q, c))


def hard_labels(q: np.ndarray) -> np.ndarray:
    """Per-row argmax; ties resolve to the lowest column index."""
    q = np.asarray(q)
    return q.argmax(axis=1)


@dataclass
class TrainedSnapshot:
    """Stage-1 output for one snapshot (plain arrays, tape-free)."""

    encoder_weight: np.ndarray
    centers: np.ndarray
    embedding: np.ndarray
    assignment: np.ndarray
    loss_trace: list = field(default_factory=list)

    @property
    def labels(self) -> np.ndarray:
        return hard_labels(self.assignment)


def _forward_embedding(a_hat_const, weight_node):
    return gae.encode(a_hat_const, None, weight_node)


def train_mfc(g: SnapshotGraph, k: int, *, alpha: float = 10.0,
              epochs: int = 500, warmup_epochs: int = 200, lr: float = 1e-3,
              embed_dim: int = 30, lam: float = 1e-6, seed: int = 0,
              center_init: str = "kmeans", loss_tol: float = 1e-6,
              loss_patience: int = 10) -> TrainedSnapshot:
    """Train GAE + clustering head on one snapshot.

    Phase one minimizes the reconstruction loss alone for `warmup_epochs`;
    the remaining epochs minimize reconstruction + alpha * clustering loss.
    Stops early when the relative total-loss change over `loss_patience`
    epochs falls below `loss_tol`.

    center_init picks how C starts: "kmeans" (default) seeds the centers
    with single-init k-means on the current embedding, which keeps cleanly
    separable structure (disjoint components) exactly recoverable; "glorot"
    treats the centers as just another network weight. A long warm-up
    before seeding makes the head start at the settled embedding's own
    cluster structure, which is very hard to dislodge afterwards.
    """
    if embed_dim < k:
        raise ad.RankError(
            f"embedding dim {embed_dim} must be >= cluster count {k}")
    if center_init not in ("glorot", "kmeans"):
        raise ValueError(f"unknown center_init {center_init!r}")
    n = g.num_nodes
    a_hat = normalized_adjacency(g).matrix
    weight = ad.glorot_init(n, embed_dim, seed)
    warmup_epochs = min(warmup_epochs, epochs)
    trace: list = []

    opt_warm = ad.Adam(lr=lr)
    for epoch in range(warmup_epochs):
        tape = ad.GradientTape()
        w_node = tape.parameter(weight)
        z = _forward_embedding(ad.constant(a_hat), w_node)
        loss = gae.reconstruction_loss(g, z)
        _check_finite(loss, epoch, "warmup")
        tape.backward(loss, [w_node])
        (weight,) = opt_warm.step([weight], [w_node.grad])
        trace.append({"phase": "warmup", "epoch": epoch,
                      "l_gae": loss.item(), "l_c": 0.0,
                      "total": loss.item()})

    if center_init == "kmeans":
        z_np = a_hat @ weight
        _, centers = kmeans(z_np, k, seed=seed, return_centers=True)
    else:
        centers = ad.glorot_init(k, embed_dim, seed + 7919)

    opt = ad.Adam(lr=lr)
    history: list[float] = []
    for epoch in range(epochs - warmup_epochs):
        tape = ad.GradientTape()
        w_node = tape.parameter(weight)
        c_node = tape.parameter(centers)
        z = _forward_embedding(ad.constant(a_hat), w_node)
        q = compute_assignment(z, c_node, lam)
        l_gae = gae.reconstruction_loss(g, z)
        l_c = clustering_loss(z, q, c_node)
        total = ad.add(l_gae, ad.scale(l_c, alpha))
        _check_finite(total, epoch, "joint")
        tape.backward(total, [w_node, c_node])
        weight, centers = opt.step([weight, centers],
                                   [w_node.grad, c_node.grad])
        trace.append({"phase": "joint", "epoch": epoch,
                      "l_gae": l_gae.item(), "l_c": l_c.item(),
                      "total": total.item()})
        history.append(total.item())
        if _converged(history, loss_tol, loss_patience):
            break

    z_np = a_hat @ weight
    q_final = compute_assignment(ad.constant(z_np), ad.constant(centers), lam)
    return TrainedSnapshot(encoder_weight=weight, centers=centers,
                           embedding=z_np, assignment=q_final.value.copy(),
                           loss_trace=trace)


def _check_finite(loss: ad.DiffMatrix, epoch: int, phase: str) -> None:
    v = loss.item()
    if not np.isfinite(v):
        raise TrainingDivergedError(
            f"loss {v} at {phase} epoch {epoch}; lower the learning rate")


def _converged(history, tol: float, patience: int) -> bool:
    if len(history) <= patience:
        return False
    prev, cur = history[-1 - patience], history[-1]
    return abs(cur - prev) / max(abs(prev), 1e-12) < tol
