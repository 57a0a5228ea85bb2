"""End-to-end training pipeline.

Stage 1 trains the auto-encoder + clustering head independently on every
snapshot (reconstruction warm-up, then the joint composite loss). Stage 2
adds the temporal topology term: each epoch recomputes all community
networks and their persistence diagrams, then sweeps the interior snapshots,
updating each against its neighbors' frozen diagrams. Boundary snapshots
are never updated directly; they act as targets.
"""

from __future__ import annotations

import copy
import json
import os
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import community, gae, mfc, tda, topo_loss
from .graphs import DynamicGraph, SnapshotGraph, normalized_adjacency
from .metrics import accuracy, ari, kmeans, modularity, nmi


class ConfigError(Exception):
    pass


class MissingArtifactError(Exception):
    pass


@dataclass
class PipelineConfig:
    k: int
    embed_dim: int = 30
    lr: float = 1e-3
    epochs_stage1: int = 500
    warmup_epochs: int = 200
    epochs_stage2: int = 500
    alpha_stage1: float = 10.0
    beta_stage1: float = 0.0
    alpha_stage2: float = 1.0
    beta_stage2: float = 10.0
    lambda_pinv: float = 1e-6
    seed: int = 0
    mode: str = "fixed"  # "fixed" (k-means on Z) or "varying" (argmax of Q)
    center_init: str = "kmeans"  # or "glorot"

    def validate(self) -> "PipelineConfig":
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if self.embed_dim < self.k:
            raise ConfigError(
                f"embed_dim {self.embed_dim} must be >= k {self.k} "
                "(the factorization has no solution otherwise)")
        if self.epochs_stage1 < 0 or self.epochs_stage2 < 0:
            raise ConfigError("epoch counts must be >= 0")
        if min(self.alpha_stage1, self.alpha_stage2,
               self.beta_stage1, self.beta_stage2) < 0:
            raise ConfigError("alpha and beta must be >= 0")
        if self.mode not in ("fixed", "varying"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.center_init not in ("glorot", "kmeans"):
            raise ConfigError(f"unknown center_init {self.center_init!r}")
        return self


def parse_config_file(path: str) -> dict:
    """Flat key=value overrides; '#' starts a comment."""
    out = {}
    fields = PipelineConfig.__dataclass_fields__
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in fields:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            typ = fields[key].type
            if typ == "int":
                out[key] = int(value)
            elif typ == "float":
                out[key] = float(value)
            else:
                out[key] = value
    return out


@dataclass
class SnapshotState:
    """Trained per-snapshot model plus everything derived from it."""

    encoder_weight: np.ndarray
    centers: np.ndarray
    embedding: np.ndarray
    assignment: np.ndarray
    labels: np.ndarray
    community_matrix: np.ndarray
    diagram: tda.PersistenceDiagram


@dataclass
class RunResult:
    config: PipelineConfig
    states: list
    losses: list = field(default_factory=list)
    topo_trace: list = field(default_factory=list)  # per-epoch distance terms
    stage: int = 1

    def diagrams(self) -> list:
        return [s.diagram for s in self.states]


def _forward_nodes(g: SnapshotGraph, a_hat: np.ndarray, w_node, c_node,
                   lam: float):
    """Shared forward graph: embedding, assignment, community network.

    The community network is built from the simplex projection of the
    assignment (rows renormalized to sum 1). Min-max rows pin their maxima
    to exactly 1, which would freeze the retained entries and leave the
    community weights piecewise constant in the parameters; the probability
    view keeps every retained entry differentiable, matching the
    products-of-assignment-probabilities definition of the edge weights.
    """
    z = gae.encode(ad.constant(a_hat), None, w_node)
    pinv = ad.regularized_pinv(c_node, lam)
    q = ad.row_minmax(ad.matmul(z, pinv))
    q_prob = ad.row_sum_normalize(q)
    labels, q_hat = community.filtered_assignment(q_prob)
    net = community.community_adjacency(q_hat, g)
    return z, q, labels, net


def _snapshot_state(g: SnapshotGraph, weight: np.ndarray, centers: np.ndarray,
                    cfg: PipelineConfig) -> SnapshotState:
    a_hat = normalized_adjacency(g).matrix
    z, q, labels, net = _forward_nodes(
        g, a_hat, ad.constant(weight), ad.constant(centers), cfg.lambda_pinv)
    filt = tda.wrcf_filtration(net)
    return SnapshotState(
        encoder_weight=weight, centers=centers, embedding=z.value.copy(),
        assignment=q.value.copy(), labels=labels,
        community_matrix=net.values.copy(),
        diagram=tda.compute_persistence(filt))


def stage1_train(dg: DynamicGraph, cfg: PipelineConfig) -> RunResult:
    """Independent per-snapshot training on reconstruction + clustering."""
    cfg.validate()
    states, losses = [], []
    for t, g in enumerate(dg.snapshots):
        trained = mfc.train_mfc(
            g, cfg.k, alpha=cfg.alpha_stage1, epochs=cfg.epochs_stage1,
            warmup_epochs=cfg.warmup_epochs, lr=cfg.lr,
            embed_dim=cfg.embed_dim, lam=cfg.lambda_pinv, seed=cfg.seed + t,
            center_init=cfg.center_init)
        states.append(_snapshot_state(g, trained.encoder_weight,
                                      trained.centers, cfg))
        for row in trained.loss_trace:
            losses.append({"stage": 1, "t": t, "phase": row["phase"],
                           "epoch": row["epoch"], "l_gae": row["l_gae"],
                           "l_c": row["l_c"], "l_topo": 0.0,
                           "total": row["total"]})
    return RunResult(config=cfg, states=states, losses=losses, stage=1)


def stage2_train(result: RunResult, dg: DynamicGraph,
                 cfg: Optional[PipelineConfig] = None) -> RunResult:
    """Topology-regularized refinement of the interior snapshots.

    Each epoch: recompute every community network and diagram, freeze them,
    then for each interior t take one step on
    l_gae + alpha * l_c + beta * <d l_topo / d M, M>, where the seed matrix
    comes from the frozen-matching inverse-map gradient. The linear term has
    the same local gradient as the topological loss itself.
    """
    cfg = (cfg or result.config).validate()
    n = len(dg.snapshots)
    states = copy.deepcopy(result.states)
    losses = list(result.losses)
    out = RunResult(config=cfg, states=states, losses=losses, stage=2)
    interior = list(topo_loss.interior_indices(n))
    if not interior:
        warnings.warn("fewer than 3 snapshots: stage 2 is a no-op")
        return out

    a_hats = [normalized_adjacency(g).matrix for g in dg.snapshots]
    optimizers = {t: ad.Adam(lr=cfg.lr) for t in interior}
    k = cfg.k
    for epoch in range(cfg.epochs_stage2):
        for t in range(n):
            states[t] = _snapshot_state(dg[t], states[t].encoder_weight,
                                        states[t].centers, cfg)
        report = topo_loss.topo_loss([s.diagram for s in states])
        for t in interior:
            for dim in (0, 1):
                w_prev = w_next = 0.0
                for term in report.terms_for(t):
                    if term.dim != dim:
                        continue
                    if term.neighbor < t:
                        w_prev = term.distance
                    else:
                        w_next = term.distance
                out.topo_trace.append({
                    "epoch": epoch, "t": t, "dim": dim, "w_prev": w_prev,
                    "w_next": w_next, "loss_term": w_prev + w_next})
            seed = topo_loss.topo_gradient(report, t, k, num_snapshots=n)
            local_topo = sum(
                term.distance * (2.0 if term.neighbor in interior else 1.0)
                for term in report.terms_for(t))
            tape = ad.GradientTape()
            w_node = tape.parameter(states[t].encoder_weight)
            c_node = tape.parameter(states[t].centers)
            z, q, _, net = _forward_nodes(dg[t], a_hats[t], w_node, c_node,
                                          cfg.lambda_pinv)
            l_gae = gae.reconstruction_loss(dg[t], z)
            l_c = mfc.clustering_loss(z, q, c_node)
            topo_proxy = ad.reduce_sum(
                ad.multiply(ad.constant(seed), net.matrix))
            total_node = ad.add(ad.add(l_gae, ad.scale(l_c, cfg.alpha_stage2)),
                                ad.scale(topo_proxy, cfg.beta_stage2))
            tape.backward(total_node, [w_node, c_node])
            new_w, new_c = optimizers[t].step(
                [states[t].encoder_weight, states[t].centers],
                [w_node.grad, c_node.grad])
            states[t].encoder_weight = new_w
            states[t].centers = new_c
            losses.append({
                "stage": 2, "t": t, "phase": "topo", "epoch": epoch,
                "l_gae": l_gae.item(), "l_c": l_c.item(),
                "l_topo": local_topo,
                "total": l_gae.item() + cfg.alpha_stage2 * l_c.item()
                + cfg.beta_stage2 * local_topo})
    for t in range(n):
        states[t] = _snapshot_state(dg[t], states[t].encoder_weight,
                                    states[t].centers, cfg)
    return out


# ---------------------------------------------------------------------------
# Evaluation and reports.
# ---------------------------------------------------------------------------

def evaluate(result: RunResult, dg: DynamicGraph,
             mode: Optional[str] = None) -> list:
    """Per-snapshot metric rows plus a final unweighted mean row.

    Fixed mode clusters the embedding with seeded k-means; varying mode uses
    the assignment argmax, letting empty clusters vanish. Snapshots without
    ground-truth labels get modularity only.
    """
    cfg = result.config
    mode = mode or cfg.mode
    rows = []
    for t, g in enumerate(dg.snapshots):
        state = result.states[t]
        if mode == "fixed":
            pred = kmeans(state.embedding, cfg.k, seed=cfg.seed + t)
        else:
            pred = state.labels
        row = {"t": t, "n": g.num_nodes,
               "acc": None, "nmi": None, "ari": None,
               "modularity": modularity(g, pred)}
        if g.labels is not None:
            row["acc"] = accuracy(g.labels, pred)
            row["nmi"] = nmi(g.labels, pred)
            row["ari"] = ari(g.labels, pred)
        rows.append(row)
    mean_row = {"t": "mean", "n": sum(r["n"] for r in rows) / len(rows)}
    for key in ("acc", "nmi", "ari", "modularity"):
        vals = [r[key] for r in rows if r[key] is not None]
        mean_row[key] = sum(vals) / len(vals) if vals else None
    rows.append(mean_row)
    return rows


def consistency_report(result: RunResult) -> list:
    """Wasserstein distances between consecutive snapshots' diagrams.

    Rows (t, dim, distance) for every consecutive pair and both dimensions,
    followed by per-dimension and overall mean/std summary rows.
    """
    diagrams = result.diagrams()
    rows = []
    per_dim = {0: [], 1: []}
    for t in range(len(diagrams) - 1):
        for dim in (0, 1):
            d, _ = topo_loss.wasserstein_distance(
                topo_loss.slice_of(diagrams[t], dim),
                topo_loss.slice_of(diagrams[t + 1], dim))
            rows.append({"t": t, "dim": dim, "distance": d})
            per_dim[dim].append(d)
    for dim in (0, 1):
        vals = np.asarray(per_dim[dim]) if per_dim[dim] else np.zeros(1)
        rows.append({"t": "mean", "dim": dim, "distance": float(vals.mean())})
        rows.append({"t": "std", "dim": dim, "distance": float(vals.std())})
    all_vals = np.asarray(per_dim[0] + per_dim[1]) if diagrams[:-1] else np.zeros(1)
    rows.append({"t": "mean", "dim": "all", "distance": float(all_vals.mean())})
    rows.append({"t": "std", "dim": "all", "distance": float(all_vals.std())})
    return rows


def mean_consistency(result: RunResult) -> float:
    """Mean consecutive-diagram distance over both dimensions."""
    for row in consistency_report(result):
        if row["t"] == "mean" and row["dim"] == "all":
            return row["distance"]
    raise RuntimeError("missing summary row")


# ---------------------------------------------------------------------------
# Artifact persistence (full-precision npz + json config).
# ---------------------------------------------------------------------------

def save_run(result: RunResult, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    arrays = {}
    for t, s in enumerate(result.states):
        arrays[f"weight_{t}"] = s.encoder_weight
        arrays[f"centers_{t}"] = s.centers
    arrays["num_snapshots"] = np.array(len(result.states))
    path = os.path.join(out_dir, f"artifacts_stage{result.stage}.npz")
    np.savez(path, **arrays)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(asdict(result.config), fh, indent=2, sort_keys=True)
    return path


def load_run(out_dir: str, dg: DynamicGraph, stage: int) -> RunResult:
    path = os.path.join(out_dir, f"artifacts_stage{stage}.npz")
    cfg_path = os.path.join(out_dir, "config.json")
    if not os.path.exists(path) or not os.path.exists(cfg_path):
        raise MissingArtifactError(
            f"no stage-{stage} artifacts under {out_dir}; run training first")
    with open(cfg_path, "r", encoding="utf-8") as fh:
        cfg = PipelineConfig(**json.load(fh))
    data = np.load(path)
    n = int(data["num_snapshots"])
    if n != len(dg.snapshots):
        raise MissingArtifactError(
            f"artifacts cover {n} snapshots, data has {len(dg.snapshots)}")
    states = [
        _snapshot_state(dg[t], data[f"weight_{t}"], data[f"centers_{t}"], cfg)
        for t in range(n)
    ]
    return RunResult(config=cfg, states=states, losses=[], stage=stage)
