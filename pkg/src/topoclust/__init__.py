"""Dynamic community detection with topological consistency regularization."""

from .graphs import (DynamicGraph, SnapshotGraph, gaussian_partition_graph,
                     load_dynamic_graph, make_bridge_scenario,
                     normalized_adjacency, perturb_bridge, save_dynamic_graph,
                     total_edge_weight)
from .pipeline import (PipelineConfig, RunResult, consistency_report,
                       evaluate, mean_consistency, stage1_train, stage2_train)
from .metrics import accuracy, ari, kmeans, modularity, nmi

__version__ = "0.1.0"

__all__ = [
    "DynamicGraph", "SnapshotGraph", "gaussian_partition_graph",
    "load_dynamic_graph", "make_bridge_scenario", "normalized_adjacency",
    "perturb_bridge", "save_dynamic_graph", "total_edge_weight",
    "PipelineConfig", "RunResult", "consistency_report", "evaluate",
    "mean_consistency", "stage1_train", "stage2_train",
    "accuracy", "ari", "kmeans", "modularity", "nmi",
]
