"""Command-line surface: synth, train, eval, report, demo."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import community, gae, tda
from .graphs import (DynamicGraph, gaussian_partition_graph,
                     load_dynamic_graph, make_bridge_scenario,
                     save_dynamic_graph)
from .pipeline import (MissingArtifactError, PipelineConfig, RunResult,
                       consistency_report, evaluate, load_run,
                       parse_config_file, save_run, stage1_train,
                       stage2_train)

METRIC_COLUMNS = ("t", "n", "acc", "nmi", "ari", "modularity")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):  # includes numpy floats; plain-float repr
        return repr(float(v))
    return str(v)


def write_metrics_csv(path: str, rows: list) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(METRIC_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in METRIC_COLUMNS) + "\n")


def write_consistency_csv(path: str, stage_rows: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("stage,t,dim,distance\n")
        for stage in sorted(stage_rows):
            for row in stage_rows[stage]:
                fh.write(f"{stage},{row['t']},{row['dim']},"
                         f"{_fmt(row['distance'])}\n")


def write_losses_csv(path: str, losses: list) -> None:
    cols = ("stage", "t", "phase", "epoch", "l_gae", "l_c", "l_topo", "total")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in losses:
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")


def write_topo_terms_csv(path: str, trace: list) -> None:
    cols = ("epoch", "t", "dim", "w_prev", "w_next", "loss_term")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in trace:
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")


def export_artifacts(out_dir: str, dg: DynamicGraph, result: RunResult) -> None:
    """Human-readable per-snapshot exports for the final model state."""
    for sub in ("diagrams", "embeddings", "assignments", "labels", "communities"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    for t, g in enumerate(dg.snapshots):
        state = result.states[t]
        gae.export_embedding(
            os.path.join(out_dir, "embeddings", f"t_{t}.txt"), g, state.embedding)
        with open(os.path.join(out_dir, "assignments", f"t_{t}.txt"), "w",
                  encoding="utf-8") as fh:
            for i, u in enumerate(g.node_ids):
                fh.write(f"{u} " + " ".join(repr(float(v)) for v in state.assignment[i]) + "\n")
        with open(os.path.join(out_dir, "labels", f"t_{t}.txt"), "w",
                  encoding="utf-8") as fh:
            for u, lab in zip(g.node_ids, state.labels):
                fh.write(f"{u} {lab}\n")
        community.export_community_network(
            os.path.join(out_dir, "communities", f"t_{t}.txt"),
            state.community_matrix)
        for dim in (0, 1):
            tda.export_diagram(
                os.path.join(out_dir, "diagrams", f"t_{t}_dim{dim}.txt"),
                state.diagram, dim)


def run_demo(out_dir: str, seed: int = 0, quick: bool = False,
             mode: str = "varying") -> dict:
    """Full synthetic reproduction: scenario, both stages, all reports.

    Returns a summary with per-stage metric rows and mean consistency.
    """
    os.makedirs(out_dir, exist_ok=True)
    dg = make_bridge_scenario(seed)
    cfg = PipelineConfig(k=5, seed=seed, mode=mode)
    if quick:
        cfg = replace(cfg, epochs_stage1=120, warmup_epochs=60,
                      epochs_stage2=60)
    save_dynamic_graph(dg, os.path.join(out_dir, "data"))
    result1 = stage1_train(dg, cfg)
    rows1 = evaluate(result1, dg)
    cons1 = consistency_report(result1)
    result2 = stage2_train(result1, dg)
    rows2 = evaluate(result2, dg)
    cons2 = consistency_report(result2)
    save_run(result1, out_dir)
    save_run(result2, out_dir)
    write_metrics_csv(os.path.join(out_dir, "metrics_stage1.csv"), rows1)
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), rows2)
    write_consistency_csv(os.path.join(out_dir, "consistency.csv"),
                          {1: cons1, 2: cons2})
    write_losses_csv(os.path.join(out_dir, "losses.csv"), result2.losses)
    write_topo_terms_csv(os.path.join(out_dir, "topo_terms.csv"),
                         result2.topo_trace)
    export_artifacts(out_dir, dg, result2)
    return {"stage1": rows1, "stage2": rows2,
            "consistency_stage1": cons1, "consistency_stage2": cons2}


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="output directory")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topoclust",
        description="Dynamic community detection with topological "
                    "consistency regularization")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--size-mean", type=float, default=20.0)
    p.add_argument("--size-std", type=float, default=1.0)
    p.add_argument("--p-in", type=float, default=0.5)
    p.add_argument("--p-out", type=float, default=0.001)
    p.add_argument("--p-add", type=float, default=0.1,
                   help="bridge edge probability (bridge scenario)")
    p.add_argument("--scenario", choices=("static", "bridge"), default="bridge")
    _add_common(p)

    p = sub.add_parser("train", help="run stage 1 and/or stage 2 training")
    p.add_argument("--data", required=True, help="snapshot directory")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--k", type=int, help="number of communities")
    p.add_argument("--mode", choices=("fixed", "varying"))
    p.add_argument("--stage", choices=("1", "2", "both"), default="both")
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate saved artifacts")
    p.add_argument("--data", required=True)
    p.add_argument("--artifacts", required=True)
    p.add_argument("--stage", type=int, default=2)
    p.add_argument("--mode", choices=("fixed", "varying"))
    _add_common(p)

    p = sub.add_parser("report", help="consistency report + diagram export")
    p.add_argument("--data", required=True)
    p.add_argument("--artifacts", required=True)
    p.add_argument("--stage", type=int, default=2)
    _add_common(p)

    p = sub.add_parser("demo", help="full synthetic scenario, both stages")
    p.add_argument("--quick", action="store_true",
                   help="shortened epochs for smoke testing")
    p.add_argument("--mode", choices=("fixed", "varying"), default="varying")
    _add_common(p)
    return parser


def _train_config(args) -> PipelineConfig:
    overrides = parse_config_file(args.config) if args.config else {}
    if args.k is not None:
        k = args.k
        if (args.mode or overrides.get("mode", "fixed")) == "varying":
            k = 2 * k  # headroom: unused clusters may die
        overrides["k"] = k
    if args.mode is not None:
        overrides["mode"] = args.mode
    if "k" not in overrides:
        raise SystemExit("error: provide --k or a config file with k")
    overrides.setdefault("seed", args.seed)
    return PipelineConfig(**overrides).validate()


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            if args.scenario == "bridge":
                dg = make_bridge_scenario(
                    args.seed, k=args.k, size_mean=args.size_mean,
                    size_std=args.size_std, p_in=args.p_in, p_out=args.p_out,
                    p_add=args.p_add)
            else:
                g = gaussian_partition_graph(
                    args.k, args.size_mean, args.size_std, args.p_in,
                    args.p_out, args.seed)
                dg = DynamicGraph(snapshots=(g,))
            save_dynamic_graph(dg, args.out)
            print(f"wrote {len(dg.snapshots)} snapshot(s) to {args.out}")

        elif args.command == "train":
            dg = load_dynamic_graph(args.data)
            cfg = _train_config(args)
            os.makedirs(args.out, exist_ok=True)
            if args.stage in ("1", "both"):
                result = stage1_train(dg, cfg)
                save_run(result, args.out)
                print(f"stage 1 done: {len(result.states)} snapshots")
            if args.stage in ("2", "both"):
                prev = load_run(args.out, dg, stage=1)
                result = stage2_train(prev, dg, cfg)
                save_run(result, args.out)
                write_losses_csv(os.path.join(args.out, "losses.csv"),
                                 result.losses)
                write_topo_terms_csv(os.path.join(args.out, "topo_terms.csv"),
                                     result.topo_trace)
                print("stage 2 done")

        elif args.command == "eval":
            dg = load_dynamic_graph(args.data)
            result = load_run(args.artifacts, dg, stage=args.stage)
            rows = evaluate(result, dg, mode=args.mode)
            os.makedirs(args.out, exist_ok=True)
            path = os.path.join(args.out, "metrics.csv")
            write_metrics_csv(path, rows)
            print(f"wrote {path}")

        elif args.command == "report":
            dg = load_dynamic_graph(args.data)
            result = load_run(args.artifacts, dg, stage=args.stage)
            os.makedirs(args.out, exist_ok=True)
            write_consistency_csv(os.path.join(args.out, "consistency.csv"),
                                  {args.stage: consistency_report(result)})
            export_artifacts(args.out, dg, result)
            print(f"wrote consistency report to {args.out}")

        elif args.command == "demo":
            summary = run_demo(args.out, seed=args.seed, quick=args.quick,
                               mode=args.mode)
            mean1 = summary["stage1"][-1]
            mean2 = summary["stage2"][-1]
            print(f"stage 1 mean: acc={_fmt(mean1['acc'])} "
                  f"modularity={_fmt(mean1['modularity'])}")
            print(f"stage 2 mean: acc={_fmt(mean2['acc'])} "
                  f"modularity={_fmt(mean2['modularity'])}")
            print(f"outputs in {args.out}")
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
