"""``autobahn`` command-line entry point.

Exit codes: 0 success or pass, 1 verification failure (or a training run that
diverged), 2 usage, parse or file errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import TOLERANCES, resolve_seed, tolerance_header
from .graphcore import (
    GraphError,
    count_undirected,
    enumerate_cycles,
    enumerate_paths,
    enumerate_stars,
)
from .harness import check_equivariance, gcn_oracle, make_cycle_dataset
from .io import GraphFileError, read_dataset, read_graph, read_run_config, write_dataset
from .model import (
    CheckpointError,
    ModelConfig,
    ModelError,
    init_params,
    load_checkpoint,
    predict,
    save_checkpoint,
    star_active,
)
from .train import TrainingError, TrainSchedule, format_trace, train

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _emit(args, report: dict, lines: list[str]) -> None:
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print("\n".join(lines))


def _length_range(text: str) -> tuple[int, int]:
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split("..", 1))
        else:
            lo = hi = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected K or K1..K2, got {text!r}") from None
    if not 2 <= lo <= hi:
        raise argparse.ArgumentTypeError(f"need 2 <= K1 <= K2, got {text!r}")
    return lo, hi


def _length_list(text: str) -> list[int]:
    if text.strip() == "":
        return []
    try:
        out = sorted({int(x) for x in text.split(",")})
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated lengths, got {text!r}") from None
    if any(x < 3 for x in out):
        raise argparse.ArgumentTypeError("cycle lengths must be at least 3")
    return out


def cmd_enumerate(args) -> int:
    g = read_graph(args.graph)
    lo, hi = args.paths
    groups: dict[str, list] = {}
    paths = enumerate_paths(g, lo, hi)
    for k in range(lo, hi + 1):
        groups[f"path{k}"] = [p for p in paths if p.size == k]
    cycles = enumerate_cycles(g, args.cycles)
    for m in args.cycles:
        groups[f"cycle{m}"] = [c for c in cycles if c.size == m]
    if args.stars:
        groups["star"] = enumerate_stars(g)
    counts = {
        name: {"instances": len(items), "undirected": count_undirected(items) if name != "star" else len(items)}
        for name, items in groups.items()
    }
    report = {
        "graph": str(args.graph),
        "n": g.n,
        "edges": g.edge_count,
        "counts": counts,
        "instances": {name: [list(i.traversal) for i in items] for name, items in groups.items()},
    }
    lines = [f"graph {args.graph}: {g.n} vertices, {g.edge_count} edges"]
    for name, c in counts.items():
        if name == "star":
            lines.append(f"{name}: {c['instances']}")
        else:
            lines.append(f"{name}: {c['instances']} ({c['undirected']} undirected)")
    if args.list:
        for name, items in groups.items():
            for inst in items:
                lines.append(f"  {name} " + "-".join(str(v) for v in inst.traversal))
    _emit(args, report, lines)
    return EXIT_OK


def cmd_check_equivariance(args) -> int:
    seed = resolve_seed(args.seed)
    graphs = [read_graph(args.graph)] if args.graph else None
    trials = args.trials if args.trials is not None else (10 if graphs else 100)
    start = time.perf_counter()
    report = check_equivariance(
        graphs,
        trials=trials,
        seed=seed,
        max_vertices=args.max_vertices,
        channels=args.channels,
        identity_only=args.identity,
        sabotage=args.sabotage,
    )
    elapsed = time.perf_counter() - start
    tol = report.tolerance
    data = report.to_dict()
    data.update(seed=seed, seconds=elapsed, tolerances=TOLERANCES)
    lines = [tolerance_header(), f"seed {seed}, {trials} trials"]
    for t in report.trials:
        r = t.residuals
        cells = " ".join(f"{k}={v:.2e}" for k, v in r.items())
        lines.append(f"trial {t.index:3d} n={t.n:2d} {cells} {'PASS' if t.passed(tol) else 'FAIL'}")
    lines.append("max " + " ".join(f"{k}={v:.2e}" for k, v in data["max_residuals"].items()))
    lines.append(f"equivariance: {'PASS' if report.passed else 'FAIL'} ({elapsed:.1f} s)")
    _emit(args, data, lines)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_gcn_oracle(args) -> int:
    seed = resolve_seed(args.seed)
    report = gcn_oracle(
        trials=args.trials,
        seed=seed,
        max_vertices=args.max_vertices,
        layers=args.layers,
        channels=args.channels,
        perturb=args.perturb,
    )
    data = report.to_dict()
    data.update(seed=seed, tolerances=TOLERANCES)
    lines = [tolerance_header(), f"seed {seed}, {args.trials} trials"]
    for t in report.trials:
        ok = t["deviation"] < report.tolerance
        lines.append(
            f"trial {t['index']:3d} n={t['n']:2d} edges={t['edges']:2d} "
            f"deviation={t['deviation']:.2e} {'PASS' if ok else 'FAIL'}"
        )
    lines.append(f"gcn oracle: {'PASS' if report.passed else 'FAIL'} (max deviation {report.max_deviation:.2e})")
    _emit(args, data, lines)
    return EXIT_OK if report.passed else EXIT_FAIL


def _dataset_config(overrides: dict, graphs, seed: int) -> ModelConfig:
    d = dict(overrides)
    need_atoms = max((max(g.vertex_labels, default=-1) for g in graphs), default=-1) + 1
    need_bonds = max((max((e[2] for e in g.edges), default=-1) for g in graphs), default=-1) + 1
    base = ModelConfig()
    d.setdefault("atom_types", max(base.atom_types, need_atoms))
    d.setdefault("bond_types", max(base.bond_types, need_bonds))
    d["seed"] = seed
    cfg = ModelConfig.from_dict(d)
    if need_atoms > cfg.atom_types or need_bonds > cfg.bond_types:
        raise ModelError(
            f"dataset uses {need_atoms} atom / {need_bonds} bond labels but the config allows "
            f"{cfg.atom_types} / {cfg.bond_types}"
        )
    return cfg


def cmd_train(args) -> int:
    records = read_dataset(args.dataset)
    run = read_run_config(args.config) if args.config else {"model": {}, "schedule": {}, "validation_fraction": 0.0}
    seed = resolve_seed(args.seed if args.seed is not None else run["model"].get("seed"))
    graphs = [g for _, g, _ in records]
    targets = np.array([t for _, _, t in records])
    cfg = _dataset_config(run["model"], graphs, seed)
    sched = dict(run["schedule"])
    if args.epochs is not None:
        sched["epochs"] = args.epochs
    schedule = TrainSchedule.from_dict(sched)

    split_seq, batch_seq = np.random.SeedSequence(seed).spawn(2)
    order = np.random.default_rng(split_seq).permutation(len(records))
    n_val = int(round(run["validation_fraction"] * len(records)))
    if n_val >= len(records):
        n_val = len(records) - 1
    val_idx, train_idx = np.sort(order[:n_val]), np.sort(order[n_val:])

    params = init_params(cfg)
    start = time.perf_counter()
    result = train(
        params,
        cfg,
        [graphs[i] for i in train_idx],
        targets[train_idx],
        schedule,
        seed=int(batch_seq.generate_state(1)[0]),
        val_graphs=[graphs[i] for i in val_idx],
        val_targets=targets[val_idx],
    )
    elapsed = time.perf_counter() - start
    out = Path(args.out)
    save_checkpoint(out, cfg, result.params)
    trace_path = Path(args.trace) if args.trace else out.with_name(out.name + ".trace.txt")
    trace_path.write_text(format_trace(result.trace))

    fallback = [records[i][0] for i in range(len(records)) if star_active(graphs[i], cfg)]
    final = result.final
    report = {
        "seed": seed,
        "records": len(records),
        "train_records": len(train_idx),
        "validation_records": len(val_idx),
        "epochs": schedule.epochs,
        "initial_train_mse": result.initial.train_mse,
        "initial_train_mae": result.initial.train_mae,
        "final_train_mse": result.final_mse,
        "final_train_mae": result.final_mae,
        "final_val_mse": final.val_mse,
        "final_val_mae": final.val_mae,
        "star_fallback_graphs": fallback,
        "checkpoint": str(out),
        "trace": str(trace_path),
        "seconds": elapsed,
        "model": cfg.to_dict(),
        "schedule": schedule.to_dict(),
    }
    lines = [
        f"trained {schedule.epochs} epochs on {len(train_idx)} graphs ({len(val_idx)} held out), seed {seed}, {elapsed:.1f} s",
        f"initial train MSE {result.initial.train_mse:.6g} MAE {result.initial.train_mae:.6g}",
        f"final   train MSE {result.final_mse:.6g} MAE {result.final_mae:.6g}",
    ]
    if len(val_idx):
        lines.append(f"final   val   MSE {final.val_mse:.6g} MAE {final.val_mae:.6g}")
    if fallback:
        lines.append(f"star pathway used for {len(fallback)} graph(s) without paths or cycles: {', '.join(fallback[:5])}")
    lines += [f"checkpoint: {out}", f"loss trace: {trace_path}"]
    _emit(args, report, lines)
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg, params = load_checkpoint(args.checkpoint)
    g = read_graph(args.graph)
    (value,) = predict(params, [g], cfg)
    fallback = star_active(g, cfg)
    report = {"prediction": float(value), "graph": str(args.graph), "star_fallback": fallback}
    lines = [repr(float(value))]
    if fallback:
        lines.append("note: no paths or cycles of the configured lengths; used the star pathway")
    _emit(args, report, lines)
    return EXIT_OK


def cmd_make_dataset(args) -> int:
    seed = resolve_seed(args.seed)
    records = make_cycle_dataset(
        np.random.default_rng(seed),
        args.count,
        min_vertices=args.min_vertices,
        max_vertices=args.max_vertices,
    )
    write_dataset(args.out, records)
    hist = np.bincount([int(t) for _, t in records]).tolist() if records else []
    report = {"seed": seed, "records": len(records), "directory": str(args.out), "target_histogram": hist}
    lines = [f"wrote {len(records)} records to {args.out} (seed {seed})", f"6-cycle count histogram: {hist}"]
    _emit(args, report, lines)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--seed", type=int, default=None, help="PRNG seed (default $AUTOBAHN_SEED or 0)")

    parser = argparse.ArgumentParser(prog="autobahn", description="Automorphism-based graph networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", parents=[common], help="count paths, cycles and stars in a graph")
    p.add_argument("graph")
    p.add_argument("--paths", type=_length_range, default=(3, 6), metavar="K1..K2")
    p.add_argument("--cycles", type=_length_list, default=[5, 6], metavar="L1,L2")
    p.add_argument("--stars", action="store_true", help="also list stars")
    p.add_argument("--list", action="store_true", help="list every instance")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("check-equivariance", parents=[common], help="permutation-equivariance harness")
    p.add_argument("graph", nargs="?", help="graph file; random molecules when omitted")
    p.add_argument("--trials", type=int, default=None, help="default 100 random graphs, or 10 for a file")
    p.add_argument("--max-vertices", type=int, default=12)
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--identity", action="store_true", help="use the identity relabeling")
    p.add_argument("--sabotage", action="store_true", help="negative control: asymmetric path filters")
    p.set_defaults(func=cmd_check_equivariance)

    p = sub.add_parser("train", parents=[common], help="train on a dataset directory")
    p.add_argument("dataset")
    p.add_argument("--config", help="YAML with model / schedule / validation_fraction sections")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--trace", help="loss trace path (default: <out>.trace.txt)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="predict with a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("graph")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gcn-oracle", parents=[common], help="star network vs plain message passing")
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--max-vertices", type=int, default=10)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--perturb", action="store_true", help="negative control: nudge the star weights")
    p.set_defaults(func=cmd_gcn_oracle)

    p = sub.add_parser("make-dataset", parents=[common], help="write the synthetic 6-cycle counting task")
    p.add_argument("out")
    p.add_argument("--count", type=int, default=500)
    p.add_argument("--min-vertices", type=int, default=6)
    p.add_argument("--max-vertices", type=int, default=14)
    p.set_defaults(func=cmd_make_dataset)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("trials", "max_vertices", "channels", "layers", "count", "epochs"):
        value = getattr(args, name, None)
        if value is not None and value < (0 if name == "epochs" else 1):
            parser.error(f"--{name.replace('_', '-')} must be positive")
    try:
        return args.func(args)
    except (GraphFileError, CheckpointError, ModelError, GraphError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as e:
        print(f"training failed: {e}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
