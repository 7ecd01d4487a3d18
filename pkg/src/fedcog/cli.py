"""Command line entry point: ``fedcog <command> --config experiment.yaml``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .io import write_partition
from .partition import induce_local_graphs, partition_stats
from .pipeline import StageError, load_graph, make_partition, run_experiment, verify_equivalence
from .privacy import lnnc_augment


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.override_seed(args.seed)
    return cfg


def cmd_partition(args) -> int:
    cfg = _load(args)
    g = load_graph(cfg)
    p = make_partition(cfg, g)
    stats = partition_stats(p, g)
    out = Path(args.out or Path(cfg.output or ".") / "partition.tsv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_partition(out, p)
    print(f"parties\t{p.num_parties}")
    print(f"intra_edge_fraction\t{stats.intra_edge_fraction:.6f}")
    print(f"avg_label_emd\t{stats.avg_label_emd:.6f}")
    print(f"party_sizes\t{','.join(map(str, stats.party_sizes))}")
    print(f"written\t{out}")
    return 0


def cmd_lnnc_audit(args) -> int:
    cfg = _load(args)
    g = load_graph(cfg)
    p = make_partition(cfg, g)
    print("party\texposed_before\tedges_added\tskipped")
    for lg in induce_local_graphs(g, p):
        _, plan = lnnc_augment(lg)
        print(f"{lg.party}\t{plan.exposed_before}\t{len(plan.added_edges)}\t{len(plan.skipped)}")
    return 0


def cmd_verify(args) -> int:
    cfg = _load(args)
    report = verify_equivalence(cfg)
    for line in report.lines():
        print(line)
    return 0 if report.passed else 1


def cmd_train(args) -> int:
    cfg = _load(args)
    if args.mode:
        cfg.mode = args.mode
    report = run_experiment(cfg)
    for rec in report.history:
        print(json.dumps(rec, sort_keys=True))
    print(f"final {report.metric_name}\t{report.final_metric:.6f}")
    return 0


def cmd_evaluate(args) -> int:
    """Same config under FedCog, the disconnected baseline and the centralized reference."""
    cfg = _load(args)
    results = {}
    for mode in ("fedcog", "disconnected", "centralized"):
        rep = run_experiment(cfg, mode=mode, write=False)
        results[mode] = rep.final_metric
        print(f"{mode}\t{rep.metric_name}\t{rep.final_metric:.6f}")
    if cfg.output:
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "evaluate.json").write_text(json.dumps(results, indent=2, sort_keys=True) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedcog", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "partition": cmd_partition,
        "lnnc-audit": cmd_lnnc_audit,
        "verify": cmd_verify,
        "train": cmd_train,
        "evaluate": cmd_evaluate,
    }
    for name, fn in commands.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0] if fn.__doc__ else None)
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int, default=None, help="override every seed in the config")
        if name == "partition":
            sp.add_argument("--out", default=None, help="partition TSV path")
        if name == "train":
            sp.add_argument("--mode", choices=["fedcog", "disconnected", "centralized"], default=None)
        sp.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, StageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
