"""Command-line entry point.

Subcommands: run-amp, state-evolution, universality, tensor-eval, bcp-check,
graph-lemma. Each takes --config (JSON mirroring the ExperimentConfig field
names) plus the shared flags --seed, --out, --serial, --format.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import tensor_net as tn
from .exceptions import AmplabError
from .harness import (
    ExperimentConfig,
    config_from_dict,
    load_config,
    run_experiment,
    tensor_checks,
    universality_compare,
    write_records_csv,
    write_summary_json,
)
from .rng import RngStream


def _common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="path to a JSON experiment config")
    p.add_argument("--seed", type=int, default=None, help="override: use this single seed")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--serial", action="store_true",
                   help="bitwise-reproducible serial mode (zeroes wall-clock fields)")
    p.add_argument("--format", dest="fmt", choices=["csv", "json"], default=None)


def _load(args, default_experiment=None) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    elif default_experiment is not None:
        cfg = config_from_dict({"experiment": default_experiment, "seeds": [0]})
    else:
        raise SystemExit("--config is required")
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.serial:
        cfg.serial = True
    if args.fmt:
        cfg.fmt = args.fmt
    if args.out:
        cfg.out = args.out
    return cfg


def _emit(cfg: ExperimentConfig, records, summary, stem: str):
    os.makedirs(cfg.out or ".", exist_ok=True)
    wrote = []
    if records is not None and cfg.fmt == "csv":
        path = os.path.join(cfg.out, f"{stem}.csv")
        write_records_csv(path, records)
        wrote.append(path)
    path = os.path.join(cfg.out, f"{stem}_summary.json")
    write_summary_json(path, summary)
    wrote.append(path)
    for p in wrote:
        print(f"wrote {p}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="amplab")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("run-amp", "state-evolution", "universality", "bcp-check", "graph-lemma"):
        sp = sub.add_parser(name)
        _common_flags(sp)

    sp = sub.add_parser("tensor-eval")
    _common_flags(sp)
    sp.add_argument("--network", required=True, help="network file saved by save_network")

    args = parser.parse_args(argv)
    try:
        if args.command == "run-amp":
            cfg = _load(args)
            records, summary = run_experiment(cfg)
            _emit(cfg, records, summary, "results")
        elif args.command == "state-evolution":
            cfg = _load(args)
            cfg.experiment = "se_only" if cfg.experiment == "tensor_checks" else cfg.experiment
            if cfg.experiment not in ("se_only",):
                cfg.pipeline = {"fig1_local": "local", "universality_sweep": "local",
                                "fig2_spectral": "spectral", "fig3_aniso": "aniso"}.get(
                                    cfg.experiment, cfg.pipeline)
                cfg.experiment = "se_only"
            _, summary = run_experiment(cfg)
            _emit(cfg, None, summary, "state_evolution")
        elif args.command == "universality":
            cfg = _load(args)
            table = universality_compare(cfg)
            _emit(cfg, None, table, "universality")
        elif args.command == "tensor-eval":
            cfg = _load(args, default_experiment="tensor_checks")
            graph, labeling = tn.load_network(args.network)
            n = labeling[0].n
            brute = tn.eval_value_bruteforce(graph, labeling, n)
            fast = tn.eval_value_contraction(graph, labeling, n)
            report = {"bruteforce": brute, "contraction": fast,
                      "relative_gap": abs(brute - fast) / max(abs(brute), 1.0)}
            print(json.dumps(report, indent=2))
        elif args.command == "bcp-check":
            cfg = _load(args, default_experiment="tensor_checks")
            cfg.experiment = "tensor_checks"
            report = tensor_checks(cfg)
            report["batteries"] = [b for b in report["batteries"]
                                   if b["name"] in ("bcp_diagonal_bound",)]
            report["all_pass"] = all(b["passed"] for b in report["batteries"])
            _emit(cfg, None, report, "bcp_check")
        elif args.command == "graph-lemma":
            cfg = _load(args, default_experiment="tensor_checks")
            cfg.experiment = "tensor_checks"
            report = tensor_checks(cfg)
            report["batteries"] = [b for b in report["batteries"]
                                   if b["name"] in ("graph_lemma",)]
            report["all_pass"] = all(b["passed"] for b in report["batteries"])
            _emit(cfg, None, report, "graph_lemma")
    except AmplabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
