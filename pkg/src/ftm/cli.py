"""Command-line entry point: ``ftm train | eval | synth | inspect-timeline``.

Exit codes: 0 success, 2 input/IO error, 3 configuration or shape error,
4 numerical failure, 1 anything else.  Failures print one line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, resolve_config
from .errors import (
    ConfigurationError,
    ContractError,
    DataValidationError,
    EvaluationError,
    NumericalError,
    ParseError,
)
from .evaluation import (
    AttackSweep,
    attack_eval,
    case_study_sweep,
    embedding_stability,
    eval_link_prediction,
    finetune_node_classifier,
    format_table,
    transfer_eval,
)
from .framing import build_timeline
from .graph import SynthSpec, TemporalGraph, chronological_split, load_csv, synth_generate, write_csv
from .model import FTM
from .optim import load_checkpoint, save_checkpoint
from .training import fit

log = logging.getLogger("ftm")

CHECKPOINT = "checkpoint.ftm"
SPLIT = "split.json"
EPOCH_LOG = "epochs.ndjson"
RESOLVED = "config.resolved"
NODE_IDS = "node_ids.json"


class InputError(Exception):
    """Missing or unreadable input file."""


def _read_graph(path: str, cfg: RunConfig) -> TemporalGraph:
    if not path:
        raise ConfigurationError("no dataset given (set 'dataset' in the config or pass --dataset)")
    p = Path(path)
    if not p.is_file():
        raise InputError(f"dataset not found: {p}")
    return load_csv(p, has_header=cfg.has_header, bipartite=cfg.bipartite)


def _split(g: TemporalGraph, cfg: RunConfig):
    return chronological_split(g, cfg.ratios, cfg.new_node_fraction, cfg.seed)


def _resolve(args) -> RunConfig:
    file_values = {}
    if args.config:
        p = Path(args.config)
        if not p.is_file():
            raise InputError(f"config file not found: {p}")
        file_values = load_config(p)
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value
    for key in ("dataset", "output_dir", "epochs", "seed", "setting"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    return resolve_config(file_values, overrides)


def cmd_train(args) -> int:
    cfg = _resolve(args)
    g = _read_graph(cfg.dataset, cfg)
    split = _split(g, cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / RESOLVED).write_text(cfg.dumps(), encoding="utf-8")
    split.write_manifest(g, out / SPLIT)
    (out / NODE_IDS).write_text(json.dumps(g.node_ids) + "\n", encoding="utf-8")

    model = FTM(cfg.model_config(g.feature_dim))
    result = fit(model, g, split, cfg.train_config(), log_path=out / EPOCH_LOG, record_time=cfg.log_wall_time)
    save_checkpoint(out / CHECKPOINT, model.state_dict())
    print(f"best validation AP {result.best_val_ap:.4f} at epoch {result.best_epoch}; outputs in {out}")
    return 0


def _load_model(cfg: RunConfig, g: TemporalGraph, checkpoint: str | None) -> FTM:
    path = Path(checkpoint) if checkpoint else Path(cfg.output_dir) / CHECKPOINT
    if not path.is_file():
        raise InputError(f"checkpoint not found: {path}")
    model = FTM(cfg.model_config(g.feature_dim))
    model.load_state_dict(load_checkpoint(path))
    return model


def _write_report(out: Path, name: str, doc: dict, table: str | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    (out / f"report-{name}.json").write_text(text, encoding="utf-8")
    if table is not None:
        (out / f"report-{name}.txt").write_text(table, encoding="utf-8")
        print(table, end="")
    else:
        print(text, end="")


def _stability_nodes(g: TemporalGraph, count: int) -> np.ndarray:
    """The ``count`` nodes with the most distinct interaction times (ties by id)."""
    distinct = np.array([len(np.unique(g.adj_time[g.adj_ptr[v] : g.adj_ptr[v + 1]])) for v in range(g.node_count)])
    order = np.lexsort((np.arange(g.node_count), -distinct))
    return np.sort(order[distinct[order] >= 2][:count])


def cmd_eval(args) -> int:
    cfg = _resolve(args)
    g = _read_graph(cfg.dataset, cfg)
    split = _split(g, cfg)
    out = Path(cfg.output_dir)
    task = args.task

    if task == "sweep":
        reports = case_study_sweep(g, split, cfg.sweep_axis, cfg.model_config(g.feature_dim), cfg.train_config(), setting=cfg.setting)
        labels = [r.extra["grid_point"] for r in reports]
        table = format_table(labels, [f"{cfg.setting} AP (%)"], [[100 * r.value] for r in reports])
        doc = {"task": f"sweep-{cfg.sweep_axis}", "setting": cfg.setting, "metric": "AP", "rows": [r.to_json() for r in reports]}
        _write_report(out, task, doc, table)
        return 0

    model = _load_model(cfg, g, args.checkpoint)
    if task == "link":
        _write_report(out, task, eval_link_prediction(model, g, split, cfg.setting, cfg.seed).to_json())
    elif task == "node":
        _write_report(out, task, finetune_node_classifier(model, g, cfg.seed).to_json())
    elif task == "attack":
        sweep = attack_eval(model, g, AttackSweep(list(cfg.attack_intensities), cfg.attack_repetitions), cfg.seed)
        rows = sweep.rows()
        table = format_table(["AUC (%)"], list(rows), [[100 * v for v in rows.values()]])
        doc = {
            "task": "attack",
            "metric": "AUC",
            "repetitions": sweep.repetitions,
            "intensities": sweep.intensities,
            "values": sweep.auc,
            "seed": cfg.seed,
            "config": model.config.to_dict(),
        }
        _write_report(out, task, doc, table)
    elif task == "transfer":
        target = _read_graph(cfg.transfer_dataset, cfg)
        report = transfer_eval(model, target, _split(target, cfg), cfg.setting, cfg.seed)
        report.extra["target_dataset"] = cfg.transfer_dataset
        _write_report(out, task, report.to_json())
    elif task == "stability":
        nodes = _stability_nodes(g, cfg.stability_nodes)
        if len(nodes) == 0:
            raise EvaluationError("no node has two distinct interaction times")
        res = embedding_stability(model, g, nodes, max_times=cfg.stability_times)
        doc = {
            "task": "stability",
            "setting": "all",
            "metric": "cosine-stability",
            "value": res.mean,
            "pairs": res.pairs,
            "skipped": res.skipped,
            "nodes": [g.node_ids[v] for v in nodes],
            "seed": cfg.seed,
        }
        _write_report(out, task, doc)
    return 0


def cmd_synth(args) -> int:
    spec = SynthSpec(
        users=args.users,
        items=args.items,
        links=args.links,
        feature_dim=args.feature_dim,
        p=args.p,
        seed=args.seed,
        rate=args.rate,
        state_fraction=args.state_fraction,
        state_strength=args.state_strength,
        noise=args.noise,
    )
    g = synth_generate(spec)
    path = Path(args.out)
    try:
        write_csv(g, path)
        truth = {
            "family": spec.family,
            "spec": {k: v for k, v in asdict(spec).items() if k != "extra"},
            "preferred": {g.node_ids[u]: g.node_ids[i] for u, i in g.metadata["preferred"].items()},
            "user_state": {g.node_ids[u]: s for u, s in g.metadata["user_state"].items()},
        }
        _sidecar(path).write_text(json.dumps(truth, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror or exc}") from None
    print(f"wrote {g.num_links} links to {path}")
    return 0


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".truth.json")


def cmd_inspect(args) -> int:
    cfg = replace(RunConfig(), has_header=not args.no_header, bipartite=args.bipartite)
    g = _read_graph(args.dataset, cfg)
    try:
        node = g.node_ids.index(args.node)
    except ValueError:
        raise ContractError(f"unknown node id {args.node!r}") from None
    tl = build_timeline(g, node, args.time, args.frame_length, args.timeline_length)
    doc = tl.to_json(g)
    doc.update(frame_length=args.frame_length)
    print(json.dumps(doc, indent=2))
    return 0


def _run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--dataset", help="CSV dataset path (overrides config)")
    p.add_argument("--output-dir", dest="output_dir", help="output directory (overrides config)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, help="seed (overrides config and FTM_SEED)")
    p.add_argument("--setting", choices=("transductive", "inductive", "all"))
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ftm", description="Frame-level timeline modelling for temporal graphs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="load, split, fit and checkpoint")
    _run_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _run_options(p)
    p.add_argument("--checkpoint", help="defaults to <output_dir>/checkpoint.ftm")
    p.add_argument("--task", required=True, choices=("link", "node", "attack", "transfer", "stability", "sweep"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic periodic-bipartite dataset")
    p.add_argument("--out", required=True)
    defaults = SynthSpec()
    for name in ("users", "items", "links", "feature_dim", "seed"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=int, default=getattr(defaults, name))
    for name in ("p", "rate", "state_fraction", "state_strength", "noise"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=float, default=getattr(defaults, name))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect-timeline", help="dump one node's timeline as JSON")
    p.add_argument("--dataset", required=True)
    p.add_argument("--node", required=True, help="original node id as written in the CSV")
    p.add_argument("--time", required=True, type=float)
    p.add_argument("-k", "--frame-length", dest="frame_length", type=int, default=20)
    p.add_argument("-n", "--timeline-length", dest="timeline_length", type=int, default=3)
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--bipartite", action="store_true")
    p.set_defaults(func=cmd_inspect)
    return parser


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (InputError, ParseError, DataValidationError, OSError)):
        return 2
    if isinstance(exc, (ConfigurationError, ContractError)):
        return 3
    if isinstance(exc, NumericalError):
        return 4
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # one-line cause, mapped exit code
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"ftm {args.command}: error: {msg}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
