"""Pipeline driver: generate / train / fine-tune / eval-link / eval-node /
sweep / dump-embeddings / rerun.

Every artifact-producing command writes a manifest JSON next to its output
recording the resolved configuration, seed, paths, tool version, and the
exact argv, so `rerun --manifest <path>` reproduces the artifacts byte for
byte (the manifest's own wall-time field is the only thing that varies).

Exit codes: 0 success, 2 usage errors (bad flags, unknown config keys,
missing inputs), 1 runtime failures. Set DYNEMBED_LOG=debug|info|warning|quiet
to control stderr verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .autodiff import Tape
from .evaluation import draw_link_split, eval_link_prediction, eval_node_classification
from .graph import GraphFormatError, load_dynamic_graph, save_dynamic_graph
from .seeding import child_rng
from .spatial import embed_snapshot
from .synthetic import generate_synthetic
from .training import Model, TrainConfig, fine_tune, predict_embeddings, train

log = logging.getLogger("dynembed")


class UsageError(ValueError):
    """Bad invocation: wrong flags, malformed config, missing inputs."""


CONFIG_ALIASES = {"d": "dim", "L": "layers", "K": "lookback", "R": "negatives",
                  "batch": "batch_size", "lr": "learning_rate"}


def _parse_bool(text, where):
    t = text.lower()
    if t in ("1", "true", "yes"):
        return True
    if t in ("0", "false", "no"):
        return False
    raise UsageError(f"{where}: expected a boolean, got {text!r}")


_FIELD_PARSERS = {
    "dim": int, "layers": int, "lookback": int, "negatives": int,
    "batch_size": int, "epochs": int, "seed": int,
    "learning_rate": float,
    "no_activeness": _parse_bool, "no_temporal": _parse_bool,
    "edge_scope": str,
}


def parse_config_file(path) -> dict:
    if not os.path.isfile(path):
        raise UsageError(f"config file not found: {path}")
    doc = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            name = CONFIG_ALIASES.get(key, key)
            parser = _FIELD_PARSERS.get(name)
            if parser is None:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                doc[name] = parser(value, f"{path}:{lineno}") if parser is _parse_bool \
                    else parser(value)
            except ValueError:
                raise UsageError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
    return doc


def resolve_config(config_path, overrides: dict) -> TrainConfig:
    """Defaults < config file < command-line flags."""
    merged = parse_config_file(config_path) if config_path else {}
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig(**merged).validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _config_overrides(args) -> dict:
    names = ("dim", "layers", "lookback", "negatives", "batch_size", "learning_rate",
             "epochs", "seed", "no_activeness", "no_temporal", "edge_scope")
    return {n: getattr(args, n) for n in names if hasattr(args, n)}


def _require_dir(path, what):
    if not path or not os.path.isdir(path):
        raise UsageError(f"{what} directory not found: {path}")
    return path


def _resolve_model_path(path):
    if os.path.isdir(path):
        path = os.path.join(path, "model.json")
    if not os.path.isfile(path):
        raise UsageError(f"model checkpoint not found: {path}")
    return path


def _load_graph(path):
    _require_dir(path, "dataset")
    return load_dynamic_graph(path)


def write_manifest(dest, command, argv, config=None, seed=None, inputs=None,
                   outputs=None, wall_s=None):
    doc = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "inputs": inputs or {},
        "outputs": outputs or [],
        "tool_version": __version__,
        "wall_time_s": wall_s,
    }
    with open(dest, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return dest


def _fmt(x) -> str:
    return repr(float(x))


# -- command handlers ---------------------------------------------------------

def cmd_generate(args, argv):
    started = time.perf_counter()
    g = generate_synthetic(args.nodes, args.communities, args.snapshots, args.attr_dim,
                           hub_fraction=args.hub_fraction, noise_sigma=args.noise_sigma,
                           migrate_fraction=args.migrate_fraction,
                           attr_scale=args.attr_scale, seed=args.seed)
    save_dynamic_graph(g, args.out)
    write_manifest(os.path.join(args.out, "manifest.json"), "generate", argv,
                   config={"nodes": args.nodes, "communities": args.communities,
                           "snapshots": args.snapshots, "attr_dim": args.attr_dim,
                           "hub_fraction": args.hub_fraction, "noise_sigma": args.noise_sigma,
                           "migrate_fraction": args.migrate_fraction,
                           "attr_scale": args.attr_scale},
                   seed=args.seed, outputs=[args.out],
                   wall_s=time.perf_counter() - started)
    log.info("generated %s into %s", g, args.out)
    return 0


def cmd_train(args, argv):
    started = time.perf_counter()
    g = _load_graph(args.data)
    config = resolve_config(args.config, _config_overrides(args))
    model = train(g, config)
    os.makedirs(args.out, exist_ok=True)
    model_path = os.path.join(args.out, "model.json")
    model.save(model_path)
    log_path = os.path.join(args.out, "training_log.csv")
    with open(log_path, "w") as fh:
        fh.write("epoch,mean_loss,wall_ms\n")
        for i, (loss, ms) in enumerate(zip(model.epoch_losses, model.epoch_wall_ms), start=1):
            fh.write(f"{i},{_fmt(loss)},{_fmt(ms)}\n")
    write_manifest(os.path.join(args.out, "manifest.json"), "train", argv,
                   config=config.to_dict(), seed=config.seed,
                   inputs={"data": args.data}, outputs=[model_path, log_path],
                   wall_s=time.perf_counter() - started)
    log.info("trained %d epochs, final mean loss %.6f -> %s",
             config.epochs, model.epoch_losses[-1], model_path)
    return 0


def cmd_fine_tune(args, argv):
    started = time.perf_counter()
    g = _load_graph(args.data)
    model = Model.load(_resolve_model_path(args.model))
    split = draw_link_split(g, args.seed, fine_tune_fraction=args.fraction)
    tuned, warnings = fine_tune(model, g, split.fine_tune_edges, args.steps, seed=args.seed)
    for w in warnings:
        log.warning("%s", w)
    os.makedirs(args.out, exist_ok=True)
    model_path = os.path.join(args.out, "model.json")
    tuned.save(model_path)
    write_manifest(os.path.join(args.out, "manifest.json"), "fine-tune", argv,
                   config={"steps": args.steps, "fraction": args.fraction},
                   seed=args.seed, inputs={"data": args.data, "model": args.model},
                   outputs=[model_path], wall_s=time.perf_counter() - started)
    log.info("fine-tuned on %d revealed edges -> %s",
             split.fine_tune_edges.shape[0], model_path)
    return 0


def _write_report(report, out_dir, fmt):
    os.makedirs(out_dir, exist_ok=True)
    if fmt == "json":
        path = os.path.join(out_dir, "report.json")
        with open(path, "w") as fh:
            fh.write(report.to_json_text())
    else:
        path = os.path.join(out_dir, "report.csv")
        with open(path, "w") as fh:
            fh.write(report.to_csv_text())
    return path


def cmd_eval_link(args, argv):
    started = time.perf_counter()
    g = _load_graph(args.data)
    model = Model.load(_resolve_model_path(args.model))
    report = eval_link_prediction(g, model, repeats=args.repeats, seed=args.seed,
                                  fine_tune_steps=args.fine_tune_steps)
    path = _write_report(report, args.out, args.format)
    write_manifest(os.path.join(args.out, "manifest.json"), "eval-link", argv,
                   config={"repeats": args.repeats, "fine_tune_steps": args.fine_tune_steps,
                           "format": args.format},
                   seed=args.seed, inputs={"data": args.data, "model": args.model},
                   outputs=[path], wall_s=time.perf_counter() - started)
    log.info("link prediction: roc_auc %.4f +- %.4f -> %s",
             report.mean("roc_auc"), report.std("roc_auc"), path)
    return 0


def cmd_eval_node(args, argv):
    started = time.perf_counter()
    g = _load_graph(args.data)
    model = Model.load(_resolve_model_path(args.model))
    report = eval_node_classification(g, model, repeats=args.repeats, seed=args.seed)
    for w in report.warnings:
        log.warning("%s", w)
    path = _write_report(report, args.out, args.format)
    write_manifest(os.path.join(args.out, "manifest.json"), "eval-node", argv,
                   config={"repeats": args.repeats, "format": args.format},
                   seed=args.seed, inputs={"data": args.data, "model": args.model},
                   outputs=[path], wall_s=time.perf_counter() - started)
    log.info("node classification: weighted_f1 %.4f +- %.4f -> %s",
             report.mean("weighted_f1"), report.std("weighted_f1"), path)
    return 0


def cmd_sweep(args, argv):
    started = time.perf_counter()
    g = _load_graph(args.data)
    param = CONFIG_ALIASES.get(args.param, args.param)
    if param not in ("layers", "lookback"):
        raise UsageError(f"sweep parameter must be layers/L or lookback/K, got {args.param!r}")
    try:
        sweep_values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values must be comma-separated integers, got {args.values!r}") from None
    if not sweep_values:
        raise UsageError("--values is empty")
    if args.metric not in ("roc_auc", "pr_auc", "f1"):
        raise UsageError(f"unknown sweep metric {args.metric!r}")
    base = resolve_config(args.config, _config_overrides(args))
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for value in sweep_values:
        config = resolve_config(args.config, {**_config_overrides(args), param: value})
        model = train(g, config)
        report = eval_link_prediction(g, model, repeats=args.repeats, seed=config.seed,
                                      fine_tune_steps=args.fine_tune_steps)
        rows.append((value, report.mean(args.metric), report.std(args.metric)))
        log.info("sweep %s=%d: %s %.4f +- %.4f", param, value, args.metric,
                 rows[-1][1], rows[-1][2])
    csv_path = os.path.join(args.out, "sweep.csv")
    with open(csv_path, "w") as fh:
        fh.write(f"param,value,{args.metric}_mean,{args.metric}_std,repeats\n")
        for value, mean, std in rows:
            fh.write(f"{param},{value},{_fmt(mean)},{_fmt(std)},{args.repeats}\n")
    write_manifest(os.path.join(args.out, "manifest.json"), "sweep", argv,
                   config={**base.to_dict(), "param": param, "values": sweep_values,
                           "metric": args.metric, "repeats": args.repeats,
                           "fine_tune_steps": args.fine_tune_steps},
                   seed=base.seed, inputs={"data": args.data}, outputs=[csv_path],
                   wall_s=time.perf_counter() - started)
    return 0


def cmd_dump_embeddings(args, argv):
    started = time.perf_counter()
    g = _load_graph(args.data)
    model = Model.load(_resolve_model_path(args.model))
    cfg = model.config
    dim = cfg.dim
    header = ["node", "timestamp", "layer"] + [f"dim{i}" for i in range(dim)]
    if args.predicted:
        header.append("predicted")
    lines = [",".join(header)]
    if args.predicted:
        target = args.timestamp if args.timestamp is not None else g.num_timestamps
        pred = predict_embeddings(model, g, target)
        for v in range(g.num_nodes):
            cells = [str(v), str(target), "-1"] + [_fmt(x) for x in pred[v]] + ["1"]
            lines.append(",".join(cells))
    else:
        stamps = [args.timestamp] if args.timestamp is not None \
            else list(range(1, g.num_timestamps + 1))
        for t in stamps:
            if not 1 <= t <= g.num_timestamps:
                raise UsageError(f"--timestamp {t} outside 1..{g.num_timestamps}")
            tape = Tape()
            le = embed_snapshot(tape, g.snapshot(t), model.spatial,
                                use_activeness=not cfg.no_activeness)
            for layer, emb in enumerate(le.embeddings):
                for v in range(g.num_nodes):
                    cells = [str(v), str(t), str(layer)] + [_fmt(x) for x in emb.data[v]]
                    lines.append(",".join(cells))
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    write_manifest(args.out + ".manifest.json", "dump-embeddings", argv,
                   config={"timestamp": args.timestamp, "predicted": bool(args.predicted)},
                   seed=None, inputs={"data": args.data, "model": args.model},
                   outputs=[args.out], wall_s=time.perf_counter() - started)
    log.info("wrote %d rows -> %s", len(lines) - 1, args.out)
    return 0


def cmd_rerun(args, argv):
    if not os.path.isfile(args.manifest):
        raise UsageError(f"manifest not found: {args.manifest}")
    with open(args.manifest) as fh:
        doc = json.load(fh)
    stored = doc.get("argv")
    if not stored or not isinstance(stored, list):
        raise UsageError(f"{args.manifest}: no argv recorded")
    log.info("rerunning: %s", " ".join(stored))
    return main(stored)


# -- parser -------------------------------------------------------------------

def _add_train_config_flags(p):
    p.add_argument("--config", help="key=value config file (keys: d/L/K/R/batch/lr or full names)")
    p.add_argument("--dim", type=int, help="embedding dimension (default 100)")
    p.add_argument("--layers", type=int, help="aggregation layers (default 3)")
    p.add_argument("--lookback", type=int, help="attention window length (default 3)")
    p.add_argument("--negatives", type=int, help="noise nodes per positive (default 1)")
    p.add_argument("--batch", type=int, dest="batch_size", help="mini-batch size (default 50)")
    p.add_argument("--lr", type=float, dest="learning_rate", help="Adam learning rate (default 1e-4)")
    p.add_argument("--epochs", type=int, help="training epochs (default 10)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--no-activeness", action="store_const", const=True, default=None,
                   dest="no_activeness", help="disable the activeness gate")
    p.add_argument("--no-temporal", action="store_const", const=True, default=None,
                   dest="no_temporal", help="disable temporal prediction")
    p.add_argument("--edge-scope", choices=("all", "new"), dest="edge_scope",
                   help="train on all edges of the target snapshot or only new ones")
    p.add_argument("--workers", type=int, default=1,
                   help="advisory; execution is single-worker deterministic")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynembed",
        description="Dynamic attributed network embedding: train, predict, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic benchmark dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--nodes", type=int, default=200)
    p.add_argument("--communities", type=int, default=4)
    p.add_argument("--snapshots", type=int, default=10)
    p.add_argument("--attr-dim", type=int, default=16, dest="attr_dim")
    p.add_argument("--hub-fraction", type=float, default=0.1, dest="hub_fraction")
    p.add_argument("--noise-sigma", type=float, default=1.0, dest="noise_sigma")
    p.add_argument("--migrate-fraction", type=float, default=0.0, dest="migrate_fraction")
    p.add_argument("--attr-scale", type=float, default=3.0, dest="attr_scale")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_train_config_flags(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("fine-tune", help="fine-tune on revealed final-snapshot edges")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=30)
    p.add_argument("--fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_fine_tune)

    p = sub.add_parser("eval-link", help="dynamic link-prediction protocol")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fine-tune-steps", type=int, default=30, dest="fine_tune_steps")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(handler=cmd_eval_link)

    p = sub.add_parser("eval-node", help="changed-node classification protocol")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(handler=cmd_eval_node)

    p = sub.add_parser("sweep", help="sensitivity sweep over layers (L) or lookback (K)")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--param", required=True, help="layers/L or lookback/K")
    p.add_argument("--values", required=True, help="comma-separated integers")
    p.add_argument("--metric", default="roc_auc")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--fine-tune-steps", type=int, default=30, dest="fine_tune_steps")
    _add_train_config_flags(p)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("dump-embeddings", help="write embeddings as CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--timestamp", type=int, default=None)
    p.add_argument("--predicted", action="store_true",
                   help="dump the merged next-timestamp prediction instead of observed layers")
    p.set_defaults(handler=cmd_dump_embeddings)

    p = sub.add_parser("rerun", help="re-execute a command from its manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(handler=cmd_rerun)

    return parser


def _setup_logging():
    level = {"debug": logging.DEBUG, "info": logging.INFO, "warning": logging.WARNING,
             "quiet": logging.ERROR}.get(os.environ.get("DYNEMBED_LOG", "info").lower(),
                                         logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(level)


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    argv = list(argv)
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args, argv)
    except UsageError as exc:
        print(f"dynembed: {exc}", file=sys.stderr)
        return 2
    except GraphFormatError as exc:
        print(f"dynembed: bad dataset: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure, one-line diagnostic per contract
        print(f"dynembed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
