"""Batch command-line harness.

Commands: ingest, synth, train, eval, ablate. Every command is
deterministic given its inputs and --seed, appends one manifest line to
<out-dir>/manifests.jsonl, and exits 0 on success, 1 on usage errors,
2 on data errors, 3 on numeric failure (NaN detected).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

from . import __version__
from .config import (ABLATION_VARIANTS, TrainConfig, config_hash, load_config)
from .errors import (CausalityError, CheckpointError, ChronoRecError, ConfigError,
                     DataError, NumericError, ParseError)
from .evaluate import EvalConfig, evaluate, write_per_event_csv
from .graph import build_graph, chronological_split, truncate_latest
from .ingest import (dataset_fingerprint, load_bundle, parse_event_csv, save_bundle)
from .model import Recommender, load_checkpoint, save_checkpoint
from .synth import generate_periodic, generate_shift, write_rows_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _append_manifest(out_dir: Path, entry: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    entry = dict(entry, version=__version__)
    with open(out_dir / "manifests.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _config_overrides(args) -> dict:
    keys = [f.name for f in dataclasses.fields(TrainConfig)]
    return {k: getattr(args, k, None) for k in keys}


def _add_train_config_flags(parser) -> None:
    parser.add_argument("--config", type=Path, help="flat key = value config file")
    parser.add_argument("--d", type=int)
    parser.add_argument("--d-t", dest="d_t", type=int)
    parser.add_argument("--epsilon", type=int)
    parser.add_argument("--layers", type=int)
    parser.add_argument("--heads", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--l2", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--aggregation", choices=["last", "mean"])
    parser.add_argument("--time-variant", dest="time_variant",
                        choices=["bochner", "projection", "position"])
    parser.add_argument("--attention", choices=["dsacf", "sum"])
    parser.add_argument("--use-short-term", dest="use_short_term",
                        choices=["true", "false"])
    parser.add_argument("--neighbor-strategy", dest="neighbor_strategy",
                        choices=["most_recent", "uniform"])
    parser.add_argument("--activation", choices=["softplus", "relu", "tanh"])
    parser.add_argument("--train-proportion", dest="train_proportion", type=float)


def build_parser() -> _Parser:
    parser = _Parser(prog="chronorec",
                     description="Continuous-time sequential recommendation harness")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse an event CSV into a dataset bundle")
    p.add_argument("input", type=Path)
    p.add_argument("--format", choices=["jodie", "generic"], default="generic")
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("synth", help="generate a synthetic event CSV")
    p.add_argument("--kind", choices=["periodic", "shift"], required=True)
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--items", type=int, required=True)
    p.add_argument("--events-per-user", type=int, required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--period", type=int, help="cycle length for periodic (default: all items)")
    p.add_argument("--clusters", type=int, default=2, help="item clusters for shift")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, help="manifest directory (default: --out parent)")

    p = sub.add_parser("train", help="train on the chronological train split of a bundle")
    p.add_argument("bundle", type=Path)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--ratios", default="0.8,0.1,0.1",
                   help="train,val,test chronological split ratios")
    p.add_argument("--variant", choices=list(ABLATION_VARIANTS), default="full")
    p.add_argument("--threads", type=int, default=1)
    _add_train_config_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a bundle partition")
    p.add_argument("bundle", type=Path)
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--partition", choices=["val", "test"], default="test")
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--negatives", default="500", help="negative sample count or 'all'")
    p.add_argument("--k-list", default="10,20")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-warm-replay", action="store_true")
    p.add_argument("--per-event", type=Path, help="write per-event ranks CSV here")

    p = sub.add_parser("ablate", help="train and evaluate all model variants")
    p.add_argument("bundle", type=Path)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--negatives", default="500")
    p.add_argument("--k-list", default="10,20")
    p.add_argument("--threads", type=int, default=1)
    _add_train_config_flags(p)
    return parser


def _parse_ratios(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise _UsageError(f"bad --ratios value {text!r}") from None
    if len(parts) != 3:
        raise _UsageError(f"--ratios needs three comma-separated values, got {text!r}")
    return parts


def _parse_negatives(text: str):
    if text == "all":
        return "all"
    try:
        return int(text)
    except ValueError:
        raise _UsageError(f"--negatives must be an integer or 'all', got {text!r}") from None


def _parse_k_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise _UsageError(f"bad --k-list value {text!r}") from None


def _load_train_config(args) -> TrainConfig:
    overrides = _config_overrides(args)
    cfg = load_config(getattr(args, "config", None), overrides)
    variant = getattr(args, "variant", None)
    if variant:
        cfg = cfg.apply_variant(variant)
    return cfg


def cmd_ingest(args) -> int:
    tic = time.perf_counter()
    events, n_users, n_items, d_e, user_map, item_map = parse_event_csv(args.input, args.format)
    save_bundle(args.out_dir, events, n_users, n_items, d_e, user_map, item_map)
    seconds = time.perf_counter() - tic
    print(f"ingested {len(events)} events: n={n_users} users, r={n_items} items, d_e={d_e}")
    _append_manifest(args.out_dir, {
        "command": "ingest",
        "input": str(args.input),
        "format": args.format,
        "fingerprint": dataset_fingerprint(events),
        "dims": {"n_users": n_users, "n_items": n_items, "d_e": d_e},
        "seconds": {"total": seconds},
        "outputs": [str(args.out_dir)],
    })
    return EXIT_OK


def cmd_synth(args) -> int:
    tic = time.perf_counter()
    if args.kind == "periodic":
        rows = generate_periodic(args.users, args.items, args.events_per_user,
                                 args.seed, args.period)
    else:
        rows = generate_shift(args.users, args.items, args.events_per_user,
                              args.seed, args.clusters)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_rows_csv(args.out, rows)
    print(f"wrote {len(rows)} {args.kind} events to {args.out}")
    _append_manifest(args.out_dir or args.out.parent, {
        "command": "synth",
        "kind": args.kind,
        "seed": args.seed,
        "sizes": {"users": args.users, "items": args.items,
                  "events_per_user": args.events_per_user},
        "seconds": {"total": time.perf_counter() - tic},
        "outputs": [str(args.out)],
    })
    return EXIT_OK


def _prepare_split(bundle_dir, ratios, train_proportion):
    events, n_users, n_items, d_e, _meta = load_bundle(bundle_dir)
    train, val, test = chronological_split(events, ratios)
    train = truncate_latest(train, train_proportion)
    graph = build_graph(train + val + test, n_users, n_items, d_e)
    n = len(train)
    return graph, graph.events[:n], graph.events[n : n + len(val)], graph.events[n + len(val) :]


def cmd_train(args) -> int:
    cfg = _load_train_config(args)
    ratios = _parse_ratios(args.ratios)
    tic = time.perf_counter()
    graph, train_events, _val, _test = _prepare_split(args.bundle, ratios,
                                                      cfg.train_proportion)
    load_seconds = time.perf_counter() - tic

    model = Recommender(graph.n_users, graph.n_items, graph.d_e, cfg)
    tic = time.perf_counter()
    stats = model.fit(graph, train_events,
                      progress=lambda row: print(
                          f"epoch {row['epoch']}: loss={row['mean_loss']:.6f} "
                          f"({row['seconds']:.2f}s)"))
    train_seconds = time.perf_counter() - tic

    args.out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = args.out_dir / "checkpoint.npz"
    save_checkpoint(ckpt, model, getattr(model, "_optimizer", None))
    stats_path = args.out_dir / "epoch_stats.csv"
    with open(stats_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "pairs", "seconds"])
        for row in stats:
            writer.writerow([row["epoch"], repr(row["mean_loss"]), row["pairs"],
                             f"{row['seconds']:.3f}"])
    _append_manifest(args.out_dir, {
        "command": "train",
        "bundle": str(args.bundle),
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "variant": args.variant,
        "fingerprint": dataset_fingerprint(train_events),
        "seconds": {"load": load_seconds, "train": train_seconds},
        "outputs": [str(ckpt), str(stats_path)],
    })
    print(f"saved checkpoint to {ckpt}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ratios = _parse_ratios(args.ratios)
    model = load_checkpoint(args.checkpoint)
    graph, train_events, val_events, test_events = _prepare_split(
        args.bundle, ratios, model.config.train_proportion)
    if args.partition == "val":
        prior, part = train_events, val_events
    else:
        prior, part = train_events + val_events, test_events

    eval_cfg = EvalConfig(k_list=_parse_k_list(args.k_list),
                          negative_samples=_parse_negatives(args.negatives),
                          seed=args.seed, warm_replay=not args.no_warm_replay,
                          threads=args.threads)
    per_event_rows = []
    sink = (lambda ev, rank: per_event_rows.append(
        (ev.seq_no, ev.user_id, ev.item_id, rank))) if args.per_event else None
    report = evaluate(model, graph, part, eval_cfg, prior_events=prior,
                      per_event_sink=sink)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = args.out_dir / "metrics.json"
    # wall-clock lives in the manifest so metrics.json is run-to-run identical
    metrics_path.write_text(report.to_json(include_timings=False))
    if args.per_event:
        write_per_event_csv(args.per_event, per_event_rows)
    _append_manifest(args.out_dir, {
        "command": "eval",
        "bundle": str(args.bundle),
        "checkpoint": str(args.checkpoint),
        "partition": args.partition,
        "eval_config": {"k_list": list(eval_cfg.k_list),
                        "negative_samples": eval_cfg.negative_samples,
                        "seed": eval_cfg.seed, "warm_replay": eval_cfg.warm_replay},
        "metrics": report.to_dict(include_timings=False),
        "seconds": report.seconds,
        "degenerate_events": report.degenerate_events,
        "outputs": [str(metrics_path)],
    })
    print(report.to_json(include_timings=False), end="")
    return EXIT_OK


def cmd_ablate(args) -> int:
    base = _load_train_config(args)
    ratios = _parse_ratios(args.ratios)
    eval_kwargs = dict(k_list=_parse_k_list(args.k_list),
                       negative_samples=_parse_negatives(args.negatives),
                       threads=args.threads)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    table = []
    seconds = {}
    for variant in ABLATION_VARIANTS:
        cfg = base.apply_variant(variant)
        tic = time.perf_counter()
        graph, train_events, val_events, test_events = _prepare_split(
            args.bundle, ratios, cfg.train_proportion)
        model = Recommender(graph.n_users, graph.n_items, graph.d_e, cfg)
        model.fit(graph, train_events)
        report = evaluate(model, graph, test_events,
                          EvalConfig(seed=cfg.seed, **eval_kwargs),
                          prior_events=train_events + val_events)
        seconds[variant] = time.perf_counter() - tic
        row = {"variant": variant, "mrr": report.mrr}
        row.update({f"recall@{k}": v for k, v in report.recall.items()})
        row.update({f"ndcg@{k}": v for k, v in report.ndcg.items()})
        table.append(row)
        print(f"{variant}: " + " ".join(f"{k}={v:.4f}" for k, v in row.items()
                                        if k != "variant"))

    columns = ["variant"] + [c for c in table[0] if c != "variant"]
    out_path = args.out_dir / "ablation.csv"
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in table:
            writer.writerow([row["variant"]] + [repr(row[c]) for c in columns[1:]])
    _append_manifest(args.out_dir, {
        "command": "ablate",
        "bundle": str(args.bundle),
        "config": base.to_dict(),
        "config_hash": config_hash(base),
        "seed": base.seed,
        "seconds": seconds,
        "outputs": [str(out_path)],
    })
    print(f"wrote {out_path}")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    handlers = {"ingest": cmd_ingest, "synth": cmd_synth, "train": cmd_train,
                "eval": cmd_eval, "ablate": cmd_ablate}
    try:
        return handlers[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParseError, DataError, CheckpointError, CausalityError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ChronoRecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
