"""Command-line experiment runner.

    gencfl run   --config PATH [--mode genetic_cfl|generic_fl|both] [--seed N] [--out DIR]
    gencfl sweep --config PATH [--seed N] [--out DIR]

``run`` writes rounds.csv, clusters.json and manifest.json; ``sweep`` writes
sweep.csv and manifest.json. Exit codes: 0 success, 1 bad config, 2 dataset
problem, 3 divergence the per-client loss cap could not absorb.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import sweep as dbscan_sweep
from .config import ConfigError, ExperimentConfig, config_to_dict, load_config
from .data import DatasetError
from .engine import (Federation, RoundMetrics, THREADS_ENV, cluster_metric, broadcast_round,
                     load_datasets, resolve_threads, run_rounds, setup_federation)
from .nn import DivergenceError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3

ROUNDS_COLUMNS = ("mode", "round", "accuracy", "loss")
SWEEP_COLUMNS = ("epsilon", "min_pts", "clusters_raw", "clusters_promoted")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _csv_text(header, rows) -> str:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _write(path: Path, text: str) -> str:
    path.write_bytes(text.encode("utf-8"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def rounds_rows(mode: str, metrics: list[RoundMetrics]) -> list[tuple]:
    return [(mode, m.round, repr(m.server_accuracy), repr(m.server_loss)) for m in metrics]


def _round_json(m: RoundMetrics) -> dict:
    return {
        "round": m.round,
        "accuracy": m.server_accuracy,
        "loss": m.server_loss,
        "clusters": [
            {
                "cluster_id": r.cluster_id,
                "clients": list(r.clients),
                "members": [h.as_dict() for h in r.members],
                "losses": list(r.losses),
            }
            for r in m.per_cluster
        ],
    }


def fed_json(fed: Federation) -> dict:
    a = fed.assignment
    return {
        "clients": [c.index for c in fed.clients],
        "shard_sizes": [int(len(c.shard)) for c in fed.clients],
        "assignment": None if a is None else {
            "labels": list(a.labels),
            "raw_labels": list(a.raw_labels),
            "n_clusters": a.n_clusters,
            "n_raw_clusters": a.n_raw_clusters,
        },
        "broadcast": _round_json(fed.broadcast),
        "rounds": [_round_json(m) for m in fed.history],
    }


def _manifest(cfg: ExperimentConfig, command: str, modes, started: str, threads: int,
              outputs: dict) -> dict:
    return {
        "command": command,
        "config": config_to_dict(cfg),
        "seed": cfg.seed,
        "modes": list(modes),
        "threads": threads,
        "started": started,
        "finished": _now(),
        "versions": {
            "gencfl": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "outputs": outputs,
    }


def _prepare(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "mode", None):
        cfg.mode = args.mode
    return cfg.validate()


def cmd_run(args) -> int:
    started = _now()
    cfg = _prepare(args)
    threads = resolve_threads()
    train, test = load_datasets(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows, runs = [], {}
    for mode in cfg.modes:
        fed = setup_federation(cfg, mode, train, test)
        broadcast_round(fed, threads=threads)
        metrics = run_rounds(fed, threads=threads)
        rows.extend(rounds_rows(mode, metrics))
        runs[mode] = fed_json(fed)
        if metrics:
            print(f"{mode}: final accuracy {metrics[-1].server_accuracy:.4f} "
                  f"loss {metrics[-1].server_loss:.4f}", file=sys.stderr)

    outputs = {
        "rounds.csv": _write(out / "rounds.csv", _csv_text(ROUNDS_COLUMNS, rows)),
        "clusters.json": _write(
            out / "clusters.json",
            json.dumps({"manifest": "manifest.json", "runs": runs}, indent=1) + "\n"),
    }
    manifest = _manifest(cfg, "run", cfg.modes, started, threads, outputs)
    _write(out / "manifest.json", json.dumps(manifest, indent=1) + "\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    started = _now()
    cfg = _prepare(args)
    threads = resolve_threads()
    train, test = load_datasets(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    fed = setup_federation(cfg, "genetic_cfl", train, test)
    broadcast_round(fed, threads=threads)
    points = [c.hp for c in fed.clients]
    table = dbscan_sweep(points, cfg.sweep.epsilons, cfg.sweep.min_pts, cluster_metric(cfg))
    rows = [(repr(r.epsilon), r.min_pts, r.clusters_raw, r.clusters_promoted) for r in table]
    outputs = {"sweep.csv": _write(out / "sweep.csv", _csv_text(SWEEP_COLUMNS, rows))}
    manifest = _manifest(cfg, "sweep", ("genetic_cfl",), started, threads, outputs)
    manifest["population"] = [h.as_dict() for h in points]
    _write(out / "manifest.json", json.dumps(manifest, indent=1) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gencfl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="YAML experiment config")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default="results", help="output directory")

    run = sub.add_parser("run", help="broadcast round plus training rounds")
    common(run)
    run.add_argument("--mode", choices=("genetic_cfl", "generic_fl", "both"), default=None)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="DBSCAN epsilon x min_pts sweep after the broadcast round")
    common(sw)
    sw.set_defaults(func=cmd_sweep)
    p.epilog = f"{THREADS_ENV} caps client-training threads (0 = one per CPU)."
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        # thread-count and shard-size problems surface here
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
