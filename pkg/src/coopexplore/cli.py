"""Command-line runner: single runs and cartesian sweeps.

    python3 -m coopexplore --config cfg.json --out runs/ --sweep agents=1,2,4

Each run writes ``metrics.csv``, ``summary.json`` and ``config.json`` (the
resolved configuration) into its own directory.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import parse_config, set_path, to_dict
from .coordination import run_experiment
from .errors import ConfigError, StateError, StructuralError

OUT_ENV = "COOPEXPLORE_OUT"


def parse_sweep(spec: str) -> tuple[str, list]:
    """``key=v1,v2`` -> (key, [v1, v2]); values are JSON where possible."""
    key, sep, rhs = spec.partition("=")
    if not sep or not key or not rhs:
        raise ConfigError("--sweep", f"expected key=v1,v2,..., got {spec!r}")
    try:
        values = json.loads(f"[{rhs}]")
    except json.JSONDecodeError:
        values = []
        for item in rhs.split(","):
            try:
                values.append(json.loads(item))
            except json.JSONDecodeError:
                values.append(item)
    return key, values


def _label(value) -> str:
    if isinstance(value, dict):
        text = "-".join(f"{k}-{value[k]}" for k in sorted(value))
    elif isinstance(value, list):
        text = "-".join(map(str, value))
    else:
        text = str(value)
    return re.sub(r"[^A-Za-z0-9.=-]+", "-", text).strip("-")


def expand(doc: dict, sweeps: list[tuple[str, list]]) -> list[tuple[str, dict]]:
    """Cartesian product of sweep values; returns (subdirectory name, document)."""
    if not sweeps:
        return [("", doc)]
    points = []
    keys = [k for k, _ in sweeps]
    for combo in itertools.product(*(v for _, v in sweeps)):
        point = doc
        parts = []
        for key, value in zip(keys, combo):
            point = set_path(point, key, value)
            parts.append(f"{key}={_label(value)}")
        points.append(("_".join(parts), point))
    return points


def write_run(cfg, out_dir: Path) -> dict:
    metrics = run_experiment(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.csv").write_text(metrics.to_csv())
    summary = metrics.summary() | {"defaults_applied": list(cfg.defaults_applied)}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    (out_dir / "config.json").write_text(json.dumps(to_dict(cfg), indent=2, sort_keys=True))
    return summary


def _run_point(args):
    doc, out_dir = args
    cfg = parse_config(doc)
    write_run(cfg, Path(out_dir))
    return out_dir


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coopexplore", description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True, help="JSON experiment document")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV} or 'runs')")
    p.add_argument("--sweep", action="append", default=[], metavar="KEY=V1,V2",
                   help="dotted config key and values; repeat for a cartesian sweep")
    p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = json.loads(Path(args.config).read_text())
        if args.seed is not None:
            doc["seed"] = args.seed
        out = args.out or os.environ.get(OUT_ENV) or doc.get("output") or "runs"
        doc.pop("output", None)
        points = expand(doc, [parse_sweep(s) for s in args.sweep])
        jobs = []
        for name, point in points:
            parse_config(point)  # fail fast before any run starts
            jobs.append((point, str(Path(out) / name)))
        if args.threads > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(args.threads) as pool:
                done = list(pool.map(_run_point, jobs))
        else:
            done = [_run_point(j) for j in jobs]
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except (StateError, StructuralError, ArithmeticError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 4
    for d in done:
        print(d)
    return 0


if __name__ == "__main__":
    sys.exit(main())
