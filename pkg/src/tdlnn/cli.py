"""Command-line entry point: ``tdlnn <command> --config cfg.json [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

from pydantic import ValidationError

from . import experiments
from .config import load_config

log = logging.getLogger("tdlnn")

COMMANDS = {
    "trace": [experiments.run_trace],
    "simulate": [experiments.run_simulate],
    "baseline": [experiments.run_baseline],
    "ber": [experiments.run_ber],
    "sense": [experiments.run_sense],
}


def _fit_runners(cfg):
    runners = [experiments.run_static]
    scenario = cfg.scenario.build()
    if scenario.trajectory is not None and not scenario.events:
        runners.append(experiments.run_mobile)
    return runners


def _report(out: Path) -> str:
    """Plain-text digest of every CSV already present in ``out``."""
    lines = []
    for path in sorted(out.glob("*.csv")):
        if path.name.startswith(("mobile_heatmap", "signals", "static_runs", "sense_pca")):
            continue
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        if not rows:
            continue
        widths = [max(len(r[j]) for r in rows if j < len(r)) for j in range(len(rows[0]))]
        lines.append(f"== {path.name}")
        for r in rows[:60]:
            lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
        if len(rows) > 60:
            lines.append(f"... {len(rows) - 60} more rows")
        lines.append("")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdlnn", description=__doc__)
    parser.add_argument("command", choices=sorted(list(COMMANDS) + ["fit", "report"]))
    parser.add_argument("--config", help="experiment JSON (required except for report)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="output directory (overrides config 'outputs')")
    parser.add_argument("--workers", type=int, help="parallel processes for grid points")
    parser.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    if args.command == "report":
        out = Path(args.out or "out")
        text = _report(out)
        (out / "report.txt").write_text(text, encoding="utf-8")
        if not args.quiet:
            print(text)
        return 0
    if not args.config:
        log.error("--config is required for %s", args.command)
        return 2
    try:
        cfg = load_config(args.config, seed=args.seed, outputs=args.out, workers=args.workers)
    except (ValidationError, ValueError, OSError) as exc:
        log.error("invalid config: %s", exc)
        return 2
    out = Path(cfg.outputs)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    runners = _fit_runners(cfg) if args.command == "fit" else COMMANDS[args.command]
    results = []
    failed = False
    for runner in runners:
        try:
            res = runner(cfg, out)
        except Exception as exc:
            log.error("%s failed: %s", runner.__name__, exc)
            failed = True
            continue
        results.append(res)
        for err in res.errors:
            log.error("%s", err)
        failed |= not res.ok
        for f in res.files:
            log.info("wrote %s", f)
    experiments.write_manifest(out, cfg, results, started)
    return 1 if failed else 0
