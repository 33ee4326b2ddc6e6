"""Command line entry point: ``chemo4d run|sweep|ineq|crosscheck <config>``."""
from __future__ import annotations

import argparse
import json
import sys

from .experiments import load_config, parse_masses, run_scenario

COMMANDS = {"run": "single_run", "sweep": "mass_sweep", "ineq": "inequality_suite",
            "crosscheck": "picard_crosscheck"}


def build_parser():
    ap = argparse.ArgumentParser(prog="chemo4d", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", nargs="?", help="INI scenario file (defaults if omitted)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", dest="output_dir")
        p.add_argument("--grid-n", dest="n", type=int)
        p.add_argument("--grid-R", dest="R", type=float)
        p.add_argument("--dt", type=float)
        if name == "sweep":
            p.add_argument("--masses", help="comma-separated masses (units from the config)")
        if name == "ineq":
            p.add_argument("--n", dest="n_witnesses", type=int)
        if name == "crosscheck":
            p.add_argument("--T", type=float)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    over = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    if over.get("masses") is not None:
        over["masses"] = parse_masses(over["masses"])
    try:
        cfg = load_config(args.config, experiment=COMMANDS[args.command], **over)
    except (OSError, ValueError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    summary = run_scenario(cfg)
    if not summary["ok"]:
        err = summary.get("error", {"type": "CheckFailed", "message": "see summary.json"})
        print(json.dumps({"error": err["type"], "message": err["message"],
                          "output_dir": cfg.output_dir}), file=sys.stderr)
        return 1
    print(f"{args.command}: ok ({summary['wall_time']:.2f}s) -> {cfg.output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
