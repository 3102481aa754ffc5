"""Command-line entry point.

    pilotwave run --config cfg.toml --out DIR [--seed N] [--set key=value]...
    pilotwave validate --config cfg.toml
    pilotwave list

`run` exits 0 only if every declared check passed. The default output root
comes from the PILOTWAVE_OUT environment variable (fallback: ./runs).
"""

from __future__ import annotations

import argparse
import sys

from .errors import PilotWaveError
from .runner import list_experiments, run, validate


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pilotwave",
                                     description="Preset pilot-wave experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment end to end")
    p_run.add_argument("--config", required=True, help="TOML config path")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the seed")
    p_run.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override one parameter")

    p_val = sub.add_parser("validate", help="check a config without running")
    p_val.add_argument("--config", required=True, help="TOML config path")
    p_val.add_argument("--seed", type=int, default=None)
    p_val.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE")

    sub.add_parser("list", help="catalog of the preset experiments")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for entry in list_experiments():
            print(f"{entry['name']:26s} [{entry['module']}] {entry['description']}")
        return 0
    if args.command == "validate":
        try:
            name, _ = validate(args.config, args.seed, args.overrides)
        except PilotWaveError as exc:
            print(f"invalid: {exc}", file=sys.stderr)
            return 2
        print(f"ok: {name}")
        return 0
    try:
        artifacts = run(args.config, args.out, args.seed, args.overrides)
    except PilotWaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for check in artifacts.summary["checks"]:
        state = "PASS" if check["passed"] else "FAIL"
        print(f"[{state}] {check['name']}: {check['value']:.6g} "
              f"{check['op']} {check['threshold']:.6g}")
    print(f"artifacts: {artifacts.out_dir}")
    return 0 if artifacts.all_passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
