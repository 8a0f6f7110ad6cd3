"""Command-line entry point: ``push-mpc line-track`` and ``push-mpc manipulate``."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from importlib import resources
from typing import Optional, Sequence

from .config import ConfigError, load_config
from .harness import LINE_TRACK, MANIPULATE, run_line_tracking, run_manipulation

EXIT_OK, EXIT_TASK_FAILED, EXIT_CONFIG = 0, 2, 3


def default_config_path(scenario: str) -> str:
    name = "line_track.cfg" if scenario == LINE_TRACK else "manipulate.cfg"
    return str(resources.files("pushmpc") / "configs" / name)


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="push-mpc", description="Pushing MPC experiments in a quasistatic simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    lt = sub.add_parser("line-track", help="track a straight line from a lateral offset")
    lt.add_argument("--phi", type=float, help="initial lateral error, m")
    lt.add_argument("--constraint", type=_on_off, help="pushing constraint on|off")

    mp = sub.add_parser("manipulate", help="multi-push transport task")

    for p in (lt, mp):
        p.add_argument("--config", help="key = value config file (defaults to the shipped one)")
        p.add_argument("--out", help="output directory for the CSV log and metrics")
        p.add_argument("--seed", type=int, help="seed for measurement noise")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    scenario = LINE_TRACK if args.command == "line-track" else MANIPULATE
    try:
        cfg = load_config(args.config or default_config_path(scenario))
        if cfg.scenario != scenario:
            raise ConfigError(f"config is for scenario {cfg.scenario!r}, not {scenario!r}")
        overrides = {}
        if args.out is not None:
            overrides["out_dir"] = args.out
        if args.seed is not None:
            overrides["seed"] = args.seed
        if scenario == LINE_TRACK:
            if args.phi is not None:
                overrides["phi"] = args.phi
            if args.constraint is not None:
                overrides["constraint_enabled"] = args.constraint
        cfg = replace(cfg, **overrides)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    metrics = run_line_tracking(cfg) if scenario == LINE_TRACK else run_manipulation(cfg)
    for key, value in metrics.as_dict().items():
        print(f"{key} = {value}")
    return EXIT_OK if metrics.success else EXIT_TASK_FAILED


if __name__ == "__main__":
    sys.exit(main())
