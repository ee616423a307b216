"""Command-line dispatcher: ``python -m commands <command> [flags]``."""
from __future__ import annotations

import sys
from typing import List, Optional

from src.cli_utils import BaseCommand, CommandParser

from . import compare, cost, diffusion, fclt, lln, profile, simulate

COMMANDS: List[BaseCommand] = [
    simulate.handler(),
    lln.handler(),
    fclt.handler(),
    profile.handler(),
    compare.handler(),
    cost.handler(),
    diffusion.handler(),
]


def build_parser() -> CommandParser:
    parser = CommandParser(prog="python -m commands", description="SI epidemics on configuration-model graphs")
    subparsers = parser.add_subparsers(dest="command_name", required=True)
    for command in COMMANDS:
        command.build_parser(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.command.main(args)


if __name__ == "__main__":
    sys.exit(main())
