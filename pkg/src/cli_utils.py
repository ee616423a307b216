"""Base class and helpers shared by the command-line entry points."""
from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import ujson
from pydantic import ValidationError

from .config import get_settings
from .lln import SingularityError
from .logging_setup import get_logger, run_context
from .normalization import to_builtin
from .schemas import RunConfig
from .storage import OutputStore

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_TOLERANCE = 2
EXIT_SINGULAR = 3


class CommandError(Exception):
    def __init__(self, exit_code: int, message: str) -> None:
        self.exit_code = exit_code
        self.message = message
        super().__init__(message)


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    try:
        data = ujson.loads(Path(path).read_text(encoding="utf-8") or "{}")
    except ValueError as exc:
        raise CommandError(EXIT_USAGE, f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise CommandError(EXIT_USAGE, f"config file {path} must hold a flat JSON object")
    return data


def merge_payload(file_payload: Mapping[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Command-line values win over config-file values; unset flags are ignored."""
    merged = dict(file_payload)
    merged.update({key: value for key, value in overrides.items() if value is not None})
    return merged


def describe_validation_error(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        location = ".".join(str(item) for item in error["loc"]) or "config"
        parts.append(f"{location}: {error['msg']}")
    return "invalid config: " + "; ".join(parts)


def store_for(config: RunConfig) -> OutputStore:
    return OutputStore(Path(config.out) if config.out else get_settings().output_dir)


class CommandParser(argparse.ArgumentParser):
    """Usage errors exit with status 1; 2 is reserved for tolerance failures."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat JSON config file; flags override its values")
    parser.add_argument("--dist", help="poisson:LAM | regular:R | negbin:R,P | table:K=P,...")
    parser.add_argument("--n", type=int)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--alpha-s", dest="alpha_s", type=float)
    parser.add_argument("--T", dest="T", type=float)
    parser.add_argument("--h", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--replicas", type=int)
    parser.add_argument("--mode", help="multigraph | erased | rejection_simple")
    parser.add_argument("--out")
    parser.add_argument("--threads", type=int)


class BaseCommand:
    name = ""
    summary = ""
    extra_flags: Dict[str, Dict[str, Any]] = {}

    def run(self, payload: Dict[str, Any]) -> Dict[str, Any]:  # pragma: no cover - interface
        raise CommandError(EXIT_USAGE, f"command {self.name} is not implemented")

    def build_parser(self, subparsers: Any) -> argparse.ArgumentParser:
        parser = subparsers.add_parser(self.name, help=self.summary)
        add_common_flags(parser)
        for flag, options in self.extra_flags.items():
            parser.add_argument(flag, **options)
        parser.set_defaults(command=self)
        return parser

    def payload_from_args(self, args: argparse.Namespace) -> Dict[str, Any]:
        overrides = {key: value for key, value in vars(args).items() if key not in ("config", "command", "command_name")}
        return merge_payload(load_config_file(args.config), overrides)

    def main(self, args: argparse.Namespace) -> int:
        try:
            payload = self.payload_from_args(args)
        except CommandError as exc:
            return self._fail(exc.exit_code, exc.message)
        except OSError as exc:
            return self._fail(EXIT_USAGE, str(exc))
        return self.execute(payload)

    def execute(self, payload: Dict[str, Any]) -> int:
        """Run the command and map the outcome onto an exit status."""
        try:
            with run_context(command=self.name):
                result = self.run(payload)
        except ValidationError as exc:
            return self._fail(EXIT_USAGE, describe_validation_error(exc))
        except CommandError as exc:
            return self._fail(exc.exit_code, exc.message)
        except SingularityError as exc:
            return self._fail(EXIT_SINGULAR, f"numeric singularity: {exc}")
        except (ValueError, OSError) as exc:
            return self._fail(EXIT_USAGE, str(exc))
        except Exception as exc:  # pragma: no cover - unexpected
            logger.error("command_error", command=self.name, error=str(exc), traceback=traceback.format_exc())
            return self._fail(EXIT_USAGE, f"internal error: {exc}")

        sys.stdout.write(ujson.dumps(to_builtin(result), sort_keys=True) + "\n")
        if result.get("passed") is False:
            logger.warning("tolerance_failure", command=self.name)
            return EXIT_TOLERANCE
        return EXIT_OK

    def _fail(self, code: int, message: str) -> int:
        logger.error("command_failed", command=self.name, exit_code=code, message=message)
        sys.stderr.write(f"{self.name}: {message}\n")
        return code
