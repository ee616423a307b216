"""structlog configuration shared by the commands and the replica workers.

Records are JSON lines on stderr; stdout and the output directory carry data
only. Worker processes configure themselves on first use of ``get_logger``.
"""
from __future__ import annotations

import logging
import sys
from typing import Any, ContextManager, Dict

import structlog

from .config import get_settings
from .normalization import to_builtin


def _plain_values(logger: Any, method_name: str, event_dict: Dict[str, Any]) -> Dict[str, Any]:
    # numpy scalars and arrays are not JSON serializable
    return {key: to_builtin(value) for key, value in event_dict.items()}


def configure_logging() -> None:
    if getattr(configure_logging, "_configured", False):
        return

    logging.basicConfig(level=get_settings().log_level, format="%(message)s", stream=sys.stderr)

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.format_exc_info,
            _plain_values,
            structlog.processors.JSONRenderer(sort_keys=True),
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    configure_logging._configured = True  # type: ignore[attr-defined]


def run_context(**values: Any) -> ContextManager[Any]:
    """Attach run identifiers (command, seed, replica stream) to records logged inside the block."""
    return structlog.contextvars.bound_contextvars(**values)


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    configure_logging()
    return structlog.get_logger(name).bind(service="netdiff")
