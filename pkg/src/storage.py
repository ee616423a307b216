"""Atomic JSON/CSV/text output store on local disk."""
from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, Sequence

import ujson

from .logging_setup import get_logger
from .normalization import format_cell, to_builtin

logger = get_logger(__name__)


class OutputStore:
    def __init__(self, root: Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path_for(self, key: str) -> Path:
        return self.root.joinpath(key)

    def _write_atomic(self, key: str, text: str) -> Path:
        path = self._path_for(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=str(path.parent))
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
                handle.write(text)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
        return path

    def put_json(self, key: str, data: Dict[str, Any]) -> Path:
        payload = to_builtin(data)
        text = ujson.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
        path = self._write_atomic(key, text)
        logger.debug("output_put_json", key=key, path=str(path))
        return path

    def put_csv(self, key: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        count = 0
        for row in rows:
            writer.writerow([format_cell(value) for value in row])
            count += 1
        path = self._write_atomic(key, buffer.getvalue())
        logger.debug("output_put_csv", key=key, path=str(path), rows=count)
        return path

    def put_text(self, key: str, text: str) -> Path:
        path = self._write_atomic(key, text)
        logger.debug("output_put_text", key=key, path=str(path))
        return path
