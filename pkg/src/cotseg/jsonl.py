"""JSONL reading/writing shared by every pipeline stage.

Files written by the pipeline may start with a header object (marked by the
reserved ``__header__`` key) carrying stage name and config hash; plain data
rows follow, one object per line.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable

HEADER_KEY = "__header__"


class JsonlError(ValueError):
    """Malformed JSONL input; message names the file and line."""

    def __init__(self, path: Any, line_no: int, reason: str):
        super().__init__(f"{path}: line {line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason


class RecordError(ValueError):
    """A structurally valid row with bad content; indexed by data record."""

    def __init__(self, path: Any, index: int, reason: str):
        super().__init__(f"{path}: record {index}: {reason}")
        self.path = str(path)
        self.index = index
        self.reason = reason


def dumps(obj: Any) -> str:
    # sort_keys keeps artifacts byte-stable across runs
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def write_jsonl(path, rows: Iterable[dict], header: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        if header is not None:
            fh.write(dumps({HEADER_KEY: True, **header}) + "\n")
        for row in rows:
            fh.write(dumps(row) + "\n")


def read_jsonl(path) -> tuple[dict | None, list[dict]]:
    """Return ``(header, rows)``; header is None when the file has none."""
    path = Path(path)
    header: dict | None = None
    rows: list[dict] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise JsonlError(path, line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise JsonlError(path, line_no, "expected a JSON object")
            if obj.pop(HEADER_KEY, False):
                if line_no != 1:
                    raise JsonlError(path, line_no, "header object allowed on line 1 only")
                header = obj
            else:
                rows.append(obj)
    return header, rows


def require_fields(row: dict, fields: Iterable[str], path, index: int) -> None:
    for field in fields:
        if field not in row:
            raise RecordError(path, index, f"missing field {field!r}")
