"""Append-only provenance journal, one JSON document per line."""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Callable, Iterator, Optional

FIELDS = ("ts", "kind", "actor", "worker", "job", "carvpath", "mime", "ext", "state", "digest", "parent")
KINDS = frozenset({"register", "accept", "forward", "child", "submit", "freeze", "complete", "unregister", "hash"})


class Journal:
    def __init__(self, path: Optional[str | Path] = None, clock: Callable[[], float] = time.time) -> None:
        self.path = Path(path) if path is not None else None
        self.clock = clock
        self.records: list[dict] = []
        self._lock = threading.Lock()
        self._fh = open(self.path, "a", encoding="utf-8") if self.path is not None else None

    def append(self, kind: str, **fields: object) -> dict:
        if kind not in KINDS:
            raise ValueError(f"unknown journal record kind {kind!r}")
        with self._lock:
            record = {"ts": round(self.clock(), 6), "kind": kind}
            for name in FIELDS[2:]:
                value = fields.get(name)
                if value is not None:
                    record[name] = value
            self.records.append(record)
            if self._fh is not None:
                self._fh.write(json.dumps(record, separators=(",", ":")) + "\n")
                self._fh.flush()
            return record

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def read_journal(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def without_timestamps(records: list[dict]) -> list[dict]:
    return [{k: v for k, v in r.items() if k != "ts"} for r in records]
