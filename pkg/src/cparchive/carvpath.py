"""CarvPath annotations and byte-set algebra over the flat archive address space.

A CarvPath level token is a ``_``-separated list of fragments. A data fragment
is written ``<offset>+<size>``, a sparse (all zero, no storage) fragment is
``S<size>``. Levels are nested with ``/``: every level is interpreted relative
to the logical byte space of the level before it, so ``a/b`` designates the
bytes of ``b`` taken from inside ``a``. Level tokens longer than
:data:`LONG_PATH_THRESHOLD` characters are replaced by ``D<digest>`` and the
original token is kept in a :class:`LongPathTable`.
"""

from __future__ import annotations

import hashlib
import re
import sqlite3
import threading
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from itertools import accumulate
from typing import Iterable, Iterator, Optional, Protocol

from .errors import ChildOutOfBounds, MalformedToken, UnknownDigest

LONG_PATH_THRESHOLD = 220
MAX_ARCHIVE_OFFSET = 2**64 - 1

_NUM = r"(?:0|[1-9][0-9]*)"
_FRAGMENT_RE = re.compile(rf"(?:(?P<off>{_NUM})\+(?P<size>{_NUM})|S(?P<sparse>{_NUM}))")
_DIGEST_RE = re.compile(r"D([0-9a-f]{64})")


class ByteSet:
    """Immutable set of archive byte positions kept as disjoint half-open intervals."""

    __slots__ = ("_starts", "_ends", "_size")

    def __init__(self, intervals: Iterable[tuple[int, int]] = ()):
        merged: list[list[int]] = []
        for start, end in sorted(iv for iv in intervals if iv[1] > iv[0]):
            if merged and start <= merged[-1][1]:
                if end > merged[-1][1]:
                    merged[-1][1] = end
            else:
                merged.append([start, end])
        self._set([s for s, _ in merged], [e for _, e in merged])

    def _set(self, starts: list[int], ends: list[int]) -> None:
        self._starts = starts
        self._ends = ends
        self._size = sum(e - s for s, e in zip(starts, ends))

    @classmethod
    def _canonical(cls, starts: list[int], ends: list[int]) -> "ByteSet":
        # caller guarantees sorted, disjoint, non-adjacent, non-empty intervals
        bs = cls.__new__(cls)
        bs._set(starts, ends)
        return bs

    @classmethod
    def range(cls, start: int, end: int) -> "ByteSet":
        return cls._canonical([start], [end]) if end > start else cls()

    @property
    def intervals(self) -> list[tuple[int, int]]:
        return list(zip(self._starts, self._ends))

    @property
    def size(self) -> int:
        return self._size

    @property
    def min(self) -> Optional[int]:
        return self._starts[0] if self._starts else None

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return zip(self._starts, self._ends)

    def __bool__(self) -> bool:
        return bool(self._starts)

    def __len__(self) -> int:
        return len(self._starts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ByteSet):
            return NotImplemented
        return self._starts == other._starts and self._ends == other._ends

    def __hash__(self) -> int:
        return hash((tuple(self._starts), tuple(self._ends)))

    def __repr__(self) -> str:
        body = ", ".join(f"[{s},{e})" for s, e in self)
        return f"ByteSet({{{body}}})"

    def __contains__(self, pos: int) -> bool:
        i = bisect_right(self._starts, pos) - 1
        return i >= 0 and pos < self._ends[i]

    def _overlapping(self, start: int, end: int) -> range:
        """Indices of the intervals that overlap ``[start, end)``."""
        lo = bisect_right(self._ends, start)
        hi = bisect_left(self._starts, end, lo)
        return range(lo, hi)

    def union(self, other: "ByteSet") -> "ByteSet":
        if not other:
            return self
        if not self:
            return other
        starts: list[int] = []
        ends: list[int] = []
        a, b = self.intervals, other.intervals
        i = j = 0
        while i < len(a) or j < len(b):
            if j >= len(b) or (i < len(a) and a[i][0] <= b[j][0]):
                s, e = a[i]
                i += 1
            else:
                s, e = b[j]
                j += 1
            if ends and s <= ends[-1]:
                if e > ends[-1]:
                    ends[-1] = e
            else:
                starts.append(s)
                ends.append(e)
        return ByteSet._canonical(starts, ends)

    def intersect(self, other: "ByteSet") -> "ByteSet":
        small, large = (self, other) if len(self) <= len(other) else (other, self)
        starts: list[int] = []
        ends: list[int] = []
        for s, e in small:
            for k in large._overlapping(s, e):
                starts.append(max(s, large._starts[k]))
                ends.append(min(e, large._ends[k]))
        return ByteSet._canonical(starts, ends)

    def subtract(self, other: "ByteSet") -> "ByteSet":
        if not other or not self:
            return self
        starts: list[int] = []
        ends: list[int] = []
        for s, e in self:
            cur = s
            for k in other._overlapping(s, e):
                if other._starts[k] > cur:
                    starts.append(cur)
                    ends.append(other._starts[k])
                cur = max(cur, other._ends[k])
            if cur < e:
                starts.append(cur)
                ends.append(e)
        return ByteSet._canonical(starts, ends)

    def intersection_size(self, other: "ByteSet") -> int:
        small, large = (self, other) if len(self) <= len(other) else (other, self)
        total = 0
        for s, e in small:
            for k in large._overlapping(s, e):
                total += min(e, large._ends[k]) - max(s, large._starts[k])
        return total

    def issubset(self, other: "ByteSet") -> bool:
        return self.intersection_size(other) == self._size

    def isdisjoint(self, other: "ByteSet") -> bool:
        return self.intersection_size(other) == 0

    __or__ = union
    __and__ = intersect
    __sub__ = subtract
    __le__ = issubset


EMPTY = ByteSet()


@dataclass(frozen=True, slots=True)
class Fragment:
    size: int
    offset: Optional[int] = None

    @classmethod
    def data(cls, offset: int, size: int) -> "Fragment":
        return cls(size, offset)

    @classmethod
    def sparse(cls, size: int) -> "Fragment":
        return cls(size, None)

    @property
    def is_sparse(self) -> bool:
        return self.offset is None

    @property
    def end(self) -> int:
        assert self.offset is not None
        return self.offset + self.size

    @property
    def token(self) -> str:
        if self.offset is None:
            return f"S{self.size}"
        return f"{self.offset}+{self.size}"


def canonicalize(fragments: Iterable[Fragment]) -> tuple[Fragment, ...]:
    """Drop empty fragments and merge neighbours that continue each other.

    A list with no bytes left collapses to a single anchored ``<offset>+0``
    fragment, which is the only place a zero size is allowed.
    """
    out: list[Fragment] = []
    anchor: Optional[int] = None
    for frag in fragments:
        if frag.size == 0:
            if anchor is None and frag.offset is not None:
                anchor = frag.offset
            continue
        if out:
            last = out[-1]
            if last.is_sparse and frag.is_sparse:
                out[-1] = Fragment.sparse(last.size + frag.size)
                continue
            if not last.is_sparse and not frag.is_sparse and last.end == frag.offset:
                out[-1] = Fragment.data(last.offset, last.size + frag.size)
                continue
        out.append(frag)
    if not out:
        return (Fragment.data(anchor or 0, 0),)
    return tuple(out)


@dataclass(frozen=True)
class Entity:
    """A canonical ordered fragment list designating bytes in the archive."""

    fragments: tuple[Fragment, ...]

    @classmethod
    def of(cls, fragments: Iterable[Fragment]) -> "Entity":
        return cls(canonicalize(fragments))

    @classmethod
    def data(cls, offset: int, size: int) -> "Entity":
        return cls.of([Fragment.data(offset, size)])

    @classmethod
    def empty(cls, anchor: int = 0) -> "Entity":
        return cls((Fragment.data(anchor, 0),))

    @property
    def total_size(self) -> int:
        return sum(f.size for f in self.fragments)

    @property
    def data_size(self) -> int:
        return sum(f.size for f in self.fragments if not f.is_sparse)

    @property
    def token(self) -> str:
        """Plain level token, never digest-substituted."""
        return "_".join(f.token for f in self.fragments)

    def byte_set(self) -> ByteSet:
        return byte_set(self)

    def __str__(self) -> str:
        return self.token


class LongPathStore(Protocol):
    def put(self, digest: str, token: str) -> None: ...

    def get(self, digest: str) -> Optional[str]: ...


class MemoryLongPathStore:
    def __init__(self) -> None:
        self._data: dict[str, str] = {}

    def put(self, digest: str, token: str) -> None:
        self._data[digest] = token

    def get(self, digest: str) -> Optional[str]:
        return self._data.get(digest)


class SqliteLongPathStore:
    """Long-path entries persisted in a single sqlite table."""

    def __init__(self, path: str) -> None:
        self._conn = sqlite3.connect(path, check_same_thread=False)
        self._conn.execute(
            "CREATE TABLE IF NOT EXISTS longpath (digest TEXT PRIMARY KEY, token TEXT NOT NULL)"
        )
        self._conn.commit()

    def put(self, digest: str, token: str) -> None:
        self._conn.execute("INSERT OR IGNORE INTO longpath VALUES (?, ?)", (digest, token))
        self._conn.commit()

    def get(self, digest: str) -> Optional[str]:
        row = self._conn.execute("SELECT token FROM longpath WHERE digest = ?", (digest,)).fetchone()
        return row[0] if row else None

    def close(self) -> None:
        self._conn.close()


class LongPathTable:
    def __init__(self, store: Optional[LongPathStore] = None) -> None:
        self.store = store if store is not None else MemoryLongPathStore()
        self._lock = threading.Lock()

    def put(self, token: str) -> str:
        digest = digest_token(token)
        with self._lock:
            self.store.put(digest, token)
        return digest

    def get(self, digest: str) -> Optional[str]:
        with self._lock:
            return self.store.get(digest)


def digest_token(token: str) -> str:
    if not token:
        raise ValueError("cannot digest an empty token")
    return hashlib.blake2b(token.encode("ascii"), digest_size=32).hexdigest()


def _parse_plain(text: str) -> Entity:
    if not text:
        raise MalformedToken("empty CarvPath token")
    fragments = []
    parts = text.split("_")
    for part in parts:
        m = _FRAGMENT_RE.fullmatch(part)
        if m is None:
            raise MalformedToken(f"bad fragment {part!r} in {text!r}")
        if m["sparse"] is not None:
            frag = Fragment.sparse(int(m["sparse"]))
        else:
            frag = Fragment.data(int(m["off"]), int(m["size"]))
            if frag.end > MAX_ARCHIVE_OFFSET:
                raise MalformedToken(f"fragment {part!r} overflows the archive address range")
        if frag.size == 0 and not (len(parts) == 1 and not frag.is_sparse):
            raise MalformedToken(f"zero-size fragment {part!r} in {text!r}")
        fragments.append(frag)
    return Entity.of(fragments)


def parse_token(text: str, table: Optional[LongPathTable] = None) -> Entity:
    """Parse one nesting level, resolving ``D<digest>`` through *table*."""
    if text.startswith("D"):
        m = _DIGEST_RE.fullmatch(text)
        if m is None:
            raise MalformedToken(f"bad digest token {text!r}")
        stored = table.get(m[1]) if table is not None else None
        if stored is None:
            raise UnknownDigest(text)
        return _parse_plain(stored)
    return _parse_plain(text)


def serialize(e: Entity, table: Optional[LongPathTable] = None) -> str:
    token = e.token
    if len(token) > LONG_PATH_THRESHOLD:
        if table is None:
            raise ValueError("long CarvPath token needs a LongPathTable")
        return "D" + table.put(token)
    return token


def split_extension(name: str) -> tuple[str, str]:
    """Split ``"0+10.gif"`` into ``("0+10", ".gif")``; tokens never contain dots."""
    token, dot, ext = name.partition(".")
    return token, dot + ext


def parse_path(path: str, table: Optional[LongPathTable] = None) -> Entity:
    """Parse a ``/``-nested CarvPath (extension on the last level ignored) and flatten it."""
    levels = [lvl for lvl in path.strip("/").split("/")]
    if not levels or not levels[-1]:
        raise MalformedToken(f"empty CarvPath {path!r}")
    levels[-1] = split_extension(levels[-1])[0]
    result = parse_token(levels[0], table)
    for level in levels[1:]:
        result = flatten(result, parse_token(level, table))
    return result


def byte_set(e: Entity) -> ByteSet:
    return ByteSet((f.offset, f.end) for f in e.fragments if not f.is_sparse)


def flatten(parent: Entity, child: Entity) -> Entity:
    """Map *child*, expressed in *parent*'s logical byte space, onto the archive."""
    frags = parent.fragments
    starts = [0, *accumulate(f.size for f in frags)][:-1]
    total = parent.total_size
    out: list[Fragment] = []
    for cf in child.fragments:
        if cf.is_sparse:
            out.append(cf)
            continue
        pos, end = cf.offset, cf.end
        if end > total or (cf.size == 0 and pos > total):
            raise ChildOutOfBounds(f"{cf.token} exceeds parent size {total}")
        i = bisect_right(starts, pos) - 1
        while pos < end:
            pf = frags[i]
            rel = pos - starts[i]
            n = min(end - pos, pf.size - rel)
            out.append(Fragment.sparse(n) if pf.is_sparse else Fragment.data(pf.offset + rel, n))
            pos += n
            i += 1
    return Entity.of(out)
