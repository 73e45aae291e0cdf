"""Opportunistic BLAKE2b hashing of hot entities.

Each hot entity carries an incremental hash context and an entity-relative
offset. Archive I/O that happens to cover the next byte an entity still needs
advances that entity's hash; nothing is ever read just for hashing, except by
:meth:`HashCollection.secondary_sweep`, which only touches page-resident data.
"""

from __future__ import annotations

import hashlib
import threading
from bisect import bisect_left, insort
from itertools import accumulate
from typing import Callable, Optional, Protocol

from .carvpath import Entity
from .errors import DuplicateEntity, UnknownEntity

DIGEST_SIZE = 32


def blake2b_hex(data: bytes = b"") -> str:
    return hashlib.blake2b(data, digest_size=DIGEST_SIZE).hexdigest()


class Residency(Protocol):
    def resident_prefix(self, archive_offset: int, length: int) -> int: ...


class HashState:
    def __init__(self, entity: Entity) -> None:
        self.entity = entity
        self.context = hashlib.blake2b(digest_size=DIGEST_SIZE)
        self.offset = 0
        self.result: Optional[str] = None
        self._starts = [0, *accumulate(f.size for f in entity.fragments)]
        self._index = 0  # fragment holding self.offset
        self._skip_sparse()

    @property
    def total_size(self) -> int:
        return self._starts[-1]

    def _skip_sparse(self) -> None:
        frags = self.entity.fragments
        while self._index < len(frags):
            frag = frags[self._index]
            if self.offset >= self._starts[self._index + 1]:
                self._index += 1
                continue
            if not frag.is_sparse:
                break
            n = self._starts[self._index + 1] - self.offset
            self.context.update(bytes(n))
            self.offset += n
            self._index += 1
        if self.result is None and self.offset == self.total_size:
            self.result = self.context.hexdigest()

    def next_needed(self) -> Optional[int]:
        """Archive position of the next unhashed data byte."""
        if self.result is not None:
            return None
        frag = self.entity.fragments[self._index]
        return frag.offset + (self.offset - self._starts[self._index])

    def remaining_in_fragment(self) -> int:
        return self._starts[self._index + 1] - self.offset

    def consume(self, archive_offset: int, data: bytes | memoryview) -> int:
        """Take bytes from a chunk while it covers the next needed byte; returns bytes taken."""
        chunk_end = archive_offset + len(data)
        taken = 0
        while True:
            pos = self.next_needed()
            if pos is None or not archive_offset <= pos < chunk_end:
                return taken
            n = min(self.remaining_in_fragment(), chunk_end - pos)
            rel = pos - archive_offset
            self.context.update(data[rel : rel + n])
            self.offset += n
            taken += n
            self._skip_sparse()


class HashCollection:
    def __init__(self) -> None:
        self.states: dict[str, HashState] = {}
        self.completed: dict[str, str] = {}
        self._by_needed: dict[int, set[str]] = {}
        self._needed_keys: list[int] = []
        self.version = 0
        self._lock = threading.RLock()

    def __contains__(self, e: Entity) -> bool:
        return e.token in self.states

    def __len__(self) -> int:
        return len(self.states)

    def _index_add(self, key: str, state: HashState) -> None:
        pos = state.next_needed()
        if pos is None:
            return
        bucket = self._by_needed.get(pos)
        if bucket is None:
            bucket = self._by_needed[pos] = set()
            insort(self._needed_keys, pos)
        bucket.add(key)

    def _index_remove(self, key: str, state: HashState) -> None:
        pos = state.next_needed()
        if pos is None:
            return
        bucket = self._by_needed[pos]
        bucket.discard(key)
        if not bucket:
            del self._by_needed[pos]
            del self._needed_keys[bisect_left(self._needed_keys, pos)]

    def _state(self, e: Entity) -> HashState:
        try:
            return self.states[e.token]
        except KeyError:
            raise UnknownEntity(e.token) from None

    def open_state(self, e: Entity) -> None:
        with self._lock:
            key = e.token
            if key in self.states:
                raise DuplicateEntity(key)
            state = HashState(e)
            self.states[key] = state
            self._index_add(key, state)
            self.version += 1

    def feed_chunk(self, archive_offset: int, data: bytes | memoryview) -> None:
        if not data:
            raise ValueError("empty chunk")
        view = memoryview(data)
        end = archive_offset + len(view)
        with self._lock:
            lo = bisect_left(self._needed_keys, archive_offset)
            hi = bisect_left(self._needed_keys, end, lo)
            keys = [k for pos in self._needed_keys[lo:hi] for k in self._by_needed[pos]]
            for key in keys:
                state = self.states[key]
                self._index_remove(key, state)
                if state.consume(archive_offset, view):
                    self.version += 1
                self._index_add(key, state)

    def hashing_offset(self, e: Entity) -> int:
        with self._lock:
            return self._state(e).offset

    def result(self, e: Entity) -> Optional[str]:
        with self._lock:
            return self._state(e).result

    def next_needed_archive_offset(self, e: Entity) -> Optional[int]:
        with self._lock:
            return self._state(e).next_needed()

    def secondary_sweep(
        self,
        e: Entity,
        residency: Residency,
        reader: Callable[[int, int], bytes],
    ) -> int:
        """Hash leading page-resident data of *e*; stops at the first non-resident byte."""
        with self._lock:
            state = self._state(e)
            before = state.offset
            while True:
                pos = state.next_needed()
                if pos is None:
                    break
                n = residency.resident_prefix(pos, state.remaining_in_fragment())
                if n <= 0:
                    break
                offset = state.offset
                self.feed_chunk(pos, reader(pos, n))
                if state.offset == offset:
                    break
            return state.offset - before

    def drop_state(self, e: Entity) -> Optional[str]:
        with self._lock:
            state = self._state(e)
            self._index_remove(e.token, state)
            del self.states[e.token]
            self.version += 1
            if state.result is not None:
                self.completed[e.token] = state.result
            return state.result

    def known_digest(self, e: Entity) -> Optional[str]:
        """Digest of a live completed state, or one remembered from an earlier hot period."""
        with self._lock:
            state = self.states.get(e.token)
            if state is not None:
                return state.result
            return self.completed.get(e.token)
